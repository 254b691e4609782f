//! Pairwise distances, the source and target triplet hinges, the dual loss
//! and the gradient of a batch objective with respect to the network.
//!
//! Distances are plain (non-squared) Euclidean norms. The gradient of
//! `‖u − v‖` is `(u − v)/‖u − v‖`, taken as zero when the distance is below
//! `1e-12`.

use crate::numerics::{euclidean, Gradients, Matrix, MlpNet, Tape};
use crate::{Error, Result};

/// Distances below this are treated as zero when differentiating.
pub const DISTANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Margin shared by the source and target hinges.
    pub alpha: f64,
    /// Weight of the target term.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.2,
            lambda: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Indices into a source batch: anchor and positive share an identity, the
/// negative does not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourceTriplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// One target term: a pseudo-labeled within-class pair and a pseudo-labeled
/// between-class pair, as indices into a target batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TargetDistancePair {
    pub wc: (usize, usize),
    pub bc: (usize, usize),
}

/// `D[i][j] = ‖xᵢ − xⱼ‖₂`; symmetric with a zero diagonal.
pub fn pairwise_distances<V: AsRef<[f64]>>(points: &[V]) -> Matrix {
    let n = points.len();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = euclidean(points[i].as_ref(), points[j].as_ref());
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    d
}

#[inline]
fn hinge(v: f64) -> f64 {
    v.max(0.0)
}

/// `max(d_ap − d_an + α, 0)`
pub fn source_triplet_loss(d_ap: f64, d_an: f64, alpha: f64) -> f64 {
    hinge(d_ap - d_an + alpha)
}

/// `max(d_wc − d_bc + α, 0)` over pseudo-labeled target distances.
pub fn target_triplet_loss(d_wc: f64, d_bc: f64, alpha: f64) -> f64 {
    hinge(d_wc - d_bc + alpha)
}

/// `L_s + λ·L_t`
pub fn dual_loss(source: f64, target: f64, lambda: f64) -> f64 {
    source + lambda * target
}

/// Loss values of one batch. `source` and `target` are means over the
/// hinge-active terms (zero when none are active).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchLoss {
    pub source: f64,
    pub target: f64,
    pub total: f64,
    pub active_triplets: usize,
    pub active_pairs: usize,
}

/// Multipliers of the two terms in the optimized objective. A zero weight
/// removes the term from the gradient entirely; its value is still reported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermWeights {
    pub source: f64,
    pub target: f64,
}

/// Dual loss `L_s + λ·L_t` of a batch and its gradient.
pub fn batch_loss_and_grads(
    net: &MlpNet,
    source: &[&[f64]],
    triplets: &[SourceTriplet],
    target: &[&[f64]],
    pairs: &[TargetDistancePair],
    cfg: &LossConfig,
) -> Result<(BatchLoss, Gradients)> {
    let weights = TermWeights {
        source: 1.0,
        target: cfg.lambda,
    };
    weighted_batch_loss_and_grads(net, source, triplets, target, pairs, cfg.alpha, weights)
}

/// `weights.source·L_s + weights.target·L_t` and its gradient.
pub fn weighted_batch_loss_and_grads(
    net: &MlpNet,
    source: &[&[f64]],
    triplets: &[SourceTriplet],
    target: &[&[f64]],
    pairs: &[TargetDistancePair],
    alpha: f64,
    weights: TermWeights,
) -> Result<(BatchLoss, Gradients)> {
    check_indices(triplets, source.len(), pairs, target.len())?;
    let src = forward_all(net, source)?;
    let tgt = forward_all(net, target)?;
    let dim = net.output_dim();

    let mut src_grad = vec![vec![0.0; dim]; source.len()];
    let mut tgt_grad = vec![vec![0.0; dim]; target.len()];

    // Source term.
    let mut active = Vec::new();
    let mut source_sum = 0.0;
    for t in triplets {
        let (a, p, n) = (&src[t.anchor].0, &src[t.positive].0, &src[t.negative].0);
        let l = source_triplet_loss(euclidean(a, p), euclidean(a, n), alpha);
        if l > 0.0 {
            source_sum += l;
            active.push(*t);
        }
    }
    let source_loss = mean(source_sum, active.len());
    if weights.source != 0.0 && !active.is_empty() {
        let c = weights.source / active.len() as f64;
        for t in &active {
            let u_ap = unit_diff(&src[t.anchor].0, &src[t.positive].0);
            let u_an = unit_diff(&src[t.anchor].0, &src[t.negative].0);
            axpy(&mut src_grad[t.anchor], c, &u_ap);
            axpy(&mut src_grad[t.anchor], -c, &u_an);
            axpy(&mut src_grad[t.positive], -c, &u_ap);
            axpy(&mut src_grad[t.negative], c, &u_an);
        }
    }

    // Target term.
    let mut active_pairs = Vec::new();
    let mut target_sum = 0.0;
    for q in pairs {
        let d_wc = euclidean(&tgt[q.wc.0].0, &tgt[q.wc.1].0);
        let d_bc = euclidean(&tgt[q.bc.0].0, &tgt[q.bc.1].0);
        let l = target_triplet_loss(d_wc, d_bc, alpha);
        if l > 0.0 {
            target_sum += l;
            active_pairs.push(*q);
        }
    }
    let target_loss = mean(target_sum, active_pairs.len());
    if weights.target != 0.0 && !active_pairs.is_empty() {
        let c = weights.target / active_pairs.len() as f64;
        for q in &active_pairs {
            let u_wc = unit_diff(&tgt[q.wc.0].0, &tgt[q.wc.1].0);
            let u_bc = unit_diff(&tgt[q.bc.0].0, &tgt[q.bc.1].0);
            axpy(&mut tgt_grad[q.wc.0], c, &u_wc);
            axpy(&mut tgt_grad[q.wc.1], -c, &u_wc);
            axpy(&mut tgt_grad[q.bc.0], -c, &u_bc);
            axpy(&mut tgt_grad[q.bc.1], c, &u_bc);
        }
    }

    let total = weights.source * source_loss + weights.target * target_loss;
    if !total.is_finite() {
        return Err(Error::NonFinite("batch loss".into()));
    }

    let mut grads = Gradients::zeros_for(net);
    for ((_, tape), g) in src.iter().zip(&src_grad).chain(tgt.iter().zip(&tgt_grad)) {
        if g.iter().any(|&v| v != 0.0) {
            net.accumulate_backward(tape, g, &mut grads)?;
        }
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("batch gradient".into()));
    }
    Ok((
        BatchLoss {
            source: source_loss,
            target: target_loss,
            total,
            active_triplets: active.len(),
            active_pairs: active_pairs.len(),
        },
        grads,
    ))
}

fn forward_all(net: &MlpNet, xs: &[&[f64]]) -> Result<Vec<(Vec<f64>, Tape)>> {
    xs.iter().map(|x| net.forward(x)).collect()
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// `(u − v)/‖u − v‖`, or zero at (near-)coincident points.
fn unit_diff(u: &[f64], v: &[f64]) -> Vec<f64> {
    let d = euclidean(u, v);
    if d < DISTANCE_EPS {
        return vec![0.0; u.len()];
    }
    u.iter().zip(v).map(|(a, b)| (a - b) / d).collect()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn check_indices(
    triplets: &[SourceTriplet],
    n_source: usize,
    pairs: &[TargetDistancePair],
    n_target: usize,
) -> Result<()> {
    if let Some(t) = triplets
        .iter()
        .find(|t| t.anchor.max(t.positive).max(t.negative) >= n_source)
    {
        return Err(Error::OutOfRange(format!(
            "triplet {t:?} indexes a source batch of {n_source}"
        )));
    }
    if let Some(q) = pairs
        .iter()
        .find(|q| q.wc.0.max(q.wc.1).max(q.bc.0).max(q.bc.1) >= n_target)
    {
        return Err(Error::OutOfRange(format!(
            "target pair {q:?} indexes a target batch of {n_target}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, Activation, Layer};
    use proptest::prelude::*;
    use rand::Rng as _;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn distances_three_four_five() {
        let d = pairwise_distances(&[vec![0.0, 0.0], vec![3.0, 4.0]]);
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(1, 0), 5.0);
        assert_eq!(d.get(0, 0), 0.0);
        let same = pairwise_distances(&[vec![1.5, -2.0], vec![1.5, -2.0]]);
        assert_eq!(same.get(0, 1), 0.0);
    }

    #[test]
    fn distances_match_scalar_loop() {
        let mut rng = crate::seeded_rng(9);
        let pts: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..4).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let d = pairwise_distances(&pts);
        for i in 0..10 {
            for j in 0..10 {
                let mut s = 0.0;
                for k in 0..4 {
                    let t = pts[i][k] - pts[j][k];
                    s += t * t;
                }
                assert!((d.get(i, j) - s.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn source_hinge_examples() {
        assert!(close(source_triplet_loss(0.9, 0.5, 0.2), 0.6));
        assert_eq!(source_triplet_loss(0.1, 0.9, 0.2), 0.0);
        assert!(close(source_triplet_loss(0.5, 0.5, 0.2), 0.2));
    }

    #[test]
    fn target_hinge_examples() {
        assert_eq!(target_triplet_loss(0.4, 1.0, 0.2), 0.0);
        assert!(close(target_triplet_loss(1.0, 0.4, 0.2), 0.8));
        for (a, b) in [(0.3, 0.7), (1.2, 0.1), (0.5, 0.5)] {
            assert_eq!(target_triplet_loss(a, b, 0.2), source_triplet_loss(a, b, 0.2));
        }
    }

    #[test]
    fn dual_loss_examples() {
        assert!(close(dual_loss(0.3, 0.2, 1.0), 0.5));
        assert_eq!(dual_loss(0.3, 0.2, 0.0), 0.3);
        assert_eq!(dual_loss(0.3, 0.0, 1.0), 0.3);
    }

    proptest! {
        #[test]
        fn losses_nonnegative_and_additive(
            a in 0.0f64..2.0, b in 0.0f64..2.0, c in 0.0f64..2.0, d in 0.0f64..2.0,
            alpha in 1e-3f64..1.0,
        ) {
            let ls = source_triplet_loss(a, b, alpha);
            let lt = target_triplet_loss(c, d, alpha);
            prop_assert!(ls >= 0.0 && lt >= 0.0);
            prop_assert_eq!(dual_loss(ls, lt, 1.0), ls + lt);
            prop_assert!(dual_loss(ls, lt, 0.7) >= 0.0);
        }

        #[test]
        fn distances_symmetric_and_triangle(seed in any::<u64>()) {
            let mut rng = crate::seeded_rng(seed);
            let pts: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let d = pairwise_distances(&pts);
            for i in 0..6 {
                prop_assert_eq!(d.get(i, i), 0.0);
                for j in 0..6 {
                    prop_assert_eq!(d.get(i, j), d.get(j, i));
                    for k in 0..6 {
                        prop_assert!(d.get(i, k) <= d.get(i, j) + d.get(j, k) + 1e-9);
                    }
                }
            }
        }
    }

    fn small_net(seed: u64, normalize: bool) -> MlpNet {
        MlpNet::init(&[3, 5, 4], normalize, &mut crate::seeded_rng(seed)).unwrap()
    }

    fn points(seed: u64, n: usize) -> Vec<Vec<f64>> {
        let mut rng = crate::seeded_rng(seed);
        (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn inactive_triplets_give_zero_loss_and_gradient() {
        let lin = Layer::new(
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            vec![0.0, 0.0],
            Activation::Identity,
        )
        .unwrap();
        let net = MlpNet::new(vec![lin], false).unwrap();
        let src = [vec![0.0, 0.0], vec![0.1, 0.0], vec![5.0, 5.0]];
        let trip = [SourceTriplet {
            anchor: 0,
            positive: 1,
            negative: 2,
        }];
        let (loss, g) =
            batch_loss_and_grads(&net, &refs(&src), &trip, &[], &[], &LossConfig::default())
                .unwrap();
        assert_eq!(loss.total, 0.0);
        assert_eq!(g.max_abs(), 0.0);

        // Pushing the negative further out stays in the dead zone.
        let far = [vec![0.0, 0.0], vec![0.1, 0.0], vec![50.0, 5.0]];
        let (loss, g) =
            batch_loss_and_grads(&net, &refs(&far), &trip, &[], &[], &LossConfig::default())
                .unwrap();
        assert_eq!(loss.total, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn single_triplet_equals_hinge_of_its_distances() {
        let net = small_net(1, true);
        let src = points(2, 3);
        let trip = [SourceTriplet {
            anchor: 0,
            positive: 1,
            negative: 2,
        }];
        let cfg = LossConfig {
            alpha: 1.5,
            lambda: 1.0,
        };
        let (loss, _) = batch_loss_and_grads(&net, &refs(&src), &trip, &[], &[], &cfg).unwrap();
        let e: Vec<Vec<f64>> = src.iter().map(|x| net.embed(x).unwrap()).collect();
        let expect = source_triplet_loss(euclidean(&e[0], &e[1]), euclidean(&e[0], &e[2]), 1.5);
        assert!(expect > 0.0);
        assert_eq!(loss.total, expect);
        assert_eq!(loss.target, 0.0);
    }

    #[test]
    fn out_of_range_indices_rejected() {
        let net = small_net(1, true);
        let src = points(2, 2);
        let trip = [SourceTriplet {
            anchor: 0,
            positive: 1,
            negative: 2,
        }];
        assert!(matches!(
            batch_loss_and_grads(&net, &refs(&src), &trip, &[], &[], &LossConfig::default()),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn coincident_embeddings_have_zero_distance_gradient() {
        assert_eq!(unit_diff(&[1.0, 2.0], &[1.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_weight_terms_do_not_touch_the_gradient() {
        let net = small_net(4, true);
        let src = points(5, 4);
        let tgt = points(6, 6);
        let trip = [SourceTriplet {
            anchor: 0,
            positive: 1,
            negative: 2,
        }];
        let pairs = [TargetDistancePair {
            wc: (0, 1),
            bc: (2, 3),
        }];
        let only_source = weighted_batch_loss_and_grads(
            &net,
            &refs(&src),
            &trip,
            &refs(&tgt),
            &pairs,
            1.8,
            TermWeights {
                source: 1.0,
                target: 0.0,
            },
        )
        .unwrap();
        let no_pairs = weighted_batch_loss_and_grads(
            &net,
            &refs(&src),
            &trip,
            &refs(&tgt),
            &[],
            1.8,
            TermWeights {
                source: 1.0,
                target: 0.0,
            },
        )
        .unwrap();
        assert_eq!(only_source.1, no_pairs.1);
        assert_eq!(only_source.0.total, only_source.0.source);
    }

    #[test]
    fn random_instance_matches_finite_differences() {
        let net = small_net(7, true);
        let src = points(8, 6);
        let tgt = points(9, 6);
        let trip = [
            SourceTriplet {
                anchor: 0,
                positive: 1,
                negative: 3,
            },
            SourceTriplet {
                anchor: 2,
                positive: 0,
                negative: 4,
            },
            SourceTriplet {
                anchor: 5,
                positive: 4,
                negative: 1,
            },
        ];
        let pairs = [
            TargetDistancePair {
                wc: (0, 1),
                bc: (2, 3),
            },
            TargetDistancePair {
                wc: (4, 5),
                bc: (0, 3),
            },
        ];
        let cfg = LossConfig {
            alpha: 1.7,
            lambda: 0.8,
        };
        let (s, t) = (refs(&src), refs(&tgt));
        let (loss, _) = batch_loss_and_grads(&net, &s, &trip, &t, &pairs, &cfg).unwrap();
        assert_eq!(loss.active_triplets, 3);
        assert_eq!(loss.active_pairs, 2);
        let err = grad_check(
            |n| batch_loss_and_grads(n, &s, &trip, &t, &pairs, &cfg).map(|(l, g)| (l.total, g)),
            &net,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "max_rel_err = {err}");
    }
}
