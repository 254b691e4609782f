//! Replaces the mined target pairs with ground-truth WC/BC pairs while
//! keeping the dual-triplet update unchanged. The gap between this run and
//! the unsupervised one measures how much the mining windows leave on the
//! table.
//!
//!     cargo run --release --example supervised_upper_bound -- 0.8 1.0 90

use dtml::datasets::PlaneRotation;
use dtml::eval::{evaluate_embedded, EmbeddedSet};
use dtml::metric::{pairwise_distances, weighted_batch_loss_and_grads, TargetDistancePair, TermWeights};
use dtml::numerics::{MlpNet, Sgd};
use dtml::pipeline::{prepare, BenchmarkConfig, EvalProtocol};
use dtml::trainer::{make_target_batch, mine_source_triplets_from_distances, train_source, SourceSampler};
use rand::seq::SliceRandom;

fn main() -> dtml::Result<()> {
    let arg = |i: usize, default: f64| -> f64 {
        std::env::args().nth(i).map_or(default, |a| a.parse().expect("numeric argument"))
    };
    let mut cfg = BenchmarkConfig::default();
    cfg.synth.intra_class_sigma = arg(1, 0.8);
    cfg.train.alpha = arg(2, 1.0);
    let degrees = arg(3, 90.0);
    // Rotate all 16 disjoint coordinate planes so the shift is not benign.
    cfg.synth.shift.rotations = (0..cfg.synth.dim / 2)
        .map(|k| PlaneRotation { axes: (2 * k, 2 * k + 1), degrees })
        .collect();
    cfg.protocol = EvalProtocol::Transductive;

    let data = prepare(&cfg)?;
    let source = train_source(&cfg.train, &data.source_train)?;
    let calib = data.target_calib_labeled()?;
    let classes = calib.class_indices()?;
    let auc = |net: &MlpNet| -> dtml::Result<f64> {
        Ok(evaluate_embedded(&EmbeddedSet::new(net, &data.target_test)?, &cfg.fars)?.auc)
    };
    println!("source-only target auc {:.3}", auc(&source.net)?);

    let sampler = SourceSampler::new(&data.source_train)?;
    let mut rng = dtml::seeded_rng(cfg.train.seed);
    let mut net = source.net.clone();
    let mut sgd = Sgd::new(cfg.train.sgd_config())?;
    let t = &cfg.train;
    for epoch in 1..=t.epochs {
        for _ in 0..data.source_train.len().div_ceil(t.batch_size()) {
            let sb = sampler.sample(t.persons_per_batch, t.images_per_person, &mut rng)?;
            let tb = make_target_batch(calib.len(), t.target_batch(), &mut rng)?;
            let s_rows: Vec<&[f64]> = sb.indices.iter().map(|&i| data.source_train.features(i)).collect();
            let t_rows: Vec<&[f64]> = tb.iter().map(|&i| calib.features(i)).collect();
            let s_emb = net.embed_all(s_rows.iter().copied())?;
            let triplets = mine_source_triplets_from_distances(&pairwise_distances(&s_emb), &sb.classes, t.alpha);

            let (mut wc, mut bc) = (Vec::new(), Vec::new());
            for i in 0..tb.len() {
                for j in i + 1..tb.len() {
                    if classes[tb[i]] == classes[tb[j]] { wc.push((i, j)) } else { bc.push((i, j)) }
                }
            }
            wc.shuffle(&mut rng);
            bc.shuffle(&mut rng);
            let pairs: Vec<TargetDistancePair> =
                wc.iter().zip(&bc).map(|(&wc, &bc)| TargetDistancePair { wc, bc }).collect();
            let weights = TermWeights { source: 1.0, target: t.lambda };
            let (_, g) = weighted_batch_loss_and_grads(&net, &s_rows, &triplets, &t_rows, &pairs, t.alpha, weights)?;
            sgd.step(&mut net, &g)?;
        }
        if epoch % 10 == 0 {
            println!("epoch {epoch:2}  target auc {:.3}", auc(&net)?);
        }
    }
    Ok(())
}
