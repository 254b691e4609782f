//! Mutual supervision: source distance statistics, mining windows and
//! pseudo-labeling of target pairwise distances.
//!
//! For a labeled source batch the within-class (WC) and between-class (BC)
//! distance populations give `(μ_wc, σ_wc)` and `(μ_bc, σ_bc)`. The mining
//! windows are
//!
//! ```text
//! WC = [μ_wc − σ_wc, μ_wc]        BC = [μ_bc, μ_bc + σ_bc]
//! ```
//!
//! and a target distance falling in one of them is labeled accordingly.
//! When the two intervals intersect, the intersection is removed from both.

use rand::seq::SliceRandom;

use crate::metric::TargetDistancePair;
use crate::numerics::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairLabel {
    Within,
    Between,
}

/// Population mean and standard deviation of both distance populations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceStats {
    pub mu_wc: f64,
    pub sigma_wc: f64,
    pub mu_bc: f64,
    pub sigma_bc: f64,
    pub n_wc: usize,
    pub n_bc: usize,
}

/// Mean and population standard deviation (divide by `n`). The sum is
/// shifted by the first value so constant inputs give exactly zero spread.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn distance_stats(distances: &[(f64, PairLabel)]) -> Result<DistanceStats> {
    let pick = |want: PairLabel| -> Vec<f64> {
        distances
            .iter()
            .filter(|(_, l)| *l == want)
            .map(|(d, _)| *d)
            .collect()
    };
    let wc = pick(PairLabel::Within);
    let bc = pick(PairLabel::Between);
    for (label, v) in [("within-class", &wc), ("between-class", &bc)] {
        if v.len() < 2 {
            return Err(Error::InsufficientStatistics {
                label,
                count: v.len(),
            });
        }
    }
    let (mu_wc, sigma_wc) = mean_std(&wc);
    let (mu_bc, sigma_bc) = mean_std(&bc);
    Ok(DistanceStats {
        mu_wc,
        sigma_wc,
        mu_bc,
        sigma_bc,
        n_wc: wc.len(),
        n_bc: bc.len(),
    })
}

/// Labeled distances of all unordered pairs `i < j` of a distance matrix.
pub fn labeled_pair_distances<L: PartialEq>(dist: &Matrix, labels: &[L]) -> Vec<(f64, PairLabel)> {
    let n = labels.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let l = if labels[i] == labels[j] {
                PairLabel::Within
            } else {
                PairLabel::Between
            };
            out.push((dist.get(i, j), l));
        }
    }
    out
}

/// Real interval with independently open or closed ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            lo_closed: true,
            hi_closed: true,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    /// Intersection of two closed intervals, if any.
    fn closed_intersection(a: &Interval, b: &Interval) -> Option<Interval> {
        let lo = a.lo.max(b.lo);
        let hi = a.hi.min(b.hi);
        (lo <= hi).then(|| Interval::closed(lo, hi))
    }

    /// `self \ cut` for a closed `self` and a closed `cut`; at most two pieces.
    fn minus(&self, cut: &Interval) -> Vec<Interval> {
        let mut out = Vec::new();
        let left = Interval {
            lo: self.lo,
            hi: cut.lo.min(self.hi),
            lo_closed: self.lo_closed,
            hi_closed: false,
        };
        let right = Interval {
            lo: cut.hi.max(self.lo),
            hi: self.hi,
            lo_closed: false,
            hi_closed: self.hi_closed,
        };
        for piece in [left, right] {
            if !piece.is_empty() {
                out.push(piece);
            }
        }
        out
    }
}

/// A window is a union of disjoint intervals; a single closed interval
/// unless overlap exclusion cut it.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pieces: Vec<Interval>,
}

impl Window {
    pub fn pieces(&self) -> &[Interval] {
        &self.pieces
    }

    pub fn contains(&self, x: f64) -> bool {
        self.pieces.iter().any(|p| p.contains(x))
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiningWindows {
    /// `[μ_wc − σ_wc, μ_wc]` before overlap exclusion.
    pub wc_interval: Interval,
    /// `[μ_bc, μ_bc + σ_bc]` before overlap exclusion.
    pub bc_interval: Interval,
    /// Intersection removed from both windows, when the intervals meet.
    pub overlap: Option<Interval>,
    pub wc: Window,
    pub bc: Window,
}

pub fn mining_windows(stats: &DistanceStats) -> MiningWindows {
    let wc_interval = Interval::closed(stats.mu_wc - stats.sigma_wc, stats.mu_wc);
    let bc_interval = Interval::closed(stats.mu_bc, stats.mu_bc + stats.sigma_bc);
    let overlap = Interval::closed_intersection(&wc_interval, &bc_interval);
    let (wc, bc) = match &overlap {
        None => (vec![wc_interval], vec![bc_interval]),
        Some(cut) => {
            log::warn!(
                "mining windows overlap on [{}, {}] (mu_wc={}, mu_bc={}); excluding it from both",
                cut.lo,
                cut.hi,
                stats.mu_wc,
                stats.mu_bc
            );
            (wc_interval.minus(cut), bc_interval.minus(cut))
        }
    };
    MiningWindows {
        wc_interval,
        bc_interval,
        overlap,
        wc: Window { pieces: wc },
        bc: Window { pieces: bc },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPair {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PseudoLabeledPairs {
    pub wc: Vec<LabeledPair>,
    pub bc: Vec<LabeledPair>,
}

impl PseudoLabeledPairs {
    pub fn len(&self) -> usize {
        self.wc.len() + self.bc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wc.is_empty() && self.bc.is_empty()
    }
}

/// Labels every unordered pair `i < j` (lexicographic scan) whose distance
/// falls inside a window. The matrix carries no identity information.
pub fn pseudo_label(distances: &Matrix, windows: &MiningWindows) -> PseudoLabeledPairs {
    let n = distances.rows();
    let mut out = PseudoLabeledPairs::default();
    for i in 0..n {
        for j in i + 1..n {
            let d = distances.get(i, j);
            let pair = LabeledPair { i, j, distance: d };
            if windows.wc.contains(d) {
                out.wc.push(pair);
            } else if windows.bc.contains(d) {
                out.bc.push(pair);
            }
        }
    }
    out
}

/// Shuffles both lists, truncates them to the shorter length and zips them
/// into target terms.
pub fn constitute_target_pairs(
    pairs: &PseudoLabeledPairs,
    rng: &mut crate::Rng,
) -> Vec<TargetDistancePair> {
    let mut wc = pairs.wc.clone();
    let mut bc = pairs.bc.clone();
    wc.shuffle(rng);
    bc.shuffle(rng);
    wc.iter()
        .zip(&bc)
        .map(|(w, b)| TargetDistancePair {
            wc: (w.i, w.j),
            bc: (b.i, b.j),
        })
        .collect()
}
