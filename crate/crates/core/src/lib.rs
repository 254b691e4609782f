//! Dual-triplet metric learning for unsupervised domain adaptation.
//!
//! An embedding network is first trained with an ordinary triplet loss on a
//! labeled source domain. It is then adapted to an unlabeled target domain:
//! statistics of the source within-class and between-class distances define
//! mining windows, the windows pseudo-label target pairwise distances, and a
//! dual loss (source triplets plus target distance triplets) is minimized
//! with one shared network.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`]: dense MLP with hand-written backpropagation, SGD, model JSON
//!   and a finite-difference gradient checker.
//! * [`datasets`]: feature CSV ingestion, a seeded synthetic two-domain
//!   generator and identity-disjoint splits.
//! * [`metric`]: pairwise distances, the three losses and their gradients.
//! * [`mining`]: distance statistics, mining windows and pseudo-labeling.
//! * [`trainer`]: P×K batch sampling, source pretraining and adaptation.
//! * [`eval`]: ROC AUC, rank-1, TPR at a fixed FAR, histograms and the
//!   dissimilarity-based outer classifier.
//! * [`pipeline`]: the seeded end-to-end benchmark used by the examples and
//!   the acceptance tests.
//! * [`cli`]: the `dtml` command-line front end.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod cli;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod metric;
pub mod mining;
pub mod numerics;
pub mod pipeline;
pub mod trainer;

pub use error::{Error, Result};

/// Deterministic generator used for every random draw in a run.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the run generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
