//! Dense linear algebra, the embedding MLP and its optimizer.
//!
//! Everything runs in `f64`. The network is small (a handful of dense
//! layers over precomputed features), so plain row-major buffers and scalar
//! loops are enough and keep results bit-reproducible.

mod gradcheck;
mod linalg;
mod mlp;
mod model_json;
mod sgd;

pub use gradcheck::{grad_check, relative_error};
pub use linalg::{dot, euclidean, l2_norm, Matrix};
pub use mlp::{Activation, Gradients, Layer, LayerGrad, MlpNet, Tape};
pub use model_json::{ModelDocument, FORMAT_VERSION};
pub use sgd::{Sgd, SgdConfig};
