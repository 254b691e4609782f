//! Versioned JSON model document.
//!
//! ```json
//! {"format_version":1,"dims":[32,64,16],"activations":["relu","identity"],
//!  "normalize_output":true,"layers":[{"weights":[...],"bias":[...]}, ...]}
//! ```
//!
//! Weights are row-major `out_dim × in_dim`. Floats are written in shortest
//! round-trip form and parsed with correct rounding, so a save/load cycle
//! reproduces every `f64` exactly.

use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use super::mlp::{Activation, Layer, MlpNet};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format_version: u32,
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub normalize_output: bool,
    pub layers: Vec<LayerDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDocument {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<&MlpNet> for ModelDocument {
    fn from(net: &MlpNet) -> Self {
        ModelDocument {
            format_version: FORMAT_VERSION,
            dims: net.dims(),
            activations: net.layers().iter().map(Layer::activation).collect(),
            normalize_output: net.normalize_output(),
            layers: net
                .layers()
                .iter()
                .map(|l| LayerDocument {
                    weights: l.weights().as_slice().to_vec(),
                    bias: l.bias().to_vec(),
                })
                .collect(),
        }
    }
}

impl ModelDocument {
    pub fn into_net(self) -> Result<MlpNet> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let n = self.layers.len();
        if self.dims.len() != n + 1 || self.activations.len() != n {
            return Err(Error::Model(format!(
                "{} layers need {} dims and {} activations, found {} and {}",
                n,
                n + 1,
                n,
                self.dims.len(),
                self.activations.len()
            )));
        }
        let layers = self
            .layers
            .into_iter()
            .zip(self.activations)
            .zip(self.dims.windows(2))
            .enumerate()
            .map(|(k, ((doc, act), d))| {
                let w = Matrix::from_row_major(d[1], d[0], doc.weights).ok_or_else(|| {
                    Error::Model(format!("layer {k}: weights do not match {}×{}", d[1], d[0]))
                })?;
                Layer::new(w, doc.bias, act).map_err(|e| Error::Model(format!("layer {k}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        MlpNet::new(layers, self.normalize_output)
    }
}

impl MlpNet {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(&ModelDocument::from(self))
            .expect("model document always serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        doc.into_net()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn document_fields() {
        let mut rng = crate::seeded_rng(1);
        let net = MlpNet::init(&[3, 4, 2], true, &mut rng).unwrap();
        let v: serde_json::Value = serde_json::from_str(&net.to_json()).unwrap();
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["dims"], serde_json::json!([3, 4, 2]));
        assert_eq!(v["activations"], serde_json::json!(["relu", "identity"]));
        assert_eq!(v["normalize_output"], true);
        assert_eq!(v["layers"][0]["weights"].as_array().unwrap().len(), 12);
        assert_eq!(v["layers"][1]["bias"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn rejects_bad_documents() {
        let mut rng = crate::seeded_rng(1);
        let net = MlpNet::init(&[3, 2], false, &mut rng).unwrap();
        let good = net.to_json();
        let bumped = good.replace("\"format_version\":1", "\"format_version\":2");
        assert!(MlpNet::from_json(&bumped).is_err());
        let wrong_dims = good.replace("\"dims\":[3,2]", "\"dims\":[2,2]");
        assert!(MlpNet::from_json(&wrong_dims).is_err());
        let extra = good.replacen('{', "{\"extra\":0,", 1);
        assert!(MlpNet::from_json(&extra).is_err());
    }

    proptest! {
        #[test]
        fn save_load_is_value_exact(seed in any::<u64>(), scale in 1e-300f64..1e300) {
            let mut rng = crate::seeded_rng(seed);
            let mut net = MlpNet::init(&[5, 7, 3], seed % 2 == 0, &mut rng).unwrap();
            let p: Vec<f64> = net.params().iter().map(|v| v * scale).collect();
            net.set_params(&p).unwrap();
            let back = MlpNet::from_json(&net.to_json()).unwrap();
            prop_assert_eq!(back.params(), net.params());
            prop_assert_eq!(back.to_json(), net.to_json());
        }
    }
}
