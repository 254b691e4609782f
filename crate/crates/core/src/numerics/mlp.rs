use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::linalg::{l2_norm, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative; the ReLU subgradient at 0 is 0.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// One dense layer `act(W x + b)` with `W` stored `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::DimensionMismatch {
                context: "layer bias",
                expected: weights.rows(),
                got: bias.len(),
            });
        }
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::InvalidNetwork("layer with a zero dimension".into()));
        }
        Ok(Layer {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }
}

/// Multilayer perceptron with an optional unit-length output.
///
/// Invariants checked at construction: adjacent layers chain, all parameters
/// are finite, and the last layer is linear (normalization is applied after
/// it).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    layers: Vec<Layer>,
    normalize_output: bool,
}

/// Intermediate values recorded by [`MlpNet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input to each layer (the network input, then each post-activation).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    /// Norm of the raw output when normalization is on.
    raw_norm: Option<f64>,
    output: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Norm of the output before unit normalization, when it is on.
    pub fn raw_norm(&self) -> Option<f64> {
        self.raw_norm
    }

    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

impl MlpNet {
    pub fn new(layers: Vec<Layer>, normalize_output: bool) -> Result<Self> {
        let last = layers
            .last()
            .ok_or_else(|| Error::InvalidNetwork("network has no layers".into()))?;
        if last.activation != Activation::Identity {
            return Err(Error::InvalidNetwork(
                "final layer activation must be identity".into(),
            ));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(Error::InvalidNetwork(format!(
                    "layer {} expects {} inputs but layer {} produces {}",
                    k + 1,
                    pair[1].in_dim(),
                    k,
                    pair[0].out_dim()
                )));
            }
        }
        let finite = layers.iter().all(|l| {
            l.weights.as_slice().iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        });
        if !finite {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(MlpNet {
            layers,
            normalize_output,
        })
    }

    /// Glorot-uniform weights, zero biases, ReLU on hidden layers and a
    /// linear output layer. `dims` lists the input dimension followed by each
    /// layer's output dimension.
    pub fn init(dims: &[usize], normalize_output: bool, rng: &mut crate::Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidNetwork(
                "need an input dimension and at least one layer".into(),
            ));
        }
        let n_layers = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, d)| {
                let (fan_in, fan_out) = (d[0], d[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                let weights = Matrix::from_row_major(fan_out, fan_in, data)
                    .expect("buffer sized from dims");
                let activation = if k + 1 == n_layers {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                Layer::new(weights, vec![0.0; fan_out], activation)
            })
            .collect::<Result<Vec<_>>>()?;
        MlpNet::new(layers, normalize_output)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn normalize_output(&self) -> bool {
        self.normalize_output
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Input dimension followed by every layer's output dimension.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Parameters flattened layer by layer (weights row-major, then bias).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`MlpNet::params`].
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                context: "flat parameter vector",
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.as_slice().len();
            l.weights.as_mut_slice().copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for l in &self.layers {
            let mut z = l.weights.matvec(&h);
            for (zi, bi) in z.iter_mut().zip(&l.bias) {
                *zi += bi;
            }
            let a = z.iter().map(|&v| l.activation.apply(v)).collect();
            inputs.push(h);
            pre.push(z);
            h = a;
        }
        let raw_norm = if self.normalize_output {
            let n = l2_norm(&h);
            if n == 0.0 {
                return Err(Error::DegenerateEmbedding);
            }
            h.iter_mut().for_each(|v| *v /= n);
            Some(n)
        } else {
            None
        };
        let tape = Tape {
            inputs,
            pre,
            raw_norm,
            output: h.clone(),
        };
        Ok((h, tape))
    }

    /// Forward pass without keeping the tape.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    pub fn embed_all<'a, I>(&self, xs: I) -> Result<Vec<Vec<f64>>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        xs.into_iter().map(|x| self.embed(x)).collect()
    }

    pub fn backward(&self, tape: &Tape, grad_out: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_for(self);
        self.accumulate_backward(tape, grad_out, &mut grads)?;
        Ok(grads)
    }

    /// Adds `∂L/∂θ` for one sample into `grads`, given `∂L/∂embedding`.
    pub fn accumulate_backward(
        &self,
        tape: &Tape,
        grad_out: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        self.check_tape(tape)?;
        if grad_out.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "output gradient",
                expected: self.output_dim(),
                got: grad_out.len(),
            });
        }
        if !grads.matches(self) {
            return Err(Error::InvalidNetwork(
                "gradient buffer shape differs from network".into(),
            ));
        }

        let mut g = grad_out.to_vec();
        if let Some(n) = tape.raw_norm {
            // y = z / |z|  =>  dL/dz = (g - y (y·g)) / |z|
            let y = &tape.output;
            let yg: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
            for (gi, yi) in g.iter_mut().zip(y) {
                *gi = (*gi - yi * yg) / n;
            }
        }
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let dz: Vec<f64> = g
                .iter()
                .zip(&tape.pre[k])
                .map(|(gi, &z)| gi * layer.activation.derivative(z))
                .collect();
            let lg = &mut grads.layers[k];
            lg.weights.add_outer(&dz, &tape.inputs[k], 1.0);
            for (b, d) in lg.bias.iter_mut().zip(&dz) {
                *b += d;
            }
            if k > 0 {
                g = layer.weights.matvec_transposed(&dz);
            }
        }
        Ok(())
    }

    fn check_tape(&self, tape: &Tape) -> Result<()> {
        if tape.pre.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                context: "tape layer count",
                expected: self.layers.len(),
                got: tape.pre.len(),
            });
        }
        for (l, (z, x)) in self.layers.iter().zip(tape.pre.iter().zip(&tape.inputs)) {
            if z.len() != l.out_dim() || x.len() != l.in_dim() {
                return Err(Error::DimensionMismatch {
                    context: "tape layer width",
                    expected: l.out_dim(),
                    got: z.len(),
                });
            }
        }
        if tape.raw_norm.is_some() != self.normalize_output {
            return Err(Error::InvalidNetwork(
                "tape normalization flag differs from network".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }
}

impl Layer {
    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.weights.as_mut_slice(), &mut self.bias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Parameter gradients, shape-congruent with the network they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_for(net: &MlpNet) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[LayerGrad] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerGrad] {
        &mut self.layers
    }

    pub fn matches(&self, net: &MlpNet) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.weights.rows() == l.out_dim()
                    && g.weights.cols() == l.in_dim()
                    && g.bias.len() == l.out_dim()
            })
    }

    /// Same ordering as [`MlpNet::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.as_mut_slice().iter_mut().for_each(|v| *v *= s);
            l.bias.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.as_slice().iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
