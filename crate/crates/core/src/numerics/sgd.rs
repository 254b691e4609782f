use super::mlp::{Gradients, MlpNet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    /// Classical momentum coefficient in `[0, 1)`.
    pub momentum: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            momentum: 0.9,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// SGD with classical momentum:
/// `v ← momentum·v − lr·g`, `θ ← θ + v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    cfg: SgdConfig,
    velocity: Option<Gradients>,
}

impl Sgd {
    pub fn new(cfg: SgdConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Sgd {
            cfg,
            velocity: None,
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.cfg
    }

    pub fn velocity(&self) -> Option<&Gradients> {
        self.velocity.as_ref()
    }

    pub fn step(&mut self, net: &mut MlpNet, grads: &Gradients) -> Result<()> {
        if !grads.matches(net) {
            return Err(Error::InvalidNetwork(
                "gradient shape differs from network".into(),
            ));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite(
                "gradient passed to SGD; training aborted".into(),
            ));
        }
        let SgdConfig {
            learning_rate: lr,
            momentum,
        } = self.cfg;
        let velocity = self
            .velocity
            .get_or_insert_with(|| Gradients::zeros_for(net));
        for ((layer, g), v) in net
            .layers_mut()
            .iter_mut()
            .zip(grads.layers())
            .zip(velocity.layers_mut())
        {
            let (w, b) = layer.params_mut();
            update(w, g.weights.as_slice(), v.weights.as_mut_slice(), lr, momentum);
            update(b, &g.bias, &mut v.bias, lr, momentum);
        }
        Ok(())
    }
}

fn update(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) {
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v - lr * g;
        *p += *v;
    }
}
