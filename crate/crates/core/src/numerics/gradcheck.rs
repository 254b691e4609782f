use super::mlp::{Gradients, MlpNet};
use crate::Result;

/// `|a − n| / max(|a|, |n|, 1e-12)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares the analytic gradient returned by `loss` against central
/// differences `(L(θ+h) − L(θ−h)) / 2h` for every parameter and returns the
/// largest relative error.
///
/// The closure must be smooth at `net`; hinge and ReLU kinks within `h` of
/// the evaluation point make the comparison meaningless.
pub fn grad_check<F>(mut loss: F, net: &MlpNet, h: f64) -> Result<f64>
where
    F: FnMut(&MlpNet) -> Result<(f64, Gradients)>,
{
    let (_, analytic) = loss(net)?;
    let analytic = analytic.flatten();
    let base = net.params();
    let mut probe = net.clone();
    let mut params = base.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        params[i] = base[i] + h;
        probe.set_params(&params)?;
        let (up, _) = loss(&probe)?;
        params[i] = base[i] - h;
        probe.set_params(&params)?;
        let (down, _) = loss(&probe)?;
        params[i] = base[i];
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}
