//! Central-difference verification of backpropagation.

use super::Network;
use crate::error::{Error, Result};

/// `max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-8)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Central finite differences of the single-sample loss over every parameter.
pub fn numeric_gradient(net: &Network, input: &[f64], target: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(net.param_count());
    for i in 0..net.param_count() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + epsilon;
        let plus = probe.loss(input, target)?;
        probe.params_mut()[i] = orig - epsilon;
        let minus = probe.loss(input, target)?;
        probe.params_mut()[i] = orig;
        out.push((plus - minus) / (2.0 * epsilon));
    }
    Ok(out)
}

/// Largest relative disagreement between the analytic and finite-difference
/// gradients for one sample.
pub fn gradient_check(net: &Network, input: &[f64], target: &[f64], epsilon: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    let analytic = net.gradient(input, target)?;
    let numeric = numeric_gradient(net, input, target, epsilon)?;
    if analytic.iter().chain(&numeric).any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok(max_relative_error(&analytic, &numeric))
}
