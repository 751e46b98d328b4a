//! Finite-difference gradient checking, always in 64-bit.
//!
//! The oracle never looks at backward code: it re-evaluates the forward pass
//! at perturbed coordinates and forms central differences. Analytic gradients
//! must agree to a relative error below 1e-4.

use crate::error::Result;
use crate::net::{network_backward, network_forward, NetworkSpec, Parameters};
use crate::tensor::Tensor;

/// Central difference step used throughout the checks.
pub const STEP: f64 = 1e-5;

/// Relative-error tolerance the checks assert against.
pub const TOLERANCE: f64 = 1e-4;

/// Central finite differences of a scalar function at `x`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut point = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let saved = point[i];
        point[i] = saved + h;
        let fp = f(&point);
        point[i] = saved - h;
        let fm = f(&point);
        point[i] = saved;
        grad.push((fp - fm) / (2.0 * h));
    }
    grad
}

/// |a - b| / max(|a|, |b|), except that when both magnitudes are below 1e-6
/// the absolute difference is returned: at that scale the difference itself
/// is dominated by finite-difference noise and a quotient would be
/// meaningless.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    let scale = a.abs().max(b.abs());
    if scale < 1e-6 {
        diff
    } else {
        diff / scale
    }
}

/// Largest [`relative_error`] over paired coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| relative_error(a, b))
        .fold(0.0, f64::max)
}

/// Result of checking every parameter coordinate of a network.
#[derive(Debug, Clone, Copy)]
pub struct CheckReport {
    pub max_rel_error: f64,
    pub coordinates: usize,
}

/// Checks analytic parameter gradients of the scalar loss
/// `L = probe . network(image)` against central differences, over every
/// parameter coordinate (weights and biases of every layer).
pub fn check_network_gradients(
    spec: &NetworkSpec,
    params: &Parameters<f64>,
    image: &Tensor<f64>,
    probe: &[f64],
    h: f64,
) -> Result<CheckReport> {
    let (_, cache) = network_forward(spec, params, image)?;
    let grads = network_backward(spec, params, &cache, probe)?;

    let mut scratch = params.clone();
    let eval = |p: &Parameters<f64>| -> f64 {
        let (desc, _) = network_forward(spec, p, image).expect("forward in oracle");
        desc.iter().zip(probe).map(|(d, p)| d * p).sum()
    };

    let mut max_err = 0.0f64;
    let mut coordinates = 0usize;
    for li in 0..params.layers.len() {
        let Some(analytic) = grads.layers[li].as_ref() else {
            continue;
        };
        for wi in 0..analytic.weights.len() {
            let saved = scratch.layers[li].as_ref().unwrap().weights.data()[wi];
            scratch.layers[li].as_mut().unwrap().weights.data_mut()[wi] = saved + h;
            let fp = eval(&scratch);
            scratch.layers[li].as_mut().unwrap().weights.data_mut()[wi] = saved - h;
            let fm = eval(&scratch);
            scratch.layers[li].as_mut().unwrap().weights.data_mut()[wi] = saved;
            let numeric = (fp - fm) / (2.0 * h);
            max_err = max_err.max(relative_error(analytic.weights.data()[wi], numeric));
            coordinates += 1;
        }
        for bi in 0..analytic.bias.len() {
            let saved = scratch.layers[li].as_ref().unwrap().bias[bi];
            scratch.layers[li].as_mut().unwrap().bias[bi] = saved + h;
            let fp = eval(&scratch);
            scratch.layers[li].as_mut().unwrap().bias[bi] = saved - h;
            let fm = eval(&scratch);
            scratch.layers[li].as_mut().unwrap().bias[bi] = saved;
            let numeric = (fp - fm) / (2.0 * h);
            max_err = max_err.max(relative_error(analytic.bias[bi], numeric));
            coordinates += 1;
        }
    }
    Ok(CheckReport {
        max_rel_error: max_err,
        coordinates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_recovers_quadratic_gradient() {
        // f(x) = sum x_i^2, grad = 2x.
        let mut f = |x: &[f64]| x.iter().map(|v| v * v).sum();
        let x = [1.0, -2.0, 0.5];
        let grad = central_difference(&mut f, &x, STEP);
        let expected = [2.0, -4.0, 1.0];
        assert!(max_relative_error(&expected, &grad) < TOLERANCE);
    }

    #[test]
    fn relative_error_guards_tiny_magnitudes() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!(relative_error(1e-9, -1e-9) < TOLERANCE);
        assert!(relative_error(1.0, 1.1) > 0.09);
    }
}
