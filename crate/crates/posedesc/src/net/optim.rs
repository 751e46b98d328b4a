//! SGD with Nesterov momentum and L2 weight regularization.

use crate::error::{Error, Result};
use crate::net::{Gradients, LayerGrads, Parameters};
use crate::tensor::{Scalar, Tensor};

/// One optimizer step over every parameter tensor.
///
/// Nesterov momentum in the reformulated, lookahead-free variant:
///
/// ```text
/// v <- mu * v - lr * g
/// theta <- theta + mu * v - lr * g     (with the updated v)
/// ```
///
/// With `momentum == 0` this reduces to plain SGD. The velocity buffers live
/// inside [`Parameters`] and are updated in place.
pub fn sgd_nesterov_step<T: Scalar>(
    params: &mut Parameters<T>,
    grads: &Gradients<T>,
    lr: T,
    momentum: T,
) -> Result<()> {
    if !(lr > T::ZERO) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {}",
            lr
        )));
    }
    if !(momentum >= T::ZERO && momentum < T::ONE) {
        return Err(Error::InvalidArgument(format!(
            "momentum must lie in [0, 1), got {}",
            momentum
        )));
    }
    if params.layers.len() != grads.layers.len() {
        return Err(Error::ShapeMismatch(
            "gradient layer count does not match parameters".into(),
        ));
    }
    for (entry, grad) in params.layers.iter_mut().zip(&grads.layers) {
        let (Some(p), Some(g)) = (entry.as_mut(), grad.as_ref()) else {
            if entry.is_some() != grad.is_some() {
                return Err(Error::ShapeMismatch(
                    "gradient layer layout does not match parameters".into(),
                ));
            }
            continue;
        };
        update(
            p.weights.data_mut(),
            p.weight_velocity.data_mut(),
            g.weights.data(),
            lr,
            momentum,
        )?;
        update(&mut p.bias, &mut p.bias_velocity, &g.bias, lr, momentum)?;
    }
    Ok(())
}

fn update<T: Scalar>(
    theta: &mut [T],
    velocity: &mut [T],
    grad: &[T],
    lr: T,
    momentum: T,
) -> Result<()> {
    if theta.len() != grad.len() || velocity.len() != grad.len() {
        return Err(Error::ShapeMismatch(format!(
            "optimizer buffers disagree: {} params, {} velocity, {} grads",
            theta.len(),
            velocity.len(),
            grad.len()
        )));
    }
    for ((t, v), &g) in theta.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient value {}", g)));
        }
        let vn = momentum * *v - lr * g;
        *v = vn;
        *t += momentum * vn - lr * g;
    }
    Ok(())
}

/// L2 penalty over weight tensors only; biases are exempt.
///
/// Returns the penalty `lambda * sum(w^2)` and the gradient contribution
/// (`2 * lambda * w` on weights, zero on biases).
pub fn l2_regularization<T: Scalar>(
    params: &Parameters<T>,
    lambda: T,
) -> (T, Gradients<T>) {
    let two = T::from_f64(2.0);
    let mut penalty = T::ZERO;
    let layers = params
        .layers
        .iter()
        .map(|entry| {
            entry.as_ref().map(|p| {
                let mut sq = T::ZERO;
                let gw: Vec<T> = p
                    .weights
                    .data()
                    .iter()
                    .map(|&w| {
                        sq += w * w;
                        two * lambda * w
                    })
                    .collect();
                penalty += lambda * sq;
                LayerGrads {
                    weights: Tensor::from_vec(p.weights.shape(), gw)
                        .expect("same shape as weights"),
                    bias: vec![T::ZERO; p.bias.len()],
                }
            })
        })
        .collect();
    (penalty, Gradients { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{LayerSpec, NetworkSpec};

    fn one_param_setup(theta0: f32) -> (NetworkSpec, Parameters<f32>) {
        let spec =
            NetworkSpec::new((1, 1, 1), vec![LayerSpec::Fully { out_dim: 1 }], 1).unwrap();
        let mut params = Parameters::<f32>::zeros(&spec).unwrap();
        params.layers[0].as_mut().unwrap().weights.data_mut()[0] = theta0;
        (spec, params)
    }

    fn grad_of(params: &Parameters<f32>, g: f32) -> Gradients<f32> {
        let mut grads = Gradients::zeros_like(params);
        grads.layers[0].as_mut().unwrap().weights.data_mut()[0] = g;
        grads
    }

    fn theta(params: &Parameters<f32>) -> f32 {
        params.layers[0].as_ref().unwrap().weights.data()[0]
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let (_, mut params) = one_param_setup(1.0);
        let grads = grad_of(&params, 0.5);
        sgd_nesterov_step(&mut params, &grads, 0.1, 0.0).unwrap();
        assert!((theta(&params) - 0.95).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_coasts_on_momentum() {
        let (_, mut params) = one_param_setup(1.0);
        params.layers[0].as_mut().unwrap().weight_velocity.data_mut()[0] = 0.2;
        let grads = grad_of(&params, 0.0);
        sgd_nesterov_step(&mut params, &grads, 0.1, 0.9).unwrap();
        // v stays 0.9 * 0.2 = 0.18; theta moves by mu * v_new = 0.162
        assert!((theta(&params) - 1.162).abs() < 1e-6);
    }

    #[test]
    fn two_steps_on_quadratic_match_hand_sequence() {
        // f(theta) = theta^2, grad = 2 theta, lr = 0.1, mu = 0.9, theta0 = 1.
        let (_, mut params) = one_param_setup(1.0);
        let g0 = grad_of(&params, 2.0 * theta(&params));
        sgd_nesterov_step(&mut params, &g0, 0.1, 0.9).unwrap();
        // v1 = -0.2, theta1 = 1 - 0.18 - 0.2 = 0.62
        assert!((theta(&params) - 0.62).abs() < 1e-6);
        let g1 = grad_of(&params, 2.0 * theta(&params));
        sgd_nesterov_step(&mut params, &g1, 0.1, 0.9).unwrap();
        // v2 = 0.9*(-0.2) - 0.124 = -0.304; theta2 = 0.62 - 0.2736 - 0.124
        assert!((theta(&params) - 0.2224).abs() < 1e-6);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let (_, mut params) = one_param_setup(1.0);
        let grads = grad_of(&params, f32::NAN);
        let err = sgd_nesterov_step(&mut params, &grads, 0.1, 0.9).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn l2_matches_analytic_single_weight() {
        let (_, mut params) = one_param_setup(3.0);
        let (penalty, grads) = l2_regularization(&params, 1.0);
        assert!((penalty - 9.0).abs() < 1e-7);
        assert!((grads.layers[0].as_ref().unwrap().weights.data()[0] - 6.0).abs() < 1e-7);

        let (zero_penalty, zero_grads) = l2_regularization(&params, 0.0);
        assert_eq!(zero_penalty, 0.0);
        assert!(zero_grads.layers[0]
            .as_ref()
            .unwrap()
            .weights
            .data()
            .iter()
            .all(|&v| v == 0.0));

        // Bias changes never affect the penalty.
        params.layers[0].as_mut().unwrap().bias[0] = 123.0;
        let (penalty_bias, grads_bias) = l2_regularization(&params, 1.0);
        assert_eq!(penalty_bias, penalty);
        assert!(grads_bias.layers[0].as_ref().unwrap().bias.iter().all(|&v| v == 0.0));
    }
}
