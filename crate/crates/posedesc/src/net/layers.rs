//! Forward and backward passes for the four layer types.
//!
//! Inner loops are written as fixed-width lanes so the compiler can
//! vectorize them; the same generic code runs in f32 for training and f64
//! for gradient checking. Lane order is fixed, so results are reproducible.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const LANES: usize = 8;

/// out[i] += a * x[i]; lanes are independent, so this autovectorizes.
#[inline]
fn saxpy<T: Scalar>(a: T, x: &[T], out: &mut [T]) {
    for (o, &xv) in out.iter_mut().zip(x) {
        *o = a.mul_add(xv, *o);
    }
}

/// Dot product with eight independent accumulators and a fixed reduction
/// tree; the loop-carried dependency of a naive accumulator would serialize
/// the whole loop.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let (ac, ar) = a.as_chunks::<LANES>();
    let (bc, br) = b.as_chunks::<LANES>();
    let mut lanes = [T::ZERO; LANES];
    for (a8, b8) in ac.iter().zip(bc) {
        for i in 0..LANES {
            lanes[i] = a8[i].mul_add(b8[i], lanes[i]);
        }
    }
    let mut tail = T::ZERO;
    for (&av, &bv) in ar.iter().zip(br) {
        tail = av.mul_add(bv, tail);
    }
    reduce_lanes(&lanes) + tail
}

/// Fixed reduction tree over one lane block, shared by every kernel that
/// keeps per-lane accumulators, so summation order never depends on shape.
#[inline]
fn reduce_lanes<T: Scalar>(lanes: &[T; LANES]) -> T {
    ((lanes[0] + lanes[4]) + (lanes[2] + lanes[6]))
        + ((lanes[1] + lanes[5]) + (lanes[3] + lanes[7]))
}

/// Valid (no padding) stride-1 cross-correlation.
///
/// `input` is CHW, `weights` is OC x C x KH x KW, `bias` has length OC.
///
/// The output plane is accumulated at the input row stride: every output
/// row then lies in one contiguous run of length (oh - 1) * w + ow, so a
/// single long saxpy applies one tap to the whole plane. The kw - 1 gutter
/// columns between rows pick up values that belong to no output; the
/// compaction at the end drops them.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
) -> Result<Tensor<T>> {
    let (c, h, w, oc, kh, kw) = conv_dims(input, weights, bias)?;
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let x = input.data();
    let wt = weights.data();
    let span = (oh - 1) * w + ow;
    let mut plane = vec![T::ZERO; span];
    let mut out: Vec<T> = Vec::with_capacity(oc * oh * ow);
    for o in 0..oc {
        plane.fill(bias[o]);
        for ci in 0..c {
            let xp = &x[ci * h * w..][..h * w];
            let wchan = &wt[(o * c + ci) * kh * kw..][..kh * kw];
            for ky in 0..kh {
                for kx in 0..kw {
                    // Tap start ky * w + kx plus span stays inside the
                    // channel plane because kx + ow <= w.
                    saxpy(wchan[ky * kw + kx], &xp[ky * w + kx..][..span], &mut plane);
                }
            }
        }
        for y in 0..oh {
            out.extend_from_slice(&plane[y * w..][..ow]);
        }
    }
    Tensor::from_vec(&[oc, oh, ow], out)
}

/// Gradients of [`conv2d_forward`] with respect to input, weights and bias.
/// Pass `want_input_grad = false` for the first layer of a chain, where the
/// input gradient has no consumer; it is half the work of this pass.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    want_input_grad: bool,
) -> Result<(Option<Tensor<T>>, Tensor<T>, Vec<T>)> {
    let bias_probe = vec![T::ZERO; weights.shape()[0]];
    let (c, h, w, oc, kh, kw) = conv_dims(input, weights, &bias_probe)?;
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    if grad_out.shape() != [oc, oh, ow] {
        return Err(Error::ShapeMismatch(format!(
            "conv grad_out shape {:?}, expected [{}, {}, {}]",
            grad_out.shape(),
            oc,
            oh,
            ow
        )));
    }
    let x = input.data();
    let wt = weights.data();
    let go = grad_out.data();

    // grad_out restrided to the input row pitch with zeroed gutters; the
    // zeros cancel every term the flattened loops would otherwise pick up
    // across row boundaries.
    let span = (oh - 1) * w + ow;
    let mut pgo = vec![T::ZERO; oc * span];
    for o in 0..oc {
        for y in 0..oh {
            pgo[o * span + y * w..][..ow].copy_from_slice(&go[(o * oh + y) * ow..][..ow]);
        }
    }

    let mut gx = vec![T::ZERO; if want_input_grad { c * h * w } else { 0 }];
    let mut gw = vec![T::ZERO; oc * c * kh * kw];
    let mut gb = vec![T::ZERO; oc];

    for o in 0..oc {
        let mut bias_sum = T::ZERO;
        for &g in &go[o * oh * ow..(o + 1) * oh * ow] {
            bias_sum += g;
        }
        gb[o] = bias_sum;
        let gop = &pgo[o * span..][..span];
        for ci in 0..c {
            for ky in 0..kh {
                for kx in 0..kw {
                    let tap = ((o * c + ci) * kh + ky) * kw + kx;
                    let off = (ci * h + ky) * w + kx;
                    gw[tap] = dot(gop, &x[off..][..span]);
                    if want_input_grad {
                        saxpy(wt[tap], gop, &mut gx[off..][..span]);
                    }
                }
            }
        }
    }
    let gx = if want_input_grad {
        Some(Tensor::from_vec(&[c, h, w], gx)?)
    } else {
        None
    };
    Ok((gx, Tensor::from_vec(&[oc, c, kh, kw], gw)?, gb))
}

fn conv_dims<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    if input.rank() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "conv input rank {}, expected 3 (CHW)",
            input.rank()
        )));
    }
    if weights.rank() != 4 {
        return Err(Error::ShapeMismatch(format!(
            "conv weights rank {}, expected 4 (OC x C x KH x KW)",
            weights.rank()
        )));
    }
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oc, wc, kh, kw) = (
        weights.shape()[0],
        weights.shape()[1],
        weights.shape()[2],
        weights.shape()[3],
    );
    if wc != c {
        return Err(Error::ShapeMismatch(format!(
            "conv weights expect {} input channels, input has {}",
            wc, c
        )));
    }
    if bias.len() != oc {
        return Err(Error::ShapeMismatch(format!(
            "conv bias length {}, expected {} output channels",
            bias.len(),
            oc
        )));
    }
    if kh > h || kw > w {
        return Err(Error::ShapeMismatch(format!(
            "conv kernel {}x{} exceeds input {}x{}",
            kh, kw, h, w
        )));
    }
    Ok((c, h, w, oc, kh, kw))
}

/// 2x2 max pooling with stride 2. Returns the pooled tensor and, per output
/// element, the flat input index of the selected maximum. Ties resolve to the
/// first element of the window in row-major order.
pub fn maxpool2x2_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    if input.rank() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "maxpool input rank {}, expected 3 (CHW)",
            input.rank()
        )));
    }
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "maxpool requires even spatial extents, got {}x{}",
            h, w
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = vec![T::ZERO; c * oh * ow];
    let mut argmax = vec![0u32; c * oh * ow];
    for ci in 0..c {
        for y in 0..oh {
            for xo in 0..ow {
                let base = (ci * h + 2 * y) * w + 2 * xo;
                let mut best_idx = base;
                let mut best = x[base];
                for &cand in &[base + 1, base + w, base + w + 1] {
                    if x[cand] > best {
                        best = x[cand];
                        best_idx = cand;
                    }
                }
                let oi = (ci * oh + y) * ow + xo;
                out[oi] = best;
                argmax[oi] = best_idx as u32;
            }
        }
    }
    Ok((Tensor::from_vec(&[c, oh, ow], out)?, argmax))
}

/// Routes `grad_out` back to the argmax positions recorded by the forward.
pub fn maxpool2x2_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[u32],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::ShapeMismatch(format!(
            "maxpool grad_out has {} elements, argmax map has {}",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut gx = Tensor::zeros(input_shape);
    let data = gx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        data[idx as usize] += g;
    }
    Ok(gx)
}

/// Elementwise max(0, x).
pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.maximum(T::ZERO))
}

/// ReLU gradient: zero exactly where the forward input was <= 0.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch(format!(
            "relu grad_out shape {:?} does not match input {:?}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::ZERO { g } else { T::ZERO })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

/// Affine map W·x + b with `weights` of shape M x N.
pub fn fully_forward<T: Scalar>(input: &[T], weights: &Tensor<T>, bias: &[T]) -> Result<Vec<T>> {
    let (m, n) = fully_dims(input, weights, bias)?;
    let wt = weights.data();
    let mut out = Vec::with_capacity(m);
    for row in 0..m {
        out.push(bias[row] + dot(&wt[row * n..][..n], input));
    }
    Ok(out)
}

/// Gradients of [`fully_forward`]: input grad, weight grad (outer product of
/// `grad_out` and input) and bias grad.
pub fn fully_backward<T: Scalar>(
    input: &[T],
    weights: &Tensor<T>,
    grad_out: &[T],
) -> Result<(Vec<T>, Tensor<T>, Vec<T>)> {
    let (m, n) = fully_dims(input, weights, &vec![T::ZERO; grad_out.len()])?;
    let wt = weights.data();
    let mut gx = vec![T::ZERO; n];
    let mut gw = vec![T::ZERO; m * n];
    for row in 0..m {
        let g = grad_out[row];
        saxpy(g, &wt[row * n..][..n], &mut gx);
        let gw_row = &mut gw[row * n..][..n];
        for (gwv, &xv) in gw_row.iter_mut().zip(input) {
            *gwv = g * xv;
        }
    }
    Ok((gx, Tensor::from_vec(&[m, n], gw)?, grad_out.to_vec()))
}

fn fully_dims<T: Scalar>(input: &[T], weights: &Tensor<T>, bias: &[T]) -> Result<(usize, usize)> {
    if weights.rank() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "fully weights rank {}, expected 2 (M x N)",
            weights.rank()
        )));
    }
    let (m, n) = (weights.shape()[0], weights.shape()[1]);
    if input.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "fully input length {}, weights expect {}",
            input.len(),
            n
        )));
    }
    if bias.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "fully bias length {}, expected {}",
            bias.len(),
            m
        )));
    }
    Ok((m, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rand_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn conv_constant_field_sums_window() {
        let input = Tensor::from_vec(&[1, 3, 3], vec![1.0f32; 9]).unwrap();
        let weights = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0f32; 4]).unwrap();
        let out = conv2d_forward(&input, &weights, &[0.0]).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert!(out.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn conv_identity_kernel_copies_input() {
        let input = Tensor::from_vec(&[1, 2, 3], vec![1.0f32, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap();
        let weights = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0f32]).unwrap();
        let out = conv2d_forward(&input, &weights, &[0.0]).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn conv_matches_nested_loop_oracle() {
        let mut rng = crate::rng::stream(11, "conv-oracle");
        let input = rand_tensor(&[2, 8, 8], &mut rng);
        let weights = rand_tensor(&[4, 2, 3, 3], &mut rng);
        let bias: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = conv2d_forward(&input, &weights, &bias).unwrap();
        for o in 0..4 {
            for y in 0..6 {
                for x in 0..6 {
                    let mut acc = bias[o];
                    for c in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                acc += input.at(&[c, y + ky, x + kx])
                                    * weights.at(&[o, c, ky, kx]);
                            }
                        }
                    }
                    assert!((out.at(&[o, y, x]) - acc).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let input = Tensor::<f32>::zeros(&[3, 4, 4]);
        let weights = Tensor::<f32>::zeros(&[2, 2, 2, 2]);
        let err = conv2d_forward(&input, &weights, &[0.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("input channels"));
    }

    #[test]
    fn maxpool_picks_max_and_argmax() {
        let input = Tensor::from_vec(&[1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let (out, argmax) = maxpool2x2_forward(&input).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(argmax, vec![3]);
    }

    #[test]
    fn maxpool_tie_breaks_to_first_in_row_major_order() {
        let input = Tensor::from_vec(&[1, 2, 4], vec![5.0f32; 8]).unwrap();
        let (out, argmax) = maxpool2x2_forward(&input).unwrap();
        assert_eq!(out.data(), &[5.0, 5.0]);
        assert_eq!(argmax, vec![0, 2]);
    }

    #[test]
    fn maxpool_matches_loop_oracle() {
        let mut rng = crate::rng::stream(12, "pool-oracle");
        let input = rand_tensor(&[3, 6, 6], &mut rng);
        let (out, _) = maxpool2x2_forward(&input).unwrap();
        for c in 0..3 {
            for y in 0..3 {
                for x in 0..3 {
                    let mut best = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            best = best.max(input.at(&[c, 2 * y + dy, 2 * x + dx]));
                        }
                    }
                    assert_eq!(out.at(&[c, y, x]), best);
                }
            }
        }
    }

    #[test]
    fn maxpool_rejects_odd_extent() {
        let input = Tensor::<f32>::zeros(&[1, 3, 4]);
        let err = maxpool2x2_forward(&input).unwrap_err();
        assert!(err.to_string().contains("even spatial extents"));
    }

    #[test]
    fn maxpool_backward_routes_only_to_argmax_and_conserves_sum() {
        let mut rng = crate::rng::stream(13, "pool-backward");
        let input = rand_tensor(&[2, 4, 4], &mut rng);
        let (out, argmax) = maxpool2x2_forward(&input).unwrap();
        let grad_out = rand_tensor(out.shape(), &mut rng);
        let gx = maxpool2x2_backward(input.shape(), &argmax, &grad_out).unwrap();
        let routed: f64 = gx.data().iter().filter(|v| **v != 0.0).sum();
        let incoming: f64 = grad_out.data().iter().sum();
        assert!((routed - incoming).abs() < 1e-12);
        for (flat, &v) in gx.data().iter().enumerate() {
            if v != 0.0 {
                assert!(argmax.contains(&(flat as u32)));
            }
        }
    }

    #[test]
    fn relu_clamps_negatives() {
        let input = Tensor::from_vec(&[3], vec![-1.0f32, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&input).data(), &[0.0, 0.0, 2.0]);
        let all_neg = Tensor::from_vec(&[3], vec![-5.0f32, -0.1, -2.0]).unwrap();
        assert!(relu_forward(&all_neg).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_is_idempotent() {
        let mut rng = crate::rng::stream(14, "relu");
        let input = rand_tensor(&[17], &mut rng);
        let once = relu_forward(&input);
        assert_eq!(relu_forward(&once), once);
    }

    #[test]
    fn relu_backward_zero_at_kink_and_negatives() {
        let input = Tensor::from_vec(&[3], vec![-1.0f32, 0.0, 2.0]).unwrap();
        let grad_out = Tensor::from_vec(&[3], vec![1.0f32, 1.0, 1.0]).unwrap();
        let gx = relu_backward(&input, &grad_out).unwrap();
        assert_eq!(gx.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn fully_identity_and_pure_bias() {
        let eye = Tensor::from_vec(&[2, 2], vec![1.0f32, 0.0, 0.0, 1.0]).unwrap();
        let out = fully_forward(&[3.0, -4.0], &eye, &[0.0, 0.0]).unwrap();
        assert_eq!(out, vec![3.0, -4.0]);

        let zero = Tensor::<f32>::zeros(&[2, 3]);
        let out = fully_forward(&[1.0, 2.0, 3.0], &zero, &[0.5, -0.5]).unwrap();
        assert_eq!(out, vec![0.5, -0.5]);
    }

    #[test]
    fn fully_matches_dot_product_oracle() {
        let mut rng = crate::rng::stream(15, "fully-oracle");
        let weights = rand_tensor(&[4, 6], &mut rng);
        let input: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = fully_forward(&input, &weights, &bias).unwrap();
        for m in 0..4 {
            let mut acc = bias[m];
            for n in 0..6 {
                acc += weights.at(&[m, n]) * input[n];
            }
            assert!((out[m] - acc).abs() < 1e-6);
        }
    }

    #[test]
    fn fully_backward_weight_grad_is_outer_product() {
        let weights = Tensor::from_vec(&[2, 3], vec![0.0f32; 6]).unwrap();
        let input = [1.0f32, 2.0, 3.0];
        let grad_out = [10.0f32, -1.0];
        let (_, gw, gb) = fully_backward(&input, &weights, &grad_out).unwrap();
        assert_eq!(gw.data(), &[10.0, 20.0, 30.0, -1.0, -2.0, -3.0]);
        assert_eq!(gb, vec![10.0, -1.0]);
    }
}
