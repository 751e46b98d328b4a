//! Network structure, parameters and reverse-mode differentiation.

pub mod checkpoint;
pub mod layers;
pub mod optim;

use std::hash::{Hash, Hasher};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// One layer of the network, in application order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
    },
    MaxPool2x2,
    Relu,
    Fully {
        out_dim: usize,
    },
}

/// Shape of the value flowing between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueShape {
    Chw(usize, usize, usize),
    Flat(usize),
}

impl ValueShape {
    pub fn len(&self) -> usize {
        match *self {
            ValueShape::Chw(c, h, w) => c * h * w,
            ValueShape::Flat(n) => n,
        }
    }
}

/// Validated network architecture. Construction checks that layer shapes
/// chain, that pooled extents are even, and that the final layer is a linear
/// `Fully` of width `descriptor_dim`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NetworkSpec {
    input: (usize, usize, usize),
    layers: Vec<LayerSpec>,
    descriptor_dim: usize,
}

impl NetworkSpec {
    pub fn new(
        input: (usize, usize, usize),
        layers: Vec<LayerSpec>,
        descriptor_dim: usize,
    ) -> Result<Self> {
        let (c, h, w) = input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidSpec(format!(
                "input extents must be positive, got {}x{}x{}",
                c, h, w
            )));
        }
        if descriptor_dim == 0 {
            return Err(Error::InvalidSpec("descriptor dim must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::InvalidSpec("network has no layers".into()));
        }
        let spec = NetworkSpec {
            input,
            layers,
            descriptor_dim,
        };
        let shapes = spec.value_shapes()?;
        match spec.layers.last().unwrap() {
            LayerSpec::Fully { out_dim } if *out_dim == descriptor_dim => {}
            LayerSpec::Fully { out_dim } => {
                return Err(Error::InvalidSpec(format!(
                    "last layer outputs {}, descriptor dim is {}",
                    out_dim, descriptor_dim
                )));
            }
            other => {
                return Err(Error::InvalidSpec(format!(
                    "last layer must be Fully (linear output), got {:?}",
                    other
                )));
            }
        }
        debug_assert_eq!(shapes.last().unwrap().len(), descriptor_dim);
        Ok(spec)
    }

    pub fn input(&self) -> (usize, usize, usize) {
        self.input
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn descriptor_dim(&self) -> usize {
        self.descriptor_dim
    }

    /// Shapes after each layer, starting with the input shape.
    /// Fails if any layer cannot consume its predecessor's output.
    pub fn value_shapes(&self) -> Result<Vec<ValueShape>> {
        let mut shapes = vec![ValueShape::Chw(self.input.0, self.input.1, self.input.2)];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = *shapes.last().unwrap();
            let next = match (layer, cur) {
                (
                    LayerSpec::Conv {
                        out_channels,
                        kernel_h,
                        kernel_w,
                    },
                    ValueShape::Chw(_, h, w),
                ) => {
                    if *out_channels == 0 || *kernel_h == 0 || *kernel_w == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {}: conv extents must be positive",
                            i
                        )));
                    }
                    if *kernel_h > h || *kernel_w > w {
                        return Err(Error::InvalidSpec(format!(
                            "layer {}: kernel {}x{} exceeds input {}x{}",
                            i, kernel_h, kernel_w, h, w
                        )));
                    }
                    ValueShape::Chw(*out_channels, h - kernel_h + 1, w - kernel_w + 1)
                }
                (LayerSpec::Conv { .. }, ValueShape::Flat(_)) => {
                    return Err(Error::InvalidSpec(format!(
                        "layer {}: conv cannot follow a flattened value",
                        i
                    )));
                }
                (LayerSpec::MaxPool2x2, ValueShape::Chw(c, h, w)) => {
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {}: maxpool needs even extents, got {}x{}",
                            i, h, w
                        )));
                    }
                    ValueShape::Chw(c, h / 2, w / 2)
                }
                (LayerSpec::MaxPool2x2, ValueShape::Flat(_)) => {
                    return Err(Error::InvalidSpec(format!(
                        "layer {}: maxpool cannot follow a flattened value",
                        i
                    )));
                }
                (LayerSpec::Relu, any) => any,
                (LayerSpec::Fully { out_dim }, any) => {
                    if *out_dim == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {}: fully layer width must be positive",
                            i
                        )));
                    }
                    let _ = any.len();
                    ValueShape::Flat(*out_dim)
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// Structural fingerprint used to detect stale forward caches.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        self.hash(&mut hasher);
        hasher.finish()
    }
}

/// Weights and biases for each parameterized layer, plus the momentum
/// velocity buffers that shadow them. Biases live in their own tensors so
/// regularization can skip them.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T: Scalar> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
    pub weight_velocity: Tensor<T>,
    pub bias_velocity: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<T: Scalar> {
    /// One entry per spec layer; `None` for layers without parameters.
    pub layers: Vec<Option<LayerParams<T>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads<T: Scalar> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T: Scalar> {
    pub layers: Vec<Option<LayerGrads<T>>>,
}

impl<T: Scalar> Parameters<T> {
    /// All-zero parameters matching `spec`.
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let shapes = spec.value_shapes()?;
        let mut layers = Vec::with_capacity(spec.layers().len());
        for (i, layer) in spec.layers().iter().enumerate() {
            layers.push(match layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel_h,
                    kernel_w,
                } => {
                    let in_c = match shapes[i] {
                        ValueShape::Chw(c, _, _) => c,
                        ValueShape::Flat(_) => unreachable!("validated by value_shapes"),
                    };
                    let wshape = [*out_channels, in_c, *kernel_h, *kernel_w];
                    Some(LayerParams {
                        weights: Tensor::zeros(&wshape),
                        bias: vec![T::ZERO; *out_channels],
                        weight_velocity: Tensor::zeros(&wshape),
                        bias_velocity: vec![T::ZERO; *out_channels],
                    })
                }
                LayerSpec::Fully { out_dim } => {
                    let in_dim = shapes[i].len();
                    let wshape = [*out_dim, in_dim];
                    Some(LayerParams {
                        weights: Tensor::zeros(&wshape),
                        bias: vec![T::ZERO; *out_dim],
                        weight_velocity: Tensor::zeros(&wshape),
                        bias_velocity: vec![T::ZERO; *out_dim],
                    })
                }
                LayerSpec::MaxPool2x2 | LayerSpec::Relu => None,
            });
        }
        Ok(Parameters { layers })
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U + Copy) -> Parameters<U> {
        Parameters {
            layers: self
                .layers
                .iter()
                .map(|entry| {
                    entry.as_ref().map(|p| LayerParams {
                        weights: p.weights.map(f),
                        bias: p.bias.iter().map(|&v| f(v)).collect(),
                        weight_velocity: p.weight_velocity.map(f),
                        bias_velocity: p.bias_velocity.iter().map(|&v| f(v)).collect(),
                    })
                })
                .collect(),
        }
    }
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(params: &Parameters<T>) -> Self {
        Gradients {
            layers: params
                .layers
                .iter()
                .map(|entry| {
                    entry.as_ref().map(|p| LayerGrads {
                        weights: Tensor::zeros(p.weights.shape()),
                        bias: vec![T::ZERO; p.bias.len()],
                    })
                })
                .collect(),
        }
    }

    /// Elementwise accumulation; shapes must match.
    pub fn add_assign(&mut self, other: &Gradients<T>) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::ShapeMismatch(
                "gradient layer counts differ".into(),
            ));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (Some(ga), Some(gb)) => {
                    if ga.weights.shape() != gb.weights.shape() || ga.bias.len() != gb.bias.len() {
                        return Err(Error::ShapeMismatch(
                            "gradient tensor shapes differ".into(),
                        ));
                    }
                    for (x, &y) in ga.weights.data_mut().iter_mut().zip(gb.weights.data()) {
                        *x += y;
                    }
                    for (x, &y) in ga.bias.iter_mut().zip(&gb.bias) {
                        *x += y;
                    }
                }
                (None, None) => {}
                _ => {
                    return Err(Error::ShapeMismatch(
                        "gradient layer layouts differ".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for entry in self.layers.iter_mut().flatten() {
            for v in entry.weights.data_mut() {
                *v *= factor;
            }
            for v in entry.bias.iter_mut() {
                *v *= factor;
            }
        }
    }
}

/// Glorot-uniform initialization: weights from U(−a, a) with
/// a = sqrt(6 / (fanIn + fanOut)), biases and velocities zero.
/// Weights are drawn in row-major order, layers in network order, so a
/// seeded generator reproduces the same parameters exactly.
pub fn init_parameters<T: Scalar>(spec: &NetworkSpec, rng: &mut impl Rng) -> Result<Parameters<T>> {
    let mut params = Parameters::<T>::zeros(spec)?;
    for (layer, entry) in spec.layers().iter().zip(params.layers.iter_mut()) {
        let Some(p) = entry else { continue };
        let (fan_in, fan_out) = match layer {
            LayerSpec::Conv { .. } => {
                let s = p.weights.shape();
                let (oc, c, kh, kw) = (s[0], s[1], s[2], s[3]);
                (c * kh * kw, oc * kh * kw)
            }
            LayerSpec::Fully { .. } => {
                let s = p.weights.shape();
                (s[1], s[0])
            }
            _ => unreachable!("only conv/fully carry parameters"),
        };
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in p.weights.data_mut() {
            *v = T::from_f64(rng.random_range(-a..a));
        }
    }
    Ok(params)
}

/// Per-layer records captured by the forward pass for reuse in backward.
enum LayerRecord<T: Scalar> {
    Conv { input: Tensor<T> },
    MaxPool { argmax: Vec<u32>, input_shape: Vec<usize> },
    Relu { input: Tensor<T> },
    Fully { input: Vec<T> },
}

/// Activations cached by [`network_forward`] for one input image.
pub struct ForwardCache<T: Scalar> {
    fingerprint: u64,
    records: Vec<LayerRecord<T>>,
}

fn check_params_layout<T: Scalar>(spec: &NetworkSpec, params: &Parameters<T>) -> Result<()> {
    if params.layers.len() != spec.layers().len() {
        return Err(Error::ShapeMismatch(format!(
            "parameters cover {} layers, spec has {}",
            params.layers.len(),
            spec.layers().len()
        )));
    }
    Ok(())
}

/// Runs the network, returning the descriptor and a cache for backward.
pub fn network_forward<T: Scalar>(
    spec: &NetworkSpec,
    params: &Parameters<T>,
    image: &Tensor<T>,
) -> Result<(Vec<T>, ForwardCache<T>)> {
    check_params_layout(spec, params)?;
    let (c, h, w) = spec.input();
    if image.shape() != [c, h, w] {
        return Err(Error::ShapeMismatch(format!(
            "image shape {:?}, spec input is [{}, {}, {}]",
            image.shape(),
            c,
            h,
            w
        )));
    }
    let mut records = Vec::with_capacity(spec.layers().len());
    let mut value = image.clone();
    for (layer, entry) in spec.layers().iter().zip(&params.layers) {
        value = match layer {
            LayerSpec::Conv { .. } => {
                let p = entry.as_ref().expect("conv layer has parameters");
                let out = layers::conv2d_forward(&value, &p.weights, &p.bias)?;
                records.push(LayerRecord::Conv { input: value });
                out
            }
            LayerSpec::MaxPool2x2 => {
                let (out, argmax) = layers::maxpool2x2_forward(&value)?;
                records.push(LayerRecord::MaxPool {
                    argmax,
                    input_shape: value.shape().to_vec(),
                });
                out
            }
            LayerSpec::Relu => {
                let out = layers::relu_forward(&value);
                records.push(LayerRecord::Relu { input: value });
                out
            }
            LayerSpec::Fully { .. } => {
                let p = entry.as_ref().expect("fully layer has parameters");
                let flat = value.into_data();
                let out = layers::fully_forward(&flat, &p.weights, &p.bias)?;
                records.push(LayerRecord::Fully { input: flat });
                let len = out.len();
                Tensor::from_vec(&[len], out)?
            }
        };
    }
    let descriptor = value.into_data();
    Ok((
        descriptor,
        ForwardCache {
            fingerprint: spec.fingerprint(),
            records,
        },
    ))
}

/// Backpropagates `grad_descriptor` through the cached forward pass and
/// returns per-layer parameter gradients. The gradient with respect to the
/// input image has no consumer and is not formed.
pub fn network_backward<T: Scalar>(
    spec: &NetworkSpec,
    params: &Parameters<T>,
    cache: &ForwardCache<T>,
    grad_descriptor: &[T],
) -> Result<Gradients<T>> {
    check_params_layout(spec, params)?;
    if cache.fingerprint != spec.fingerprint() || cache.records.len() != spec.layers().len() {
        return Err(Error::StaleCache(
            "cache was produced by a different network spec".into(),
        ));
    }
    if grad_descriptor.len() != spec.descriptor_dim() {
        return Err(Error::ShapeMismatch(format!(
            "grad length {}, descriptor dim {}",
            grad_descriptor.len(),
            spec.descriptor_dim()
        )));
    }
    let mut grads = Gradients::zeros_like(params);
    let mut grad = Tensor::from_vec(&[grad_descriptor.len()], grad_descriptor.to_vec())?;
    for idx in (0..spec.layers().len()).rev() {
        let record = &cache.records[idx];
        grad = match (&spec.layers()[idx], record) {
            (LayerSpec::Conv { .. }, LayerRecord::Conv { input }) => {
                let p = params.layers[idx].as_ref().expect("conv params");
                let go =
                    Tensor::from_vec(expected_conv_out(input, &p.weights).as_slice(), grad.into_data())?;
                let (gx, gw, gb) = layers::conv2d_backward(input, &p.weights, &go, idx > 0)?;
                grads.layers[idx] = Some(LayerGrads {
                    weights: gw,
                    bias: gb,
                });
                match gx {
                    Some(g) => g,
                    None => break,
                }
            }
            (LayerSpec::MaxPool2x2, LayerRecord::MaxPool { argmax, input_shape }) => {
                let out_shape: Vec<usize> =
                    vec![input_shape[0], input_shape[1] / 2, input_shape[2] / 2];
                let go = Tensor::from_vec(&out_shape, grad.into_data())?;
                layers::maxpool2x2_backward(input_shape, argmax, &go)?
            }
            (LayerSpec::Relu, LayerRecord::Relu { input }) => {
                let go = Tensor::from_vec(input.shape(), grad.into_data())?;
                layers::relu_backward(input, &go)?
            }
            (LayerSpec::Fully { .. }, LayerRecord::Fully { input }) => {
                let p = params.layers[idx].as_ref().expect("fully params");
                let (gx, gw, gb) = layers::fully_backward(input, &p.weights, grad.data())?;
                grads.layers[idx] = Some(LayerGrads {
                    weights: gw,
                    bias: gb,
                });
                let len = gx.len();
                Tensor::from_vec(&[len], gx)?
            }
            _ => {
                return Err(Error::StaleCache(
                    "cache records do not line up with spec layers".into(),
                ))
            }
        };
    }
    Ok(grads)
}

fn expected_conv_out<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>) -> Vec<usize> {
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let (oc, kh, kw) = (weights.shape()[0], weights.shape()[2], weights.shape()[3]);
    vec![oc, h - kh + 1, w - kw + 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec::new(
            (1, 6, 6),
            vec![
                LayerSpec::Conv {
                    out_channels: 2,
                    kernel_h: 3,
                    kernel_w: 3,
                },
                LayerSpec::MaxPool2x2,
                LayerSpec::Relu,
                LayerSpec::Fully { out_dim: 5 },
                LayerSpec::Relu,
                LayerSpec::Fully { out_dim: 3 },
            ],
            3,
        )
        .unwrap()
    }

    #[test]
    fn spec_rejects_trailing_activation() {
        let err = NetworkSpec::new(
            (1, 4, 4),
            vec![LayerSpec::Fully { out_dim: 3 }, LayerSpec::Relu],
            3,
        )
        .unwrap_err();
        assert!(err.to_string().contains("must be Fully"));
    }

    #[test]
    fn spec_rejects_descriptor_dim_mismatch() {
        let err =
            NetworkSpec::new((1, 4, 4), vec![LayerSpec::Fully { out_dim: 3 }], 4).unwrap_err();
        assert!(err.to_string().contains("descriptor dim is 4"));
    }

    #[test]
    fn spec_rejects_odd_pool_input() {
        let err = NetworkSpec::new(
            (1, 5, 6),
            vec![LayerSpec::MaxPool2x2, LayerSpec::Fully { out_dim: 2 }],
            2,
        )
        .unwrap_err();
        assert!(err.to_string().contains("even extents"));
    }

    #[test]
    fn spec_chains_shapes() {
        let spec = tiny_spec();
        let shapes = spec.value_shapes().unwrap();
        assert_eq!(shapes[1], ValueShape::Chw(2, 4, 4));
        assert_eq!(shapes[2], ValueShape::Chw(2, 2, 2));
        assert_eq!(shapes.last().unwrap(), &ValueShape::Flat(3));
    }

    #[test]
    fn zero_parameters_give_zero_descriptor() {
        let spec = tiny_spec();
        let params = Parameters::<f32>::zeros(&spec).unwrap();
        let image = Tensor::from_vec(&[1, 6, 6], (0..36).map(|v| v as f32).collect()).unwrap();
        let (desc, _) = network_forward(&spec, &params, &image).unwrap();
        assert_eq!(desc, vec![0.0; 3]);
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = tiny_spec();
        let mut rng = crate::rng::stream(3, "net-init");
        let params: Parameters<f32> = init_parameters(&spec, &mut rng).unwrap();
        let image = Tensor::from_vec(&[1, 6, 6], (0..36).map(|v| v as f32 / 36.0).collect())
            .unwrap();
        let (d1, _) = network_forward(&spec, &params, &image).unwrap();
        let (d2, _) = network_forward(&spec, &params, &image).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn backward_zero_grad_gives_zero_parameter_grads() {
        let spec = tiny_spec();
        let mut rng = crate::rng::stream(4, "net-init");
        let params: Parameters<f32> = init_parameters(&spec, &mut rng).unwrap();
        let image = Tensor::from_vec(&[1, 6, 6], (0..36).map(|v| v as f32 / 7.0).collect())
            .unwrap();
        let (_, cache) = network_forward(&spec, &params, &image).unwrap();
        let grads = network_backward(&spec, &params, &cache, &[0.0, 0.0, 0.0]).unwrap();
        for entry in grads.layers.iter().flatten() {
            assert!(entry.weights.data().iter().all(|&v| v == 0.0));
            assert!(entry.bias.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn backward_detects_stale_cache() {
        let spec = tiny_spec();
        let other = NetworkSpec::new(
            (1, 6, 6),
            vec![LayerSpec::Fully { out_dim: 3 }],
            3,
        )
        .unwrap();
        let params = Parameters::<f32>::zeros(&spec).unwrap();
        let other_params = Parameters::<f32>::zeros(&other).unwrap();
        let image = Tensor::<f32>::zeros(&[1, 6, 6]);
        let (_, cache) = network_forward(&spec, &params, &image).unwrap();
        let err = network_backward(&other, &other_params, &cache, &[0.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::StaleCache(_)));
    }

    #[test]
    fn single_fully_weight_grad_is_outer_product() {
        let spec = NetworkSpec::new((1, 1, 2), vec![LayerSpec::Fully { out_dim: 2 }], 2).unwrap();
        let mut params = Parameters::<f32>::zeros(&spec).unwrap();
        params.layers[0]
            .as_mut()
            .unwrap()
            .weights
            .data_mut()
            .copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        let image = Tensor::from_vec(&[1, 1, 2], vec![5.0, -1.0]).unwrap();
        let (_, cache) = network_forward(&spec, &params, &image).unwrap();
        let grads = network_backward(&spec, &params, &cache, &[2.0, -3.0]).unwrap();
        let gw = &grads.layers[0].as_ref().unwrap().weights;
        assert_eq!(gw.data(), &[10.0, -2.0, -15.0, 3.0]);
    }

    #[test]
    fn init_draws_are_reproducible_and_in_range() {
        let spec = tiny_spec();
        let p1: Parameters<f32> =
            init_parameters(&spec, &mut crate::rng::stream(9, "init")).unwrap();
        let p2: Parameters<f32> =
            init_parameters(&spec, &mut crate::rng::stream(9, "init")).unwrap();
        assert_eq!(p1, p2);
        let conv = p1.layers[0].as_ref().unwrap();
        let a = (6.0f32 / (9.0 + 18.0)).sqrt();
        assert!(conv.weights.data().iter().all(|v| v.abs() <= a));
        assert!(conv.bias.iter().all(|&v| v == 0.0));
    }
}
