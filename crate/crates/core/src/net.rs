//! Layer stack, reverse-mode gradients and the SGD update.
//!
//! The layer set is exactly what the three benchmark architectures need:
//! valid/same convolution, 2x2 average pooling, dense, sigmoid/relu,
//! softmax and flatten. Everything is a pure function of its inputs; batch
//! handling lives in `train`.

use rand::Rng;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::{avg_pool2, conv2d_valid, pad_same, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("layer {index} ({kind}): {reason}")]
    BadLayer {
        index: usize,
        kind: &'static str,
        reason: String,
    },
    #[error("input shape {got:?} does not match network input {expected:?}")]
    BadInput { expected: Vec<usize>, got: Vec<usize> },
    #[error("weights missing for trainable layer {index}")]
    MissingWeights { index: usize },
    #[error("weight shape {got:?} does not match layer {index} expectation {expected:?}")]
    BadWeightShape {
        index: usize,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("stale cache: {reason}")]
    StaleCache { reason: String },
    #[error("loss/target mismatch: {reason}")]
    BadTarget { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    #[default]
    Valid,
    Same,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layer {
    Conv2D {
        kernels: usize,
        kh: usize,
        kw: usize,
        padding: Padding,
    },
    AvgPool2,
    Dense {
        n_in: usize,
        n_out: usize,
    },
    Activation(Activation),
    Softmax,
    Flatten,
}

impl Layer {
    pub fn is_trainable(&self) -> bool {
        matches!(self, Layer::Conv2D { .. } | Layer::Dense { .. })
    }
}

/// Ordered layer stack with a fixed input shape; construction checks that
/// consecutive layer shapes compose.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    /// `shapes[i]` is the input shape of layer `i`; `shapes[len]` the output.
    shapes: Vec<Vec<usize>>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self, NetError> {
        let mut shapes = vec![input_shape.clone()];
        for (index, layer) in layers.iter().enumerate() {
            let cur = shapes.last().unwrap().clone();
            let next = match layer {
                Layer::Conv2D { kernels, kh, kw, padding } => {
                    let (h, w, _c) = expect_hwc(&cur, index, "Conv2D")?;
                    match padding {
                        Padding::Valid => {
                            if *kh > h || *kw > w {
                                return Err(NetError::BadLayer {
                                    index,
                                    kind: "Conv2D",
                                    reason: format!("kernel {kh}x{kw} larger than input {h}x{w}"),
                                });
                            }
                            vec![h - kh + 1, w - kw + 1, *kernels]
                        }
                        Padding::Same => {
                            if kh % 2 == 0 || kw % 2 == 0 {
                                return Err(NetError::BadLayer {
                                    index,
                                    kind: "Conv2D",
                                    reason: "same padding needs odd kernel dims".into(),
                                });
                            }
                            vec![h, w, *kernels]
                        }
                    }
                }
                Layer::AvgPool2 => {
                    let (h, w, c) = expect_hwc(&cur, index, "AvgPool2")?;
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(NetError::BadLayer {
                            index,
                            kind: "AvgPool2",
                            reason: format!("odd spatial dims {h}x{w}"),
                        });
                    }
                    vec![h / 2, w / 2, c]
                }
                Layer::Dense { n_in, n_out } => {
                    if cur != [*n_in] {
                        return Err(NetError::BadLayer {
                            index,
                            kind: "Dense",
                            reason: format!("expects input [{n_in}], got {cur:?}"),
                        });
                    }
                    vec![*n_out]
                }
                Layer::Activation(_) | Layer::Softmax => cur,
                Layer::Flatten => vec![cur.iter().product()],
            };
            shapes.push(next);
        }
        Ok(Self {
            input_shape,
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    /// Input shape of layer `i`.
    pub fn shape_at(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    /// Expected weight tensor shape of layer `i`, if trainable.
    pub fn weight_shape(&self, i: usize) -> Option<Vec<usize>> {
        match &self.layers[i] {
            Layer::Conv2D { kernels, kh, kw, .. } => {
                let c = *self.shapes[i].last().unwrap();
                Some(vec![*kh, *kw, c, *kernels])
            }
            Layer::Dense { n_in, n_out } => Some(vec![*n_out, *n_in]),
            _ => None,
        }
    }

    /// Bias length of layer `i`, if trainable.
    pub fn bias_len(&self, i: usize) -> Option<usize> {
        match &self.layers[i] {
            Layer::Conv2D { kernels, .. } => Some(*kernels),
            Layer::Dense { n_out, .. } => Some(*n_out),
            _ => None,
        }
    }

    /// Human labels for trainable layers: conv1, conv2, ..., fc1, fc2, ...
    pub fn trainable_labels(&self) -> Vec<(usize, String)> {
        let mut out = Vec::new();
        let (mut nconv, mut nfc) = (0usize, 0usize);
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv2D { .. } => {
                    nconv += 1;
                    out.push((i, format!("conv{nconv}")));
                }
                Layer::Dense { .. } => {
                    nfc += 1;
                    out.push((i, format!("fc{nfc}")));
                }
                _ => {}
            }
        }
        out
    }
}

fn expect_hwc(shape: &[usize], index: usize, kind: &'static str) -> Result<(usize, usize, usize), NetError> {
    match *shape {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(NetError::BadLayer {
            index,
            kind,
            reason: format!("expects [H, W, C] input, got {shape:?}"),
        }),
    }
}

/// Weight tensor plus per-output-channel bias for one trainable layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<F> {
    pub w: Tensor<F>,
    pub b: Vec<F>,
}

/// Per-layer parameters, index-aligned with `NetworkSpec::layers`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<F> {
    pub layers: Vec<Option<LayerWeights<F>>>,
}

impl<F: Scalar> Weights<F> {
    pub fn zeros(net: &NetworkSpec) -> Self {
        let layers = (0..net.layers().len())
            .map(|i| {
                net.weight_shape(i).map(|shape| LayerWeights {
                    w: Tensor::zeros(shape),
                    b: vec![F::zero(); net.bias_len(i).unwrap()],
                })
            })
            .collect();
        Self { layers }
    }

    /// Glorot-uniform weights (`r = sqrt(6/(fan_in+fan_out))`), zero biases.
    /// Draw order is fixed: layers in order, tensor elements row-major.
    pub fn init(net: &NetworkSpec, rng: &mut impl Rng) -> Self {
        let layers = (0..net.layers().len())
            .map(|i| {
                net.weight_shape(i).map(|shape| {
                    let (fan_in, fan_out) = match &net.layers()[i] {
                        Layer::Conv2D { kernels, kh, kw, .. } => {
                            let c = shape[2];
                            (kh * kw * c, kh * kw * kernels)
                        }
                        Layer::Dense { n_in, n_out } => (*n_in, *n_out),
                        _ => unreachable!(),
                    };
                    let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let w = Tensor::from_fn(shape, |_| {
                        F::from_f64((rng.random::<f64>() * 2.0 - 1.0) * r)
                    });
                    LayerWeights {
                        w,
                        b: vec![F::zero(); net.bias_len(i).unwrap()],
                    }
                })
            })
            .collect();
        Self { layers }
    }

    pub fn validate(&self, net: &NetworkSpec) -> Result<(), NetError> {
        if self.layers.len() != net.layers().len() {
            return Err(NetError::StaleCache {
                reason: format!(
                    "weights cover {} layers, network has {}",
                    self.layers.len(),
                    net.layers().len()
                ),
            });
        }
        for (i, slot) in self.layers.iter().enumerate() {
            match (slot, net.weight_shape(i)) {
                (Some(lw), Some(expected)) => {
                    if lw.w.shape() != expected.as_slice() {
                        return Err(NetError::BadWeightShape {
                            index: i,
                            expected,
                            got: lw.w.shape().to_vec(),
                        });
                    }
                    if lw.b.len() != net.bias_len(i).unwrap() {
                        return Err(NetError::BadWeightShape {
                            index: i,
                            expected: vec![net.bias_len(i).unwrap()],
                            got: vec![lw.b.len()],
                        });
                    }
                }
                (None, None) => {}
                (Some(_), None) => {
                    return Err(NetError::BadWeightShape {
                        index: i,
                        expected: vec![],
                        got: vec![0],
                    })
                }
                (None, Some(_)) => return Err(NetError::MissingWeights { index: i }),
            }
        }
        Ok(())
    }

    /// `self += scale * other`, elementwise over every parameter.
    pub fn add_scaled(&mut self, other: &Self, scale: F) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                for (x, y) in a.w.data_mut().iter_mut().zip(b.w.data()) {
                    *x += scale * *y;
                }
                for (x, y) in a.b.iter_mut().zip(&b.b) {
                    *x += scale * *y;
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flatten()
            .map(|lw| lw.w.len() + lw.b.len())
            .sum()
    }
}

/// Per-layer activations recorded by `forward` for the backward pass.
/// `acts[i]` is the input to layer `i`; `acts[len]` the network output.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    acts: Vec<Tensor<F>>,
}

impl<F: Scalar> ForwardCache<F> {
    pub fn output(&self) -> &Tensor<F> {
        self.acts.last().unwrap()
    }
}

fn sigmoid<F: Scalar>(z: F) -> F {
    F::one() / (F::one() + (-z).exp())
}

fn softmax<F: Scalar>(z: &Tensor<F>) -> Tensor<F> {
    let max = z.data().iter().cloned().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = z.data().iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(F::zero(), |a, &b| a + b);
    Tensor::from_parts(z.shape().to_vec(), exps.into_iter().map(|e| e / sum).collect())
}

pub(crate) fn apply_layer<F: Scalar>(
    layer: &Layer,
    lw: Option<&LayerWeights<F>>,
    x: &Tensor<F>,
) -> Result<Tensor<F>, NetError> {
    match layer {
        Layer::Conv2D { padding, kh, kw, .. } => {
            let lw = lw.expect("validated");
            let mut y = match padding {
                Padding::Valid => conv2d_valid(x, &lw.w)?,
                Padding::Same => conv2d_valid(&pad_same(x, *kh, *kw)?, &lw.w)?,
            };
            let k = *y.shape().last().unwrap();
            for (i, v) in y.data_mut().iter_mut().enumerate() {
                *v += lw.b[i % k];
            }
            Ok(y)
        }
        Layer::AvgPool2 => Ok(avg_pool2(x)?),
        Layer::Dense { n_in, n_out } => {
            let lw = lw.expect("validated");
            let w = lw.w.data();
            let xv = x.data();
            let mut y = Vec::with_capacity(*n_out);
            for j in 0..*n_out {
                let row = &w[j * n_in..(j + 1) * n_in];
                let mut acc = lw.b[j];
                for (wi, xi) in row.iter().zip(xv) {
                    acc += *wi * *xi;
                }
                y.push(acc);
            }
            Ok(Tensor::from_parts(vec![*n_out], y))
        }
        Layer::Activation(Activation::Sigmoid) => Ok(x.map(sigmoid)),
        Layer::Activation(Activation::Relu) => Ok(x.map(|v| if v > F::zero() { v } else { F::zero() })),
        Layer::Softmax => Ok(softmax(x)),
        Layer::Flatten => Ok(x.reshaped(vec![x.len()])?),
    }
}

/// Runs the network on one example. Deterministic: two calls with the same
/// weights and input produce bitwise-identical outputs.
pub fn forward<F: Scalar>(
    net: &NetworkSpec,
    weights: &Weights<F>,
    x: &Tensor<F>,
) -> Result<(Tensor<F>, ForwardCache<F>), NetError> {
    weights.validate(net)?;
    if x.shape() != net.input_shape() {
        return Err(NetError::BadInput {
            expected: net.input_shape().to_vec(),
            got: x.shape().to_vec(),
        });
    }
    let mut acts = Vec::with_capacity(net.layers().len() + 1);
    acts.push(x.clone());
    for (i, layer) in net.layers().iter().enumerate() {
        let y = apply_layer(layer, weights.layers[i].as_ref(), acts.last().unwrap())?;
        acts.push(y);
    }
    let out = acts.last().unwrap().clone();
    Ok((out, ForwardCache { acts }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    MeanSquaredError,
}

/// Per-example loss. Cross-entropy expects a probability vector (>= 0,
/// normally from softmax); MSE is the plain sum of squared errors.
pub fn loss_value<F: Scalar>(kind: LossKind, y: &Tensor<F>, target: &Tensor<F>) -> Result<F, NetError> {
    if y.shape() != target.shape() {
        return Err(NetError::BadTarget {
            reason: format!("output {:?} vs target {:?}", y.shape(), target.shape()),
        });
    }
    let v = match kind {
        LossKind::CrossEntropy => {
            let tiny = F::min_positive_value();
            -y.data()
                .iter()
                .zip(target.data())
                .fold(F::zero(), |acc, (&p, &t)| acc + t * p.max(tiny).ln())
        }
        LossKind::MeanSquaredError => y
            .data()
            .iter()
            .zip(target.data())
            .fold(F::zero(), |acc, (&p, &t)| acc + (p - t) * (p - t)),
    };
    Ok(v)
}

pub fn one_hot<F: Scalar>(label: usize, classes: usize) -> Tensor<F> {
    let mut v = vec![F::zero(); classes];
    v[label] = F::one();
    Tensor::from_parts(vec![classes], v)
}

/// Gradients of the per-example loss with respect to every parameter.
/// `cache` must come from a `forward` call with the same network and weights.
pub fn backward<F: Scalar>(
    net: &NetworkSpec,
    weights: &Weights<F>,
    cache: &ForwardCache<F>,
    target: &Tensor<F>,
    loss: LossKind,
) -> Result<Weights<F>, NetError> {
    weights.validate(net)?;
    let n_layers = net.layers().len();
    if cache.acts.len() != n_layers + 1 {
        return Err(NetError::StaleCache {
            reason: format!(
                "cache holds {} activations, network needs {}",
                cache.acts.len(),
                n_layers + 1
            ),
        });
    }
    for (i, act) in cache.acts.iter().enumerate() {
        let expected = if i < n_layers { net.shape_at(i) } else { net.output_shape() };
        if act.shape() != expected {
            return Err(NetError::StaleCache {
                reason: format!("activation {i} has shape {:?}, expected {expected:?}", act.shape()),
            });
        }
    }
    let y = cache.output();
    if y.shape() != target.shape() {
        return Err(NetError::BadTarget {
            reason: format!("output {:?} vs target {:?}", y.shape(), target.shape()),
        });
    }

    let mut grads = Weights::zeros(net);

    // Softmax + cross-entropy collapse to (y - t) at the logits.
    let fused_softmax_ce =
        loss == LossKind::CrossEntropy && matches!(net.layers().last(), Some(Layer::Softmax));
    let mut upto = n_layers;
    let mut delta = if fused_softmax_ce {
        upto -= 1;
        Tensor::from_parts(
            y.shape().to_vec(),
            y.data().iter().zip(target.data()).map(|(&p, &t)| p - t).collect(),
        )
    } else {
        match loss {
            LossKind::MeanSquaredError => Tensor::from_parts(
                y.shape().to_vec(),
                y.data()
                    .iter()
                    .zip(target.data())
                    .map(|(&p, &t)| F::from_f64(2.0) * (p - t))
                    .collect(),
            ),
            LossKind::CrossEntropy => {
                let tiny = F::min_positive_value();
                Tensor::from_parts(
                    y.shape().to_vec(),
                    y.data()
                        .iter()
                        .zip(target.data())
                        .map(|(&p, &t)| -t / p.max(tiny))
                        .collect(),
                )
            }
        }
    };

    for i in (0..upto).rev() {
        let x = &cache.acts[i];
        let out = &cache.acts[i + 1];
        delta = match &net.layers()[i] {
            Layer::Conv2D { padding, kh, kw, .. } => {
                let lw = weights.layers[i].as_ref().expect("validated");
                let g = grads.layers[i].as_mut().expect("zeros");
                let padded;
                let xin = match padding {
                    Padding::Valid => x,
                    Padding::Same => {
                        padded = pad_same(x, *kh, *kw)?;
                        &padded
                    }
                };
                let dx_padded = conv_backward(xin, &lw.w, &delta, g)?;
                match padding {
                    Padding::Valid => dx_padded,
                    Padding::Same => crop_center(&dx_padded, x.shape()),
                }
            }
            Layer::AvgPool2 => {
                let [h, w, c] = *x.shape() else { unreachable!() };
                let quarter = F::from_f64(0.25);
                let mut dx = vec![F::zero(); h * w * c];
                let dd = delta.data();
                let (oh, ow) = (h / 2, w / 2);
                for p in 0..h {
                    for q in 0..w {
                        for cc in 0..c {
                            dx[(p * w + q) * c + cc] = dd[((p / 2) * ow + q / 2) * c + cc] * quarter;
                        }
                    }
                }
                let _ = (oh, ow);
                Tensor::from_parts(vec![h, w, c], dx)
            }
            Layer::Dense { n_in, n_out } => {
                let lw = weights.layers[i].as_ref().expect("validated");
                let g = grads.layers[i].as_mut().expect("zeros");
                let dd = delta.data();
                let xv = x.data();
                let gw = g.w.data_mut();
                for j in 0..*n_out {
                    let dj = dd[j];
                    g.b[j] += dj;
                    let row = &mut gw[j * n_in..(j + 1) * n_in];
                    for (gi, xi) in row.iter_mut().zip(xv) {
                        *gi += dj * *xi;
                    }
                }
                let w = lw.w.data();
                let mut dx = vec![F::zero(); *n_in];
                for j in 0..*n_out {
                    let dj = dd[j];
                    let row = &w[j * n_in..(j + 1) * n_in];
                    for (dxi, wi) in dx.iter_mut().zip(row) {
                        *dxi += dj * *wi;
                    }
                }
                Tensor::from_parts(vec![*n_in], dx)
            }
            Layer::Activation(Activation::Sigmoid) => Tensor::from_parts(
                x.shape().to_vec(),
                delta
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(&d, &s)| d * s * (F::one() - s))
                    .collect(),
            ),
            Layer::Activation(Activation::Relu) => Tensor::from_parts(
                x.shape().to_vec(),
                delta
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&d, &z)| if z > F::zero() { d } else { F::zero() })
                    .collect(),
            ),
            Layer::Softmax => {
                // dz_i = y_i * (dy_i - sum_j dy_j y_j)
                let dot = delta
                    .data()
                    .iter()
                    .zip(out.data())
                    .fold(F::zero(), |acc, (&d, &s)| acc + d * s);
                Tensor::from_parts(
                    x.shape().to_vec(),
                    delta
                        .data()
                        .iter()
                        .zip(out.data())
                        .map(|(&d, &s)| s * (d - dot))
                        .collect(),
                )
            }
            Layer::Flatten => delta.reshaped(x.shape().to_vec())?,
        };
    }
    Ok(grads)
}

/// Accumulates kernel/bias gradients and returns the ifmap gradient.
fn conv_backward<F: Scalar>(
    x: &Tensor<F>,
    kernels: &Tensor<F>,
    delta: &Tensor<F>,
    grad: &mut LayerWeights<F>,
) -> Result<Tensor<F>, NetError> {
    let [h, w, c] = *x.shape() else {
        return Err(NetError::StaleCache {
            reason: "conv input lost HWC shape".into(),
        });
    };
    let [kh, kw, kc, k] = *kernels.shape() else { unreachable!() };
    let [oh, ow, ok] = *delta.shape() else { unreachable!() };
    debug_assert_eq!((kc, ok), (c, k));
    let xd = x.data();
    let dd = delta.data();
    let kd = kernels.data();
    let gk = grad.w.data_mut();
    let mut dx = vec![F::zero(); h * w * c];
    for i in 0..oh {
        for j in 0..ow {
            for kk in 0..k {
                let d = dd[(i * ow + j) * k + kk];
                grad.b[kk] += d;
                for r in 0..kh {
                    let row_base = (i + r) * w * c;
                    for xx in 0..kw {
                        let px = row_base + (j + xx) * c;
                        let kbase = (r * kw + xx) * c * k;
                        for cc in 0..c {
                            gk[kbase + cc * k + kk] += d * xd[px + cc];
                            dx[px + cc] += d * kd[kbase + cc * k + kk];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![h, w, c], dx))
}

/// Crops the spatial center of `t` down to `shape` (used to undo same-padding).
fn crop_center<F: Scalar>(t: &Tensor<F>, shape: &[usize]) -> Tensor<F> {
    let [hh, ww, c] = *t.shape() else { unreachable!() };
    let [h, w, _] = *shape else { unreachable!() };
    let (ph, pw) = ((hh - h) / 2, (ww - w) / 2);
    let mut out = vec![F::zero(); h * w * c];
    for i in 0..h {
        let src = ((i + ph) * ww + pw) * c;
        out[i * w * c..(i + 1) * w * c].copy_from_slice(&t.data()[src..src + w * c]);
    }
    Tensor::from_parts(shape.to_vec(), out)
}

/// Plain SGD: `w -= lr * g` elementwise, biases included.
pub fn sgd_step<F: Scalar>(weights: &mut Weights<F>, grads: &Weights<F>, lr: F) {
    weights.add_scaled(grads, -lr);
}
