//! Dense row-major tensors and the two spatial ops the layer stack needs.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} implies {expected} elements, got {got}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("{context}: expected shape {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },
    #[error("{context}: dimension must be a positive size, got {got}")]
    BadDimension { context: &'static str, got: usize },
}

/// Dense N-dimensional array, row-major, the carrier for feature maps,
/// weights and gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    /// Builds a tensor, validating element count and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(TensorError::DataLength {
                expected,
                got: data.len(),
                shape,
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor for values produced by finite arithmetic.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<F>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::from_parts(shape, vec![F::zero(); len])
    }

    pub fn filled(shape: Vec<usize>, value: F) -> Self {
        let len = shape.iter().product();
        Self::from_parts(shape, vec![value; len])
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> F) -> Self {
        let len = shape.iter().product();
        Self::from_parts(shape, (0..len).map(&mut f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// True when every element is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// Reinterprets the flat data under a new shape of equal element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(TensorError::DataLength {
                expected,
                got: self.data.len(),
                shape,
            });
        }
        Ok(Self::from_parts(shape, self.data.clone()))
    }

    fn shape_string(&self) -> String {
        format!("{:?}", self.shape)
    }
}

/// Views a rank-2 `[H, W]` tensor as `[H, W, 1]`, leaving rank-3 untouched.
fn as_hwc<F: Scalar>(t: &Tensor<F>, context: &'static str) -> Result<(usize, usize, usize), TensorError> {
    match *t.shape() {
        [h, w] => Ok((h, w, 1)),
        [h, w, c] => Ok((h, w, c)),
        _ => Err(TensorError::ShapeMismatch {
            context,
            expected: "[H, W] or [H, W, C]".into(),
            got: t.shape_string(),
        }),
    }
}

/// Views kernels as `[kh, kw, C, K]`; rank-2 `[kh, kw]` means one single-channel filter.
fn as_khkwck<F: Scalar>(t: &Tensor<F>, context: &'static str) -> Result<(usize, usize, usize, usize), TensorError> {
    match *t.shape() {
        [kh, kw] => Ok((kh, kw, 1, 1)),
        [kh, kw, c, k] => Ok((kh, kw, c, k)),
        _ => Err(TensorError::ShapeMismatch {
            context,
            expected: "[kh, kw] or [kh, kw, C, K]".into(),
            got: t.shape_string(),
        }),
    }
}

/// Valid cross-correlation of `ifmap [H, W, C]` with `kernels [kh, kw, C, K]`,
/// producing `[H-kh+1, W-kw+1, K]`. No kernel flip.
pub fn conv2d_valid<F: Scalar>(ifmap: &Tensor<F>, kernels: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
    let (h, w, c) = as_hwc(ifmap, "conv2d_valid ifmap")?;
    let (kh, kw, kc, k) = as_khkwck(kernels, "conv2d_valid kernels")?;
    if kc != c {
        return Err(TensorError::ShapeMismatch {
            context: "conv2d_valid channels",
            expected: format!("kernel channel dim {c}"),
            got: kc.to_string(),
        });
    }
    if kh > h || kw > w {
        return Err(TensorError::ShapeMismatch {
            context: "conv2d_valid kernel size",
            expected: format!("kernel no larger than ifmap {h}x{w}"),
            got: format!("{kh}x{kw}"),
        });
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let x = ifmap.data();
    let kd = kernels.data();
    let mut out = vec![F::zero(); oh * ow * k];
    for i in 0..oh {
        for j in 0..ow {
            for kk in 0..k {
                let mut acc = F::zero();
                for r in 0..kh {
                    let row_base = (i + r) * w * c;
                    for xx in 0..kw {
                        let px_base = row_base + (j + xx) * c;
                        let kr_base = (r * kw + xx) * kc * k;
                        for cc in 0..c {
                            acc += x[px_base + cc] * kd[kr_base + cc * k + kk];
                        }
                    }
                }
                out[(i * ow + j) * k + kk] = acc;
            }
        }
    }
    Ok(Tensor::from_parts(vec![oh, ow, k], out))
}

/// Zero-pads `ifmap` so a subsequent valid convolution with an odd-sized
/// kernel preserves the spatial dims.
pub fn pad_same<F: Scalar>(ifmap: &Tensor<F>, kh: usize, kw: usize) -> Result<Tensor<F>, TensorError> {
    let (h, w, c) = as_hwc(ifmap, "pad_same ifmap")?;
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(TensorError::BadDimension {
            context: "pad_same requires odd kernel dims",
            got: if kh % 2 == 0 { kh } else { kw },
        });
    }
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let (hh, ww) = (h + 2 * ph, w + 2 * pw);
    let mut out = vec![F::zero(); hh * ww * c];
    let x = ifmap.data();
    for i in 0..h {
        let src = i * w * c;
        let dst = ((i + ph) * ww + pw) * c;
        out[dst..dst + w * c].copy_from_slice(&x[src..src + w * c]);
    }
    Ok(Tensor::from_parts(vec![hh, ww, c], out))
}

/// Cross-correlation with zero padding that preserves spatial dims.
pub fn conv2d_same<F: Scalar>(ifmap: &Tensor<F>, kernels: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
    let (kh, kw, _, _) = as_khkwck(kernels, "conv2d_same kernels")?;
    let padded = pad_same(ifmap, kh, kw)?;
    conv2d_valid(&padded, kernels)
}

/// 2x2 average pooling; spatial dims must be even.
pub fn avg_pool2<F: Scalar>(x: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
    let (h, w, c) = as_hwc(x, "avg_pool2 input")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(TensorError::BadDimension {
            context: "avg_pool2 requires even spatial dims",
            got: if h % 2 != 0 { h } else { w },
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let quarter = F::from_f64(0.25);
    let d = x.data();
    let mut out = vec![F::zero(); oh * ow * c];
    for i in 0..oh {
        for j in 0..ow {
            let a = (2 * i * w + 2 * j) * c;
            let b = (2 * i * w + 2 * j + 1) * c;
            let e = ((2 * i + 1) * w + 2 * j) * c;
            let f = ((2 * i + 1) * w + 2 * j + 1) * c;
            for cc in 0..c {
                out[(i * ow + j) * c + cc] = (d[a + cc] + d[b + cc] + d[e + cc] + d[f + cc]) * quarter;
            }
        }
    }
    Ok(Tensor::from_parts(vec![oh, ow, c], out))
}

#[cfg(test)]
mod tests {
    use super::*;

    type T = Tensor<f64>;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-30)
    }

    /// Quadruple-nested-loop reference, independent of the production path.
    fn conv_oracle(ifmap: &T, kernels: &T) -> Vec<f64> {
        let (h, w, c) = match *ifmap.shape() {
            [h, w] => (h, w, 1),
            [h, w, c] => (h, w, c),
            _ => unreachable!(),
        };
        let (kh, kw, _, k) = match *kernels.shape() {
            [kh, kw] => (kh, kw, 1, 1),
            [kh, kw, c, k] => (kh, kw, c, k),
            _ => unreachable!(),
        };
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let mut out = vec![0.0; oh * ow * k];
        for i in 0..oh {
            for j in 0..ow {
                for kk in 0..k {
                    let mut s = 0.0;
                    for r in 0..kh {
                        for xx in 0..kw {
                            for cc in 0..c {
                                s += ifmap.data()[((i + r) * w + j + xx) * c + cc]
                                    * kernels.data()[((r * kw + xx) * c + cc) * k + kk];
                            }
                        }
                    }
                    out[(i * ow + j) * k + kk] = s;
                }
            }
        }
        out
    }

    fn rand_tensor(shape: Vec<usize>, seed: u64) -> T {
        // Small deterministic LCG so oracle tests need no external RNG.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        Tensor::from_fn(shape, |_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn new_rejects_length_mismatch_and_nonfinite() {
        assert!(Tensor::<f64>::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f64>::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::<f64>::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn conv_output_shape_matches_five_by_five_example() {
        let ifmap = rand_tensor(vec![5, 5], 1);
        let kernel = rand_tensor(vec![3, 3], 2);
        let out = conv2d_valid(&ifmap, &kernel).unwrap();
        assert_eq!(out.shape(), &[3, 3, 1]);
    }

    #[test]
    fn conv_identity_kernel_reproduces_ifmap() {
        let ifmap = rand_tensor(vec![4, 6], 3);
        let kernel = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let out = conv2d_valid(&ifmap, &kernel).unwrap();
        assert_eq!(out.data(), ifmap.data());
    }

    #[test]
    fn conv_matches_loop_oracle_on_200_random_instances() {
        for trial in 0..200u64 {
            let h = 3 + (trial % 8) as usize;
            let w = 3 + ((trial / 8) % 8) as usize;
            let c = 1 + (trial % 3) as usize;
            let kh = 1 + (trial % 3) as usize;
            let kw = 1 + ((trial / 3) % 3) as usize;
            let k = 1 + (trial % 4) as usize;
            let ifmap = rand_tensor(vec![h + kh, w + kw, c], trial * 7 + 1);
            let kernels = rand_tensor(vec![kh, kw, c, k], trial * 13 + 5);
            let got = conv2d_valid(&ifmap, &kernels).unwrap();
            let want = conv_oracle(&ifmap, &kernels);
            for (g, w_) in got.data().iter().zip(&want) {
                assert!(rel_err(*g, *w_) < 1e-12, "trial {trial}: {g} vs {w_}");
            }
        }
    }

    #[test]
    fn conv_rejects_oversized_kernel_and_channel_mismatch() {
        let ifmap = rand_tensor(vec![3, 3], 1);
        let kernel = rand_tensor(vec![4, 4], 2);
        assert!(conv2d_valid(&ifmap, &kernel).is_err());
        let ifmap = rand_tensor(vec![5, 5, 2], 1);
        let kernel = rand_tensor(vec![3, 3, 3, 1], 2);
        assert!(conv2d_valid(&ifmap, &kernel).is_err());
    }

    #[test]
    fn conv_same_preserves_spatial_dims() {
        let ifmap = rand_tensor(vec![8, 8, 2], 9);
        let kernels = rand_tensor(vec![5, 5, 2, 3], 10);
        let out = conv2d_same(&ifmap, &kernels).unwrap();
        assert_eq!(out.shape(), &[8, 8, 3]);
        // Interior entries agree with the valid convolution.
        let valid = conv2d_valid(&ifmap, &kernels).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..3 {
                    let s = out.data()[((i + 2) * 8 + j + 2) * 3 + k];
                    let v = valid.data()[(i * 4 + j) * 3 + k];
                    assert!((s - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pool_shape_matches_paper_dims() {
        let x = rand_tensor(vec![24, 24, 6], 4);
        let out = avg_pool2(&x).unwrap();
        assert_eq!(out.shape(), &[12, 12, 6]);
    }

    #[test]
    fn pool_constant_stays_constant() {
        let x = Tensor::<f64>::filled(vec![6, 4, 2], 0.75);
        let out = avg_pool2(&x).unwrap();
        assert_eq!(out.shape(), &[3, 2, 2]);
        assert!(out.data().iter().all(|&v| (v - 0.75).abs() < 1e-15));
    }

    #[test]
    fn pool_matches_window_means() {
        let x = rand_tensor(vec![4, 4], 11);
        let out = avg_pool2(&x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let d = x.data();
                let mean = (d[2 * i * 4 + 2 * j]
                    + d[2 * i * 4 + 2 * j + 1]
                    + d[(2 * i + 1) * 4 + 2 * j]
                    + d[(2 * i + 1) * 4 + 2 * j + 1])
                    / 4.0;
                assert!((out.data()[i * 2 + j] - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pool_rejects_odd_dims() {
        let x = rand_tensor(vec![5, 4], 12);
        assert!(avg_pool2(&x).is_err());
    }
}
