//! Coefficient-domain inference.
//!
//! With weights polynomial per group, a dot product collapses to a handful of
//! moments: `sum_x (c0 + c1 x + c2 x^2) y_x = c0 d0 + c1 d1 + c2 d2` with
//! `d_k = sum_x x^k y_x`. Each moment vector is computed once per window row
//! (or per input group) and shared across every filter row, output row and
//! neuron that consumes it; that sharing is the computation reuse this module
//! realizes, and `schedule_trace` counts it.

use thiserror::Error;

use crate::hwcost::{pe_ops, CostError, CostParams};
use crate::net::{apply_layer, Layer, NetworkSpec, Padding};
use crate::polyproj::{CoeffStore, Degree, GroupAxis, LayerCoeffs, LayerGeom, LayerParams};
use crate::scalar::Scalar;
use crate::tensor::{pad_same, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum InferError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("geometry mismatch: {reason}")]
    Geometry { reason: String },
    #[error("schedule trace supports {supported}, got {got}")]
    UnsupportedTrace { supported: &'static str, got: String },
}

/// The moments `d_k = sum_x x^k y_x` of one window row or input group,
/// computed left to right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReuseVector<F> {
    pub degree: Degree,
    pub d: [F; 3],
}

impl<F: Scalar> ReuseVector<F> {
    pub fn from_window(values: impl IntoIterator<Item = F>, degree: Degree) -> Self {
        let mut d = [F::zero(); 3];
        let order = degree.order();
        for (x, y) in values.into_iter().enumerate() {
            let xf = F::from_usize(x);
            let mut p = F::one();
            for dk in d.iter_mut().take(order + 1) {
                *dk += p * y;
                p *= xf;
            }
        }
        Self { degree, d }
    }

    /// Combines the moments with one group's coefficients.
    pub fn combine(&self, coeffs: &[F]) -> F {
        let mut acc = F::zero();
        for (c, dk) in coeffs.iter().zip(self.d.iter()) {
            acc += *c * *dk;
        }
        acc
    }
}

/// How window moments are produced when the window slides one column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentMode {
    /// Recompute each moment from scratch per column offset (reference path).
    #[default]
    Recompute,
    /// Slide the previous offset's moments:
    /// `d0' = d0 - y_out + y_in`,
    /// `d1' = d1 - d0 + y_out + (n-1) y_in`,
    /// `d2' = d2 - 2 d1 + d0 - y_out + (n-1)^2 y_in`.
    /// Off by default; validated against the plain path.
    Incremental,
}

fn dense_geom<F: Scalar>(coeffs: &LayerCoeffs<F>) -> Result<(usize, usize), InferError> {
    match coeffs.geom {
        LayerGeom::Dense { n_out, n_in } => Ok((n_out, n_in)),
        _ => Err(InferError::Geometry {
            reason: "dense coefficients expected".into(),
        }),
    }
}

fn conv_geom<F: Scalar>(coeffs: &LayerCoeffs<F>) -> Result<(usize, usize, usize, usize), InferError> {
    match coeffs.geom {
        LayerGeom::Conv { kh, kw, channels, kernels } => Ok((kh, kw, channels, kernels)),
        _ => Err(InferError::Geometry {
            reason: "conv coefficients expected".into(),
        }),
    }
}

/// Moment table for every (ifmap row, column offset, channel) triple of a
/// valid convolution: the quantity the reuse hardware computes once per row
/// and shares diagonally. Layout `((row * wo + off) * c + cc) * (order+1) + t`.
fn row_moments<F: Scalar>(
    ifmap: &Tensor<F>,
    kw: usize,
    degree: Degree,
    mode: MomentMode,
) -> (Vec<F>, usize) {
    let (h, w, c) = match *ifmap.shape() {
        [h, w] => (h, w, 1),
        [h, w, c] => (h, w, c),
        _ => unreachable!("validated by caller"),
    };
    let wo = w - kw + 1;
    let dim = degree.coeff_count();
    let order = degree.order();
    let x = ifmap.data();
    let mut m = vec![F::zero(); h * wo * c * dim];
    for row in 0..h {
        for cc in 0..c {
            match mode {
                MomentMode::Recompute => {
                    for off in 0..wo {
                        let rv = ReuseVector::from_window(
                            (0..kw).map(|u| x[(row * w + off + u) * c + cc]),
                            degree,
                        );
                        let base = ((row * wo + off) * c + cc) * dim;
                        m[base..base + dim].copy_from_slice(&rv.d[..dim]);
                    }
                }
                MomentMode::Incremental => {
                    let mut rv = ReuseVector::from_window(
                        (0..kw).map(|u| x[(row * w + u) * c + cc]),
                        degree,
                    );
                    let base = (row * wo * c + cc) * dim;
                    m[base..base + dim].copy_from_slice(&rv.d[..dim]);
                    let last = F::from_usize(kw - 1);
                    for off in 1..wo {
                        let y_out = x[(row * w + off - 1) * c + cc];
                        let y_in = x[(row * w + off + kw - 1) * c + cc];
                        let [d0, d1, d2] = rv.d;
                        rv.d[0] = d0 - y_out + y_in;
                        if order >= 1 {
                            rv.d[1] = d1 - d0 + y_out + last * y_in;
                        }
                        if order >= 2 {
                            rv.d[2] = d2 - (d1 + d1) + d0 - y_out + last * last * y_in;
                        }
                        let base = ((row * wo + off) * c + cc) * dim;
                        m[base..base + dim].copy_from_slice(&rv.d[..dim]);
                    }
                }
            }
        }
    }
    (m, wo)
}

/// Convolution evaluated from polynomial coefficients and shared row moments.
/// Exactly equivalent (up to rounding) to reconstructing the weights and
/// running `conv2d_valid`.
pub fn conv_factored<F: Scalar>(
    ifmap: &Tensor<F>,
    coeffs: &LayerCoeffs<F>,
    bias: Option<&[F]>,
) -> Result<Tensor<F>, InferError> {
    conv_factored_with(ifmap, coeffs, bias, MomentMode::Recompute)
}

pub fn conv_factored_with<F: Scalar>(
    ifmap: &Tensor<F>,
    coeffs: &LayerCoeffs<F>,
    bias: Option<&[F]>,
    mode: MomentMode,
) -> Result<Tensor<F>, InferError> {
    let (kh, kw, c, k) = conv_geom(coeffs)?;
    let (h, w, ic) = match *ifmap.shape() {
        [h, w] => (h, w, 1),
        [h, w, ic] => (h, w, ic),
        _ => {
            return Err(InferError::Geometry {
                reason: format!("ifmap must be [H, W, C], got {:?}", ifmap.shape()),
            })
        }
    };
    if ic != c || kh > h || kw > w {
        return Err(InferError::Geometry {
            reason: format!("ifmap {h}x{w}x{ic} incompatible with {kh}x{kw}x{c}x{k} coefficients"),
        });
    }
    if let Some(b) = bias {
        if b.len() != k {
            return Err(InferError::Geometry {
                reason: format!("bias length {} vs {k} kernels", b.len()),
            });
        }
    }
    let oh = h - kh + 1;
    let dim = coeffs.degree.coeff_count();
    let cdata = &coeffs.coeffs;
    let mut out;
    let wo;
    match coeffs.axis {
        GroupAxis::CrossNeuron => {
            return Err(InferError::Geometry {
                reason: "no reuse schedule is defined along the cross-neuron axis".into(),
            })
        }
        GroupAxis::FilterRow => {
            let (m, wo_) = row_moments(ifmap, kw, coeffs.degree, mode);
            wo = wo_;
            out = vec![F::zero(); oh * wo * k];
            for i in 0..oh {
                for j in 0..wo {
                    for kk in 0..k {
                        // Group enumeration order: (row, channel, kernel).
                        let mut acc = bias.map_or(F::zero(), |b| b[kk]);
                        for r in 0..kh {
                            for cc in 0..c {
                                let g = (r * c + cc) * k + kk;
                                let co = &cdata[g * dim..(g + 1) * dim];
                                let mb = (((i + r) * wo + j) * c + cc) * dim;
                                for t in 0..dim {
                                    acc += co[t] * m[mb + t];
                                }
                            }
                        }
                        out[(i * wo + j) * k + kk] = acc;
                    }
                }
            }
        }
        GroupAxis::ContiguousFlat => {
            // Whole-filter grouping: moments run over the flattened (r, x)
            // plane of each (channel, kernel) filter; no spatial sharing, so
            // this path is functional only.
            wo = w - kw + 1;
            out = vec![F::zero(); oh * wo * k];
            let nw = coeffs.group_size;
            let plane = kh * kw;
            let full = plane / nw;
            let tail = plane % nw;
            let tail_fitted = tail > 0 && tail >= dim;
            let groups_per_plane = full + usize::from(tail_fitted);
            let tail_per_plane = if tail_fitted { 0 } else { tail };
            let x = ifmap.data();
            for i in 0..oh {
                for j in 0..wo {
                    for kk in 0..k {
                        let mut acc = bias.map_or(F::zero(), |b| b[kk]);
                        for cc in 0..c {
                            let plane_idx = cc * k + kk;
                            let window = |u: usize| {
                                let (r, xx) = (u / kw, u % kw);
                                x[((i + r) * w + j + xx) * c + cc]
                            };
                            for g in 0..groups_per_plane {
                                let start = g * nw;
                                let len = if g < full { nw } else { tail };
                                let rv = ReuseVector::from_window(
                                    (0..len).map(|u| window(start + u)),
                                    coeffs.degree,
                                );
                                let gi = plane_idx * groups_per_plane + g;
                                acc += rv.combine(&cdata[gi * dim..(gi + 1) * dim]);
                            }
                            if tail_per_plane > 0 {
                                let tb = plane_idx * tail_per_plane;
                                for u in 0..tail_per_plane {
                                    acc += coeffs.tail[tb + u] * window(full * nw + u);
                                }
                            }
                        }
                        out[(i * wo + j) * k + kk] = acc;
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![oh, wo, k], out))
}

/// Dense layer evaluated from coefficients: per-group moments are computed
/// once from the input and shared across all output neurons.
pub fn fc_factored<F: Scalar>(
    x: &Tensor<F>,
    coeffs: &LayerCoeffs<F>,
    bias: Option<&[F]>,
) -> Result<Tensor<F>, InferError> {
    let (n_out, n_in) = dense_geom(coeffs)?;
    if coeffs.axis != GroupAxis::ContiguousFlat {
        return Err(InferError::Geometry {
            reason: "dense layers group along the flattened input".into(),
        });
    }
    if x.shape() != [n_in] {
        return Err(InferError::Geometry {
            reason: format!("input {:?} vs expected [{n_in}]", x.shape()),
        });
    }
    if let Some(b) = bias {
        if b.len() != n_out {
            return Err(InferError::Geometry {
                reason: format!("bias length {} vs {n_out} outputs", b.len()),
            });
        }
    }
    let dim = coeffs.degree.coeff_count();
    let nw = coeffs.group_size;
    let full = n_in / nw;
    let tail = n_in % nw;
    let tail_fitted = tail > 0 && tail >= dim;
    let groups = full + usize::from(tail_fitted);
    let tail_len = if tail_fitted { 0 } else { tail };
    let xv = x.data();

    // Moments once per group, reused by every neuron.
    let mut moments = Vec::with_capacity(groups);
    for g in 0..groups {
        let start = g * nw;
        let len = if g < full { nw } else { tail };
        moments.push(ReuseVector::from_window(
            xv[start..start + len].iter().copied(),
            coeffs.degree,
        ));
    }

    let mut out = Vec::with_capacity(n_out);
    for o in 0..n_out {
        let mut acc = bias.map_or(F::zero(), |b| b[o]);
        for (g, rv) in moments.iter().enumerate() {
            let gi = o * groups + g;
            acc += rv.combine(&coeffs.coeffs[gi * dim..(gi + 1) * dim]);
        }
        if tail_len > 0 {
            let tb = o * tail_len;
            for u in 0..tail_len {
                acc += coeffs.tail[tb + u] * xv[full * nw + u];
            }
        }
        out.push(acc);
    }
    Ok(Tensor::from_parts(vec![n_out], out))
}

/// Operation counts of a factored layer schedule.
///
/// `hw_adders`/`hw_multipliers` are hardware units under the same accounting
/// as the analytical cost model (moment adders per row/group from the
/// calibration table, `2*degree+1` ops per PE, vertical accumulation for
/// dense). `moment_computations` and `pe_evaluations` count executed
/// operations and expose the reuse: moments are computed once per (ifmap row,
/// column offset) regardless of how many filter rows consume them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct OpTrace {
    pub hw_adders: u64,
    pub hw_multipliers: u64,
    pub moment_computations: u64,
    pub pe_evaluations: u64,
}

impl OpTrace {
    /// Total adders plus multipliers, the quantity the cost model predicts.
    pub fn hw_total(&self) -> u64 {
        self.hw_adders + self.hw_multipliers
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Executes the factored schedule of one layer, counting operations.
///
/// Convolution follows the PE-grid schedule: `kh x (H-kh+1)` processing
/// elements, partial sums accumulated vertically, the whole grid stepped once
/// per column offset, sharing one moment unit per ifmap row. Restricted to
/// single-channel single-kernel filter-row layers, the configuration the
/// analytical model covers. Dense layers use one moment unit per group and a
/// `groups x n_out` PE grid.
///
/// Returns the trace together with the functional output, which equals the
/// corresponding `conv_factored`/`fc_factored` result.
pub fn schedule_trace<F: Scalar>(
    coeffs: &LayerCoeffs<F>,
    input: &Tensor<F>,
    bias: Option<&[F]>,
    params: &CostParams,
) -> Result<(OpTrace, Tensor<F>), InferError> {
    match coeffs.geom {
        LayerGeom::Conv { .. } => conv_trace(coeffs, input, bias, params),
        LayerGeom::Dense { .. } => dense_trace(coeffs, input, bias, params),
    }
}

fn conv_trace<F: Scalar>(
    coeffs: &LayerCoeffs<F>,
    ifmap: &Tensor<F>,
    bias: Option<&[F]>,
    params: &CostParams,
) -> Result<(OpTrace, Tensor<F>), InferError> {
    let (kh, kw, c, k) = conv_geom(coeffs)?;
    if coeffs.axis != GroupAxis::FilterRow || c != 1 || k != 1 {
        return Err(InferError::UnsupportedTrace {
            supported: "single-channel single-kernel filter-row conv layers",
            got: format!("{:?} axis, {c} channels, {k} kernels", coeffs.axis),
        });
    }
    let (h, w) = match *ifmap.shape() {
        [h, w] => (h, w),
        [h, w, 1] => (h, w),
        _ => {
            return Err(InferError::UnsupportedTrace {
                supported: "single-channel ifmaps",
                got: format!("{:?}", ifmap.shape()),
            })
        }
    };
    if kh > h || kw > w {
        return Err(InferError::Geometry {
            reason: format!("kernel {kh}x{kw} larger than ifmap {h}x{w}"),
        });
    }
    let degree = coeffs.degree;
    let dim = degree.coeff_count();
    let order = degree.order();
    let (oh, wo) = (h - kh + 1, w - kw + 1);
    let n2 = params.moment_adders(kw)?;
    let pe_count = (kh * oh) as u64;

    let x = ifmap.data();
    let mut out = vec![F::zero(); oh * wo];
    let mut moment_computations = 0u64;
    let mut pe_evaluations = 0u64;
    // One moment unit per ifmap row; the grid steps once per column offset.
    let mut row_m = vec![[F::zero(); 3]; h];
    for off in 0..wo {
        for (row, m) in row_m.iter_mut().enumerate() {
            let rv = ReuseVector::from_window((0..kw).map(|u| x[row * w + off + u]), degree);
            *m = rv.d;
            moment_computations += 1;
        }
        // Vertical accumulation: PE row r combines filter row r with the
        // moments of ifmap row i + r into output row i's partial sum.
        for i in 0..oh {
            let mut psum = F::zero();
            for r in 0..kh {
                let co = &coeffs.coeffs[r * dim..(r + 1) * dim];
                let m = &row_m[i + r];
                let mut pe = F::zero();
                for t in 0..dim {
                    pe += co[t] * m[t];
                }
                psum += pe;
                pe_evaluations += 1;
            }
            out[i * wo + off] = psum + bias.map_or(F::zero(), |b| b[0]);
        }
    }

    let trace = OpTrace {
        hw_adders: h as u64 * n2 + pe_count * order as u64,
        hw_multipliers: pe_count * (order as u64 + 1),
        moment_computations,
        pe_evaluations,
    };
    debug_assert_eq!(trace.hw_total(), h as u64 * n2 + pe_count * pe_ops(degree));
    Ok((trace, Tensor::from_parts(vec![oh, wo, 1], out)))
}

fn dense_trace<F: Scalar>(
    coeffs: &LayerCoeffs<F>,
    x: &Tensor<F>,
    bias: Option<&[F]>,
    params: &CostParams,
) -> Result<(OpTrace, Tensor<F>), InferError> {
    let (n_out, _n_in) = dense_geom(coeffs)?;
    if coeffs.axis != GroupAxis::ContiguousFlat {
        return Err(InferError::UnsupportedTrace {
            supported: "dense layers grouped along the flattened input",
            got: format!("{:?} axis", coeffs.axis),
        });
    }
    if !coeffs.tail.is_empty() {
        return Err(InferError::UnsupportedTrace {
            supported: "dense layers whose trailing group is fitted",
            got: format!("{} exact tail weights", coeffs.tail.len()),
        });
    }
    let nw = coeffs.group_size;
    let groups = coeffs.group_count() / n_out;
    let degree = coeffs.degree;
    let order = degree.order() as u64;
    // Model convention: every group's moment unit is costed at the nominal
    // width, including a fitted short tail group.
    let n2 = params.moment_adders(nw)?;

    let out = fc_factored(x, coeffs, bias)?;
    let g = groups as u64;
    let m = n_out as u64;
    let trace = OpTrace {
        hw_adders: g * n2 + g * m * order + (g - 1) * m,
        hw_multipliers: g * m * (order + 1),
        moment_computations: g,
        pe_evaluations: g * m,
    };
    Ok((trace, out))
}

/// Full-network inference where every projected layer runs in the
/// coefficient domain and exact layers run normally.
pub fn forward_factored<F: Scalar>(
    net: &NetworkSpec,
    store: &CoeffStore<F>,
    x: &Tensor<F>,
) -> Result<Tensor<F>, InferError> {
    if store.layers.len() != net.layers().len() {
        return Err(InferError::Geometry {
            reason: format!(
                "store covers {} layers, network has {}",
                store.layers.len(),
                net.layers().len()
            ),
        });
    }
    if x.shape() != net.input_shape() {
        return Err(InferError::Geometry {
            reason: format!("input {:?} vs network input {:?}", x.shape(), net.input_shape()),
        });
    }
    let mut cur = x.clone();
    for (i, layer) in net.layers().iter().enumerate() {
        cur = match (&store.layers[i], layer) {
            (Some(stored), Layer::Conv2D { padding, kh, kw, .. }) => {
                let padded;
                let xin = match padding {
                    Padding::Valid => &cur,
                    Padding::Same => {
                        padded = pad_same(&cur, *kh, *kw)?;
                        &padded
                    }
                };
                match &stored.params {
                    LayerParams::Poly(c) => conv_factored(xin, c, Some(&stored.bias))?,
                    LayerParams::Exact(w) => {
                        let mut y = crate::tensor::conv2d_valid(xin, w)?;
                        let k = *y.shape().last().unwrap();
                        for (idx, v) in y.data_mut().iter_mut().enumerate() {
                            *v += stored.bias[idx % k];
                        }
                        y
                    }
                }
            }
            (Some(stored), Layer::Dense { n_in, n_out }) => match &stored.params {
                LayerParams::Poly(c) => fc_factored(&cur, c, Some(&stored.bias))?,
                LayerParams::Exact(w) => {
                    let xv = cur.data();
                    let wd = w.data();
                    let mut y = Vec::with_capacity(*n_out);
                    for j in 0..*n_out {
                        let mut acc = stored.bias[j];
                        for (wi, xi) in wd[j * n_in..(j + 1) * n_in].iter().zip(xv) {
                            acc += *wi * *xi;
                        }
                        y.push(acc);
                    }
                    Tensor::from_parts(vec![*n_out], y)
                }
            },
            (None, layer) => apply_layer(layer, None, &cur).map_err(|e| InferError::Geometry {
                reason: e.to_string(),
            })?,
            (Some(_), _) => {
                return Err(InferError::Geometry {
                    reason: format!("layer {i} has stored parameters but is not trainable"),
                })
            }
        };
    }
    Ok(cur)
}
