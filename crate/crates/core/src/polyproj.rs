//! Grouped polynomial projection of weight tensors.
//!
//! Weights are partitioned into groups (conv filter rows, or contiguous runs
//! of a dense layer's per-neuron weight vector) and each group is replaced by
//! its least-squares polynomial of degree 1 or 2 over the fixed abscissae
//! `x = 0..Nw-1`. Because the abscissae never change, the solve operator
//! `(X^T X)^-1 X^T` is precomputed per `(Nw, degree)` and reused; its entries
//! are derived from exact integer power sums so projection is idempotent to
//! near machine precision even for wide groups.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::net::{NetworkSpec, Weights};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum ProjError {
    #[error("group of {len} values cannot fit a degree-{degree} polynomial (needs at least {} points)", degree + 1)]
    GroupTooShort { len: usize, degree: usize },
    #[error("scheme lists {got} layers, network has {expected}")]
    SchemeLength { expected: usize, got: usize },
    #[error("layer {index} is not trainable but has a group spec")]
    NotTrainable { index: usize },
    #[error("layer {index}: {reason}")]
    BadSpec { index: usize, reason: String },
    #[error("geometry mismatch: {reason}")]
    Geometry { reason: String },
    #[error("weights missing for configured layer {index}")]
    MissingWeights { index: usize },
}

/// Polynomial degree of a group fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degree {
    Linear,
    Quadratic,
}

impl Degree {
    pub fn order(self) -> usize {
        match self {
            Degree::Linear => 1,
            Degree::Quadratic => 2,
        }
    }

    /// Coefficients stored per fitted group.
    pub fn coeff_count(self) -> usize {
        self.order() + 1
    }

    pub fn from_order(order: usize) -> Option<Self> {
        match order {
            1 => Some(Degree::Linear),
            2 => Some(Degree::Quadratic),
            _ => None,
        }
    }
}

/// How a layer's weights are cut into groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupAxis {
    /// One group per filter row: `Nw` equals the kernel width. Conv layers only.
    FilterRow,
    /// Consecutive runs of `Nw` within each output neuron's weight vector
    /// (dense layers) or within each `(channel, kernel)` filter plane
    /// flattened row-major (conv layers).
    ContiguousFlat,
    /// Runs of `Nw` over the column-major flatten of a dense weight matrix:
    /// consecutive output neurons' weights for one input, wrapping freely
    /// across column boundaries. Whole-matrix flat division is a natural
    /// implementation variant; its groups mix unrelated neurons, which makes
    /// one-shot projection far more destructive. No reuse schedule is defined
    /// along this axis, so coefficient-domain inference rejects it; models
    /// are evaluated through reconstruction. Dense layers only.
    CrossNeuron,
}

/// Per-layer grouping description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GroupSpec {
    pub degree: Degree,
    pub group_size: usize,
    pub axis: GroupAxis,
}

/// Network-wide scheme, index-aligned with the layer list. `None` leaves a
/// layer exact.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupScheme {
    pub per_layer: Vec<Option<GroupSpec>>,
}

impl GroupScheme {
    /// Scheme that projects nothing.
    pub fn none(net: &NetworkSpec) -> Self {
        Self {
            per_layer: vec![None; net.layers().len()],
        }
    }

    pub fn is_none(&self) -> bool {
        self.per_layer.iter().all(Option::is_none)
    }

    pub fn validate(&self, net: &NetworkSpec) -> Result<(), ProjError> {
        if self.per_layer.len() != net.layers().len() {
            return Err(ProjError::SchemeLength {
                expected: net.layers().len(),
                got: self.per_layer.len(),
            });
        }
        for (index, entry) in self.per_layer.iter().enumerate() {
            let Some(spec) = entry else { continue };
            let Some(shape) = net.weight_shape(index) else {
                return Err(ProjError::NotTrainable { index });
            };
            let geom = LayerGeom::from_weight_shape(&shape).map_err(|reason| ProjError::BadSpec { index, reason })?;
            LayerLayout::new(geom, *spec).map_err(|e| ProjError::BadSpec {
                index,
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }
}

/// Weight-tensor geometry a projection operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerGeom {
    Conv {
        kh: usize,
        kw: usize,
        channels: usize,
        kernels: usize,
    },
    Dense {
        n_out: usize,
        n_in: usize,
    },
}

impl LayerGeom {
    pub fn from_weight_shape(shape: &[usize]) -> Result<Self, String> {
        match *shape {
            [kh, kw, channels, kernels] => Ok(LayerGeom::Conv {
                kh,
                kw,
                channels,
                kernels,
            }),
            [n_out, n_in] => Ok(LayerGeom::Dense { n_out, n_in }),
            _ => Err(format!("unsupported weight shape {shape:?}")),
        }
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        match *self {
            LayerGeom::Conv { kh, kw, channels, kernels } => vec![kh, kw, channels, kernels],
            LayerGeom::Dense { n_out, n_in } => vec![n_out, n_in],
        }
    }

    pub fn weight_count(&self) -> usize {
        self.weight_shape().iter().product()
    }
}

/// One group's location inside the flat weight data. Most groups are
/// arithmetic strides; cross-neuron groups that wrap a column boundary carry
/// explicit indices.
#[derive(Debug, Clone)]
pub(crate) enum SlotIndices {
    Strided { base: usize, stride: usize, len: usize },
    Explicit(Box<[u32]>),
}

impl SlotIndices {
    #[inline]
    pub fn len(&self) -> usize {
        match self {
            SlotIndices::Strided { len, .. } => *len,
            SlotIndices::Explicit(v) => v.len(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize) -> usize {
        match self {
            SlotIndices::Strided { base, stride, .. } => base + x * stride,
            SlotIndices::Explicit(v) => v[x] as usize,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct GroupSlot {
    pub indices: SlotIndices,
    /// Fitted groups get coefficients; others are kept exact in the tail.
    pub fitted: bool,
}

impl GroupSlot {
    fn strided(base: usize, stride: usize, len: usize, fitted: bool) -> Self {
        Self {
            indices: SlotIndices::Strided { base, stride, len },
            fitted,
        }
    }
}

/// Group enumeration for one layer, precomputed once and reused every batch.
#[derive(Debug, Clone)]
pub struct LayerLayout {
    pub geom: LayerGeom,
    pub spec: GroupSpec,
    slots: Vec<GroupSlot>,
    fitted_groups: usize,
    tail_len: usize,
}

impl LayerLayout {
    pub fn new(geom: LayerGeom, spec: GroupSpec) -> Result<Self, ProjError> {
        let nw = spec.group_size;
        let order = spec.degree.order();
        if nw < order + 1 {
            return Err(ProjError::GroupTooShort { len: nw, degree: order });
        }
        let mut slots = Vec::new();
        match (geom, spec.axis) {
            (LayerGeom::Conv { kh, kw, channels, kernels }, GroupAxis::FilterRow) => {
                if nw != kw {
                    return Err(ProjError::Geometry {
                        reason: format!("filter-row groups need Nw == kernel width ({kw}), got {nw}"),
                    });
                }
                // Row-major over first elements: r, then channel, then kernel.
                for r in 0..kh {
                    for c in 0..channels {
                        for k in 0..kernels {
                            slots.push(GroupSlot::strided(
                                (r * kw * channels + c) * kernels + k,
                                channels * kernels,
                                kw,
                                true,
                            ));
                        }
                    }
                }
            }
            (LayerGeom::Conv { kh, kw, channels, kernels }, GroupAxis::ContiguousFlat) => {
                let plane = kh * kw;
                if nw > plane {
                    return Err(ProjError::Geometry {
                        reason: format!("group size {nw} exceeds filter plane {plane}"),
                    });
                }
                for c in 0..channels {
                    for k in 0..kernels {
                        let plane_base = c * kernels + k;
                        let stride = channels * kernels;
                        push_runs(&mut slots, plane_base, stride, plane, nw, order);
                    }
                }
            }
            (LayerGeom::Dense { n_out, n_in }, GroupAxis::ContiguousFlat) => {
                if nw > n_in {
                    return Err(ProjError::Geometry {
                        reason: format!("group size {nw} exceeds input width {n_in}"),
                    });
                }
                for o in 0..n_out {
                    push_runs(&mut slots, o * n_in, 1, n_in, nw, order);
                }
            }
            (LayerGeom::Dense { n_out, n_in }, GroupAxis::CrossNeuron) => {
                // Column-major flat index t covers weight (t % n_out, t / n_out).
                let total = n_out * n_in;
                if nw > total {
                    return Err(ProjError::Geometry {
                        reason: format!("group size {nw} exceeds weight count {total}"),
                    });
                }
                let mut t = 0;
                while t < total {
                    let len = nw.min(total - t);
                    let fitted = len > order;
                    let first_col = t / n_out;
                    let last_col = (t + len - 1) / n_out;
                    let indices = if first_col == last_col {
                        SlotIndices::Strided {
                            base: (t % n_out) * n_in + first_col,
                            stride: n_in,
                            len,
                        }
                    } else {
                        SlotIndices::Explicit(
                            (t..t + len)
                                .map(|u| ((u % n_out) * n_in + u / n_out) as u32)
                                .collect(),
                        )
                    };
                    slots.push(GroupSlot { indices, fitted });
                    t += len;
                }
            }
            (LayerGeom::Dense { .. }, GroupAxis::FilterRow) => {
                return Err(ProjError::Geometry {
                    reason: "filter-row groups apply to conv layers only".into(),
                });
            }
            (LayerGeom::Conv { .. }, GroupAxis::CrossNeuron) => {
                return Err(ProjError::Geometry {
                    reason: "cross-neuron groups apply to dense layers only".into(),
                });
            }
        }
        let fitted_groups = slots.iter().filter(|s| s.fitted).count();
        let tail_len = slots.iter().filter(|s| !s.fitted).map(|s| s.indices.len()).sum();
        Ok(Self {
            geom,
            spec,
            slots,
            fitted_groups,
            tail_len,
        })
    }

    pub(crate) fn slots(&self) -> &[GroupSlot] {
        &self.slots
    }

    /// Number of fitted groups (each stores `degree+1` coefficients).
    pub fn group_count(&self) -> usize {
        self.fitted_groups
    }

    /// Exact weights kept verbatim because their trailing run is shorter than
    /// `degree+1`.
    pub fn tail_len(&self) -> usize {
        self.tail_len
    }

    /// Parameters stored by the compressed representation (biases excluded).
    pub fn compressed_params(&self) -> usize {
        self.fitted_groups * self.spec.degree.coeff_count() + self.tail_len
    }
}

/// Splits a run of `total` elements into `nw`-sized groups; a trailing run of
/// at least `order+1` values is fitted as its own shorter group, anything
/// shorter stays exact.
fn push_runs(slots: &mut Vec<GroupSlot>, base: usize, stride: usize, total: usize, nw: usize, order: usize) {
    let full = total / nw;
    let tail = total % nw;
    for g in 0..full {
        slots.push(GroupSlot::strided(base + g * nw * stride, stride, nw, true));
    }
    if tail > 0 {
        slots.push(GroupSlot::strided(
            base + full * nw * stride,
            stride,
            tail,
            tail > order,
        ));
    }
}

/// Least-squares solve operator for one `(n, degree)` pair: the
/// `(degree+1) x n` matrix `(X^T X)^-1 X^T` over abscissae `0..n-1`.
///
/// The Gram matrix has integer entries (power sums), so its adjugate and
/// determinant are computed exactly in `i128` before the single rounding to
/// floating point.
#[derive(Debug, Clone)]
pub struct FitOperator<F> {
    n: usize,
    degree: Degree,
    /// Row-major `(degree+1) x n`.
    rows: Vec<F>,
}

impl<F: Scalar> FitOperator<F> {
    pub fn new(n: usize, degree: Degree) -> Result<Self, ProjError> {
        let order = degree.order();
        if n < order + 1 {
            return Err(ProjError::GroupTooShort { len: n, degree: order });
        }
        // Power sums S_p = sum_{x=0}^{n-1} x^p, exact.
        let mut sums = [0i128; 5];
        for x in 0..n as i128 {
            let mut p = 1i128;
            for s in sums.iter_mut().take(2 * order + 1) {
                *s += p;
                p *= x;
            }
        }
        let (det, adj): (i128, Vec<i128>) = match degree {
            Degree::Linear => {
                let (s0, s1, s2) = (sums[0], sums[1], sums[2]);
                (s0 * s2 - s1 * s1, vec![s2, -s1, -s1, s0])
            }
            Degree::Quadratic => {
                let (s0, s1, s2, s3, s4) = (sums[0], sums[1], sums[2], sums[3], sums[4]);
                let det = s0 * (s2 * s4 - s3 * s3) - s1 * (s1 * s4 - s3 * s2) + s2 * (s1 * s3 - s2 * s2);
                let adj = vec![
                    s2 * s4 - s3 * s3,
                    s2 * s3 - s1 * s4,
                    s1 * s3 - s2 * s2,
                    s2 * s3 - s1 * s4,
                    s0 * s4 - s2 * s2,
                    s1 * s2 - s0 * s3,
                    s1 * s3 - s2 * s2,
                    s1 * s2 - s0 * s3,
                    s0 * s2 - s1 * s1,
                ];
                (det, adj)
            }
        };
        debug_assert!(det != 0, "Vandermonde Gram matrix is nonsingular");
        let dim = order + 1;
        let det_f = det as f64;
        let mut rows = Vec::with_capacity(dim * n);
        for t in 0..dim {
            for x in 0..n {
                // P[t][x] = sum_a adj[t][a] * x^a / det, numerator exact.
                let mut num = 0i128;
                let mut xp = 1i128;
                for a in 0..dim {
                    num += adj[t * dim + a] * xp;
                    xp *= x as i128;
                }
                rows.push(F::from_f64(num as f64 / det_f));
            }
        }
        Ok(Self { n, degree, rows })
    }

    pub fn width(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    /// Applies the operator to strided group values, writing `degree+1`
    /// coefficients. Accumulation runs left to right in index order.
    pub fn apply_strided(&self, data: &[F], base: usize, stride: usize, out: &mut [F]) {
        let dim = self.degree.coeff_count();
        debug_assert!(out.len() >= dim);
        for (t, slot) in out.iter_mut().take(dim).enumerate() {
            let row = &self.rows[t * self.n..(t + 1) * self.n];
            let mut acc = F::zero();
            for (x, &p) in row.iter().enumerate() {
                acc += p * data[base + x * stride];
            }
            *slot = acc;
        }
    }

    pub(crate) fn apply_slot(&self, data: &[F], indices: &SlotIndices, out: &mut [F]) {
        match indices {
            SlotIndices::Strided { base, stride, .. } => self.apply_strided(data, *base, *stride, out),
            SlotIndices::Explicit(idx) => {
                let dim = self.degree.coeff_count();
                for (t, slot) in out.iter_mut().take(dim).enumerate() {
                    let row = &self.rows[t * self.n..(t + 1) * self.n];
                    let mut acc = F::zero();
                    for (x, &p) in row.iter().enumerate() {
                        acc += p * data[idx[x] as usize];
                    }
                    *slot = acc;
                }
            }
        }
    }
}

/// Cache of fit operators keyed by `(width, degree)`; read-mostly and safe
/// for concurrent lookup.
#[derive(Debug, Default)]
pub struct DesignCache<F> {
    ops: RwLock<HashMap<(usize, Degree), Arc<FitOperator<F>>>>,
}

impl<F: Scalar> DesignCache<F> {
    pub fn new() -> Self {
        Self {
            ops: RwLock::new(HashMap::new()),
        }
    }

    pub fn operator(&self, n: usize, degree: Degree) -> Result<Arc<FitOperator<F>>, ProjError> {
        if let Some(op) = self.ops.read().unwrap().get(&(n, degree)) {
            return Ok(Arc::clone(op));
        }
        let op = Arc::new(FitOperator::new(n, degree)?);
        let mut map = self.ops.write().unwrap();
        Ok(Arc::clone(map.entry((n, degree)).or_insert(op)))
    }
}

/// Least-squares fit of `ys` by a polynomial over `x = 0..len-1`; returns
/// `degree+1` coefficients, constant term first.
pub fn fit_poly_group<F: Scalar>(ys: &[F], degree: Degree) -> Result<Vec<F>, ProjError> {
    let op = FitOperator::new(ys.len(), degree)?;
    let mut out = vec![F::zero(); degree.coeff_count()];
    op.apply_strided(ys, 0, 1, &mut out);
    Ok(out)
}

/// Evaluates `coeffs` at `x = 0..len-1` into the slot's positions (Horner
/// form). This is the single reconstruction routine shared by projection and
/// `reconstruct_layer`, so the two agree bitwise.
fn write_poly_eval<F: Scalar>(data: &mut [F], indices: &SlotIndices, coeffs: &[F]) {
    for x in 0..indices.len() {
        let xf = F::from_usize(x);
        let mut acc = F::zero();
        for &c in coeffs.iter().rev() {
            acc = acc * xf + c;
        }
        data[indices.get(x)] = acc;
    }
}

/// Coefficients replacing one layer's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCoeffs<F> {
    pub degree: Degree,
    pub group_size: usize,
    pub axis: GroupAxis,
    pub geom: LayerGeom,
    /// `group_count x (degree+1)`, group-major, in layout enumeration order.
    pub coeffs: Vec<F>,
    /// Exact weights of sub-`degree+1` trailing runs, in enumeration order.
    pub tail: Vec<F>,
}

impl<F: Scalar> LayerCoeffs<F> {
    pub fn layout(&self) -> LayerLayout {
        LayerLayout::new(
            self.geom,
            GroupSpec {
                degree: self.degree,
                group_size: self.group_size,
                axis: self.axis,
            },
        )
        .expect("stored coefficients carry a valid layout")
    }

    pub fn group_count(&self) -> usize {
        self.coeffs.len() / self.degree.coeff_count()
    }

    /// Parameters stored (coefficients plus exact tail weights).
    pub fn param_count(&self) -> usize {
        self.coeffs.len() + self.tail.len()
    }
}

/// Projects one layer: fits every group and returns the coefficients along
/// with the reconstructed (approximated) weight tensor.
pub fn project_layer<F: Scalar>(
    weights: &Tensor<F>,
    spec: GroupSpec,
    cache: &DesignCache<F>,
) -> Result<(LayerCoeffs<F>, Tensor<F>), ProjError> {
    let geom = LayerGeom::from_weight_shape(weights.shape())
        .map_err(|reason| ProjError::Geometry { reason })?;
    let layout = LayerLayout::new(geom, spec)?;
    let dim = spec.degree.coeff_count();
    let mut coeffs = vec![F::zero(); layout.group_count() * dim];
    let mut tail = Vec::with_capacity(layout.tail_len());
    let mut approx = weights.clone();
    let data = approx.data_mut();
    let mut g = 0;
    for slot in layout.slots() {
        if slot.fitted {
            let op = cache.operator(slot.indices.len(), spec.degree)?;
            let out = &mut coeffs[g * dim..(g + 1) * dim];
            op.apply_slot(data, &slot.indices, out);
            write_poly_eval(data, &slot.indices, out);
            g += 1;
        } else {
            for x in 0..slot.indices.len() {
                tail.push(data[slot.indices.get(x)]);
            }
        }
    }
    Ok((
        LayerCoeffs {
            degree: spec.degree,
            group_size: spec.group_size,
            axis: spec.axis,
            geom,
            coeffs,
            tail,
        },
        approx,
    ))
}

/// In-place variant used inside the batch loop: fit and immediately
/// re-evaluate each group, no coefficient storage. Produces exactly the same
/// weights as `project_layer` (same operator, same evaluation).
pub fn project_in_place<F: Scalar>(
    weights: &mut Tensor<F>,
    layout: &LayerLayout,
    cache: &DesignCache<F>,
) -> Result<(), ProjError> {
    let dim = layout.spec.degree.coeff_count();
    let mut coeffs = [F::zero(); 3];
    let data = weights.data_mut();
    for slot in layout.slots() {
        if slot.fitted {
            let op = cache.operator(slot.indices.len(), layout.spec.degree)?;
            op.apply_slot(data, &slot.indices, &mut coeffs[..dim]);
            write_poly_eval(data, &slot.indices, &coeffs[..dim]);
        }
    }
    Ok(())
}

/// Rebuilds the weight tensor a `LayerCoeffs` represents. Bitwise equal to
/// the `approx_weights` returned by `project_layer`.
pub fn reconstruct_layer<F: Scalar>(coeffs: &LayerCoeffs<F>) -> Result<Tensor<F>, ProjError> {
    let layout = coeffs.layout();
    let dim = coeffs.degree.coeff_count();
    if coeffs.coeffs.len() != layout.group_count() * dim || coeffs.tail.len() != layout.tail_len() {
        return Err(ProjError::Geometry {
            reason: format!(
                "coefficient store ({} coeffs, {} tail) does not match layout ({} groups, {} tail)",
                coeffs.coeffs.len(),
                coeffs.tail.len(),
                layout.group_count(),
                layout.tail_len()
            ),
        });
    }
    let mut out = Tensor::zeros(coeffs.geom.weight_shape());
    let data = out.data_mut();
    let mut g = 0;
    let mut t = 0;
    for slot in layout.slots() {
        if slot.fitted {
            write_poly_eval(data, &slot.indices, &coeffs.coeffs[g * dim..(g + 1) * dim]);
            g += 1;
        } else {
            for x in 0..slot.indices.len() {
                data[slot.indices.get(x)] = coeffs.tail[t];
                t += 1;
            }
        }
    }
    Ok(out)
}

/// Per-layer parameter accounting for a scheme applied to a network.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LayerParamCount {
    pub layer_index: usize,
    pub label: String,
    /// Raw weight count (biases excluded, matching the reported tables).
    pub raw: u64,
    /// Stored parameters under the scheme: coefficients plus exact tails.
    pub compressed: u64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ParamCountReport {
    pub layers: Vec<LayerParamCount>,
    pub raw_total: u64,
    pub compressed_total: u64,
}

impl ParamCountReport {
    /// Baseline over approximated size; `Nw/(degree+1)` for fully grouped
    /// layers.
    pub fn reduction_rate(&self) -> f64 {
        self.raw_total as f64 / self.compressed_total as f64
    }
}

pub fn count_params(scheme: &GroupScheme, net: &NetworkSpec) -> Result<ParamCountReport, ProjError> {
    scheme.validate(net)?;
    let mut layers = Vec::new();
    for (index, label) in net.trainable_labels() {
        let shape = net.weight_shape(index).unwrap();
        let raw: usize = shape.iter().product();
        let compressed = match &scheme.per_layer[index] {
            None => raw,
            Some(spec) => {
                let geom = LayerGeom::from_weight_shape(&shape)
                    .map_err(|reason| ProjError::Geometry { reason })?;
                LayerLayout::new(geom, *spec)?.compressed_params()
            }
        };
        layers.push(LayerParamCount {
            layer_index: index,
            label,
            raw: raw as u64,
            compressed: compressed as u64,
        });
    }
    let raw_total = layers.iter().map(|l| l.raw).sum();
    let compressed_total = layers.iter().map(|l| l.compressed).sum();
    Ok(ParamCountReport {
        layers,
        raw_total,
        compressed_total,
    })
}

/// One trainable layer inside a checkpoint: either exact weights or the
/// polynomial coefficients, plus the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<F> {
    Exact(Tensor<F>),
    Poly(LayerCoeffs<F>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredLayer<F> {
    pub params: LayerParams<F>,
    pub bias: Vec<F>,
}

/// The compressed model representation: per-layer coefficients (or exact
/// weights for unprojected layers), index-aligned with the network.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffStore<F> {
    pub layers: Vec<Option<StoredLayer<F>>>,
}

impl<F: Scalar> CoeffStore<F> {
    /// Projects every configured layer of `weights`; unconfigured trainable
    /// layers are stored exact.
    pub fn project_network(
        net: &NetworkSpec,
        weights: &Weights<F>,
        scheme: &GroupScheme,
        cache: &DesignCache<F>,
    ) -> Result<Self, ProjError> {
        scheme.validate(net)?;
        let mut layers = Vec::with_capacity(net.layers().len());
        for index in 0..net.layers().len() {
            if net.weight_shape(index).is_none() {
                layers.push(None);
                continue;
            }
            let lw = weights.layers[index]
                .as_ref()
                .ok_or(ProjError::MissingWeights { index })?;
            let params = match &scheme.per_layer[index] {
                None => LayerParams::Exact(lw.w.clone()),
                Some(spec) => {
                    let (coeffs, _) = project_layer(&lw.w, *spec, cache)?;
                    LayerParams::Poly(coeffs)
                }
            };
            layers.push(Some(StoredLayer {
                params,
                bias: lw.b.clone(),
            }));
        }
        Ok(Self { layers })
    }

    /// Expands the store back into plain weight tensors.
    pub fn to_weights(&self, net: &NetworkSpec) -> Result<Weights<F>, ProjError> {
        if self.layers.len() != net.layers().len() {
            return Err(ProjError::SchemeLength {
                expected: net.layers().len(),
                got: self.layers.len(),
            });
        }
        let mut out = Weights::zeros(net);
        for (index, slot) in self.layers.iter().enumerate() {
            match (slot, &mut out.layers[index]) {
                (Some(stored), Some(lw)) => {
                    lw.w = match &stored.params {
                        LayerParams::Exact(w) => w.clone(),
                        LayerParams::Poly(coeffs) => reconstruct_layer(coeffs)?,
                    };
                    lw.b = stored.bias.clone();
                }
                (None, None) => {}
                _ => {
                    return Err(ProjError::Geometry {
                        reason: format!("layer {index}: store and network disagree on trainability"),
                    })
                }
            }
        }
        Ok(out)
    }

    /// Stored parameter count (biases excluded, matching `count_params`).
    pub fn param_count(&self) -> u64 {
        self.layers
            .iter()
            .flatten()
            .map(|s| match &s.params {
                LayerParams::Exact(w) => w.len() as u64,
                LayerParams::Poly(c) => c.param_count() as u64,
            })
            .sum()
    }
}
