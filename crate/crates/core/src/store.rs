//! Binary container for the compressed model representation, plus the 8-bit
//! fixed-point export used for size accounting.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! magic     b"PWC1"
//! version   u16 (currently 1)
//! slots     u32           total layer slots, including non-trainable ones
//! per slot:
//!   present u8            0 for non-trainable layers
//!   kind    u8            0 exact dense, 1 poly dense, 2 exact conv, 3 poly conv
//!   geometry              dense: n_out u32, n_in u32
//!                         conv:  kh u32, kw u32, channels u32, kernels u32
//!   poly payload:         axis u8 (0 filter-row, 1 contiguous-flat),
//!                         degree u8, Nw u32, group_count u64,
//!                         coefficients f64 x group_count*(degree+1),
//!                         tail_len u64, tail f64 x tail_len
//!   exact payload:        weights f64 x product(geometry)
//!   bias_len u64, bias f64 x bias_len
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::polyproj::{CoeffStore, Degree, GroupAxis, LayerCoeffs, LayerGeom, LayerParams, StoredLayer};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"PWC1";
pub const VERSION: u16 = 1;
const Q8_MAGIC: &[u8; 4] = b"PWQ1";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}, got {got:?}")]
    BadMagic { expected: [u8; 4], got: [u8; 4] },
    #[error("unsupported container version {0}")]
    BadVersion(u16),
    #[error("corrupt container at byte {at}: {reason}")]
    Corrupt { at: usize, reason: String },
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self.at.checked_add(n).ok_or(StoreError::Corrupt {
            at: self.at,
            reason: "length overflow".into(),
        })?;
        if end > self.bytes.len() {
            return Err(StoreError::Corrupt {
                at: self.at,
                reason: format!("needs {n} more bytes, {} remain", self.bytes.len() - self.at),
            });
        }
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, StoreError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, StoreError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, StoreError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64s<F: Scalar>(&mut self, count: usize) -> Result<Vec<F>, StoreError> {
        let b = self.take(count.checked_mul(8).ok_or(StoreError::Corrupt {
            at: self.at,
            reason: "count overflow".into(),
        })?)?;
        Ok(b.chunks_exact(8)
            .map(|c| F::from_f64(f64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}

fn push_f64s<F: Scalar>(out: &mut Vec<u8>, values: &[F]) {
    for v in values {
        out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
}

/// Serializes a store to the container format. Values are stored as 64-bit
/// reals regardless of the in-memory scalar type.
pub fn encode<F: Scalar>(store: &CoeffStore<F>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.layers.len() as u32).to_le_bytes());
    for slot in &store.layers {
        match slot {
            None => out.push(0),
            Some(stored) => {
                out.push(1);
                let geom = match &stored.params {
                    LayerParams::Exact(w) => LayerGeom::from_weight_shape(w.shape()).expect("stored geometry"),
                    LayerParams::Poly(c) => c.geom,
                };
                let (kind, dims): (u8, Vec<u32>) = match (&stored.params, geom) {
                    (LayerParams::Exact(_), LayerGeom::Dense { n_out, n_in }) => (0, vec![n_out as u32, n_in as u32]),
                    (LayerParams::Poly(_), LayerGeom::Dense { n_out, n_in }) => (1, vec![n_out as u32, n_in as u32]),
                    (LayerParams::Exact(_), LayerGeom::Conv { kh, kw, channels, kernels }) => {
                        (2, vec![kh as u32, kw as u32, channels as u32, kernels as u32])
                    }
                    (LayerParams::Poly(_), LayerGeom::Conv { kh, kw, channels, kernels }) => {
                        (3, vec![kh as u32, kw as u32, channels as u32, kernels as u32])
                    }
                };
                out.push(kind);
                for d in dims {
                    out.extend_from_slice(&d.to_le_bytes());
                }
                match &stored.params {
                    LayerParams::Poly(c) => {
                        out.push(match c.axis {
                            GroupAxis::FilterRow => 0,
                            GroupAxis::ContiguousFlat => 1,
                            GroupAxis::CrossNeuron => 2,
                        });
                        out.push(c.degree.order() as u8);
                        out.extend_from_slice(&(c.group_size as u32).to_le_bytes());
                        out.extend_from_slice(&(c.group_count() as u64).to_le_bytes());
                        push_f64s(&mut out, &c.coeffs);
                        out.extend_from_slice(&(c.tail.len() as u64).to_le_bytes());
                        push_f64s(&mut out, &c.tail);
                    }
                    LayerParams::Exact(w) => push_f64s(&mut out, w.data()),
                }
                out.extend_from_slice(&(stored.bias.len() as u64).to_le_bytes());
                push_f64s(&mut out, &stored.bias);
            }
        }
    }
    out
}

pub fn decode<F: Scalar>(bytes: &[u8]) -> Result<CoeffStore<F>, StoreError> {
    let mut r = Reader { bytes, at: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(StoreError::BadMagic {
            expected: *MAGIC,
            got: magic.try_into().unwrap(),
        });
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(StoreError::BadVersion(version));
    }
    let slots = r.u32()? as usize;
    let mut layers = Vec::with_capacity(slots);
    for _ in 0..slots {
        if r.u8()? == 0 {
            layers.push(None);
            continue;
        }
        let kind = r.u8()?;
        let geom = match kind {
            0 | 1 => LayerGeom::Dense {
                n_out: r.u32()? as usize,
                n_in: r.u32()? as usize,
            },
            2 | 3 => LayerGeom::Conv {
                kh: r.u32()? as usize,
                kw: r.u32()? as usize,
                channels: r.u32()? as usize,
                kernels: r.u32()? as usize,
            },
            k => {
                return Err(StoreError::Corrupt {
                    at: r.at,
                    reason: format!("unknown layer kind {k}"),
                })
            }
        };
        let params = if kind == 1 || kind == 3 {
            let axis = match r.u8()? {
                0 => GroupAxis::FilterRow,
                1 => GroupAxis::ContiguousFlat,
                2 => GroupAxis::CrossNeuron,
                a => {
                    return Err(StoreError::Corrupt {
                        at: r.at,
                        reason: format!("unknown axis {a}"),
                    })
                }
            };
            let degree = Degree::from_order(r.u8()? as usize).ok_or(StoreError::Corrupt {
                at: r.at,
                reason: "degree outside 1..=2".into(),
            })?;
            let group_size = r.u32()? as usize;
            let group_count = r.u64()? as usize;
            let coeffs = r.f64s::<F>(group_count * degree.coeff_count())?;
            let tail_len = r.u64()? as usize;
            let tail = r.f64s::<F>(tail_len)?;
            LayerParams::Poly(LayerCoeffs {
                degree,
                group_size,
                axis,
                geom,
                coeffs,
                tail,
            })
        } else {
            let data = r.f64s::<F>(geom.weight_count())?;
            LayerParams::Exact(Tensor::new(geom.weight_shape(), data).map_err(|e| StoreError::Corrupt {
                at: r.at,
                reason: e.to_string(),
            })?)
        };
        let bias_len = r.u64()? as usize;
        let bias = r.f64s::<F>(bias_len)?;
        layers.push(Some(StoredLayer { params, bias }));
    }
    if r.at != bytes.len() {
        return Err(StoreError::Corrupt {
            at: r.at,
            reason: format!("{} trailing bytes", bytes.len() - r.at),
        });
    }
    Ok(CoeffStore { layers })
}

pub fn write_file<F: Scalar>(store: &CoeffStore<F>, path: &Path) -> Result<(), StoreError> {
    fs::write(path, encode(store)).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_file<F: Scalar>(path: &Path) -> Result<CoeffStore<F>, StoreError> {
    let bytes = fs::read(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

/// 8-bit fixed-point export for size accounting: per layer, parameters are
/// scaled symmetrically (max-abs maps to 127) and stored as one signed byte
/// each. Biases are not exported, matching the parameter-count tables. Only
/// reported sizes depend on this; inference never reads it back.
pub fn export_q8<F: Scalar>(store: &CoeffStore<F>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(Q8_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.layers.len() as u32).to_le_bytes());
    for slot in &store.layers {
        match slot {
            None => out.push(0),
            Some(stored) => {
                out.push(1);
                let values: Vec<f64> = match &stored.params {
                    LayerParams::Exact(w) => w.data().iter().map(|v| v.to_f64_lossy()).collect(),
                    LayerParams::Poly(c) => c
                        .coeffs
                        .iter()
                        .chain(c.tail.iter())
                        .map(|v| v.to_f64_lossy())
                        .collect(),
                };
                let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let scale = if max_abs == 0.0 { 1.0 } else { 127.0 / max_abs };
                out.extend_from_slice(&scale.to_le_bytes());
                out.extend_from_slice(&(values.len() as u64).to_le_bytes());
                for v in values {
                    out.push(((v * scale).round() as i8) as u8);
                }
            }
        }
    }
    out
}

/// Parameter payload bytes of the 8-bit export (size accounting), excluding
/// headers and per-layer scales.
pub fn q8_payload_bytes<F: Scalar>(store: &CoeffStore<F>) -> u64 {
    store.param_count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Layer, NetworkSpec, Padding, Weights};
    use crate::polyproj::{DesignCache, GroupScheme, GroupSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_store() -> (NetworkSpec, CoeffStore<f64>) {
        let net = NetworkSpec::new(
            vec![8, 8, 1],
            vec![
                Layer::Conv2D { kernels: 2, kh: 3, kw: 3, padding: Padding::Valid },
                Layer::Activation(crate::net::Activation::Sigmoid),
                Layer::AvgPool2,
                Layer::Flatten,
                Layer::Dense { n_in: 18, n_out: 5 },
                Layer::Softmax,
            ],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let weights = Weights::init(&net, &mut rng);
        let mut scheme = GroupScheme::none(&net);
        scheme.per_layer[0] = Some(GroupSpec {
            degree: Degree::Linear,
            group_size: 3,
            axis: GroupAxis::FilterRow,
        });
        let cache = DesignCache::new();
        let store = CoeffStore::project_network(&net, &weights, &scheme, &cache).unwrap();
        (net, store)
    }

    #[test]
    fn container_round_trips_exactly() {
        let (net, store) = sample_store();
        let bytes = encode(&store);
        assert_eq!(&bytes[..4], MAGIC);
        let back = decode::<f64>(&bytes).unwrap();
        assert_eq!(back, store);
        let w1 = store.to_weights(&net).unwrap();
        let w2 = back.to_weights(&net).unwrap();
        assert_eq!(w1, w2);
    }

    #[test]
    fn corrupt_containers_are_named_errors() {
        let (_, store) = sample_store();
        let bytes = encode(&store);
        assert!(matches!(decode::<f64>(&bytes[..10]), Err(StoreError::Corrupt { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode::<f64>(&bad), Err(StoreError::BadMagic { .. })));
        let mut vers = bytes.clone();
        vers[4] = 9;
        assert!(matches!(decode::<f64>(&vers), Err(StoreError::BadVersion(_))));
        let mut trailing = bytes;
        trailing.push(0);
        assert!(matches!(decode::<f64>(&trailing), Err(StoreError::Corrupt { .. })));
    }

    #[test]
    fn q8_export_size_tracks_param_count() {
        let (_, store) = sample_store();
        let q8 = export_q8(&store);
        // Header 10, one presence byte per slot, plus scale and count for the
        // two present slots; everything else is one byte per parameter.
        let slots = store.layers.len();
        let overhead = 10 + slots + 2 * (8 + 8);
        assert_eq!(q8.len() as u64, overhead as u64 + store.param_count());
        assert_eq!(q8_payload_bytes(&store), store.param_count());
    }
}
