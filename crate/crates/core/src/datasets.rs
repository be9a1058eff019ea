//! Loaders for the two benchmark datasets, bit-exact over the published
//! binary formats.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CIFAR_RECORD: usize = 3073;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: bad magic {got:#010x}, expected {expected:#010x}")]
    BadMagic { path: String, got: u32, expected: u32 },
    #[error("{path}: truncated file, needed {needed} bytes, got {got}")]
    Truncated { path: String, needed: usize, got: usize },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: size {size} is not a multiple of the {record}-byte record")]
    BadRecordSize { path: String, size: usize, record: usize },
    #[error("{path}: label {label} outside 0..=9")]
    BadLabel { path: String, label: u8 },
}

/// Images plus labels; images are `[N, H, W, C]` scaled to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct LabeledImages<F> {
    pub images: Tensor<F>,
    pub labels: Vec<u8>,
}

impl<F: Scalar> LabeledImages<F> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copies example `i` out as an `[H, W, C]` tensor.
    pub fn example(&self, i: usize) -> Tensor<F> {
        let shape: Vec<usize> = self.images.shape()[1..].to_vec();
        let stride: usize = shape.iter().product();
        Tensor::new(shape, self.images.data()[i * stride..(i + 1) * stride].to_vec())
            .expect("stored examples are finite")
    }

    /// Splits off the first `n` examples (e.g. the 50k training portion).
    pub fn split_at(&self, n: usize) -> (LabeledImages<F>, LabeledImages<F>) {
        let shape = self.images.shape();
        let stride: usize = shape[1..].iter().product();
        let n = n.min(self.len());
        let mk = |range: std::ops::Range<usize>| {
            let mut s = shape.to_vec();
            s[0] = range.len();
            LabeledImages {
                images: Tensor::from_parts(
                    s,
                    self.images.data()[range.start * stride..range.end * stride].to_vec(),
                ),
                labels: self.labels[range].to_vec(),
            }
        };
        (mk(0..n), mk(n..self.len()))
    }

    /// Averages the channel axis away; used for the grayscale CIFAR variant.
    pub fn to_grayscale(&self) -> LabeledImages<F> {
        let [n, h, w, c] = *self.images.shape() else {
            return self.clone();
        };
        if c == 1 {
            return self.clone();
        }
        let inv = F::from_usize(c).recip();
        let src = self.images.data();
        let images = Tensor::from_fn(vec![n, h, w, 1], |i| {
            let base = i * c;
            (0..c).fold(F::zero(), |acc, cc| acc + src[base + cc]) * inv
        });
        LabeledImages {
            images,
            labels: self.labels.clone(),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Truncated {
            path: path.display().to_string(),
            needed: at + 4,
            got: bytes.len(),
        })
}

/// Loads an IDX image/label file pair. Pixels are scaled by 1/255; shapes are
/// taken from the big-endian headers.
pub fn load_mnist<F: Scalar>(images_path: &Path, labels_path: &Path) -> Result<LabeledImages<F>, DataError> {
    let img_bytes = read_file(images_path)?;
    let magic = be_u32(&img_bytes, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            path: images_path.display().to_string(),
            got: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let n = be_u32(&img_bytes, 4, images_path)? as usize;
    let rows = be_u32(&img_bytes, 8, images_path)? as usize;
    let cols = be_u32(&img_bytes, 12, images_path)? as usize;
    let needed = 16 + n * rows * cols;
    if img_bytes.len() < needed {
        return Err(DataError::Truncated {
            path: images_path.display().to_string(),
            needed,
            got: img_bytes.len(),
        });
    }

    let lbl_bytes = read_file(labels_path)?;
    let magic = be_u32(&lbl_bytes, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic {
            path: labels_path.display().to_string(),
            got: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let n_labels = be_u32(&lbl_bytes, 4, labels_path)? as usize;
    if lbl_bytes.len() < 8 + n_labels {
        return Err(DataError::Truncated {
            path: labels_path.display().to_string(),
            needed: 8 + n_labels,
            got: lbl_bytes.len(),
        });
    }
    if n != n_labels {
        return Err(DataError::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }

    let scale = F::from_f64(1.0 / 255.0);
    let pixels = &img_bytes[16..needed];
    let images = Tensor::from_fn(vec![n, rows, cols, 1], |i| F::from_usize(pixels[i] as usize) * scale);
    let labels = lbl_bytes[8..8 + n].to_vec();
    for &label in &labels {
        if label > 9 {
            return Err(DataError::BadLabel {
                path: labels_path.display().to_string(),
                label,
            });
        }
    }
    Ok(LabeledImages { images, labels })
}

/// Loads CIFAR-10 binary batches (3073-byte records: label byte plus three
/// channel planes). Pixels scale to `[0, 1]`; output is `[N, 32, 32, 3]` with
/// channels interleaved in R, G, B order.
pub fn load_cifar10<F: Scalar>(batch_paths: &[impl AsRef<Path>]) -> Result<LabeledImages<F>, DataError> {
    let mut labels = Vec::new();
    let mut planes: Vec<u8> = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = read_file(path)?;
        if bytes.len() % CIFAR_RECORD != 0 {
            return Err(DataError::BadRecordSize {
                path: path.display().to_string(),
                size: bytes.len(),
                record: CIFAR_RECORD,
            });
        }
        let records = bytes.len() / CIFAR_RECORD;
        if records == 0 {
            eprintln!("warning: {} holds zero records", path.display());
        }
        for r in 0..records {
            let rec = &bytes[r * CIFAR_RECORD..(r + 1) * CIFAR_RECORD];
            if rec[0] > 9 {
                return Err(DataError::BadLabel {
                    path: path.display().to_string(),
                    label: rec[0],
                });
            }
            labels.push(rec[0]);
            planes.extend_from_slice(&rec[1..]);
        }
    }
    let n = labels.len();
    let scale = F::from_f64(1.0 / 255.0);
    let images = if n == 0 {
        Tensor::from_parts(vec![0, 32, 32, 3], Vec::new())
    } else {
        // Planar RGB per record -> interleaved [32, 32, 3].
        Tensor::from_fn(vec![n, 32, 32, 3], |i| {
            let c = i % 3;
            let px = (i / 3) % (32 * 32);
            let ex = i / (3 * 32 * 32);
            F::from_usize(planes[ex * 3072 + c * 1024 + px] as usize) * scale
        })
    };
    Ok(LabeledImages { images, labels })
}
