use std::fmt::{Debug, Display};

use num_traits::{Float, NumAssign};

/// Scalar type carried by tensors, polynomial coefficients and moments.
///
/// Everything numeric in this crate is written against this trait so the same
/// code runs in `f32` or `f64`; the crate-root aliases pin the concrete types
/// used by the training pipeline (double precision).
pub trait Scalar: Float + NumAssign + Default + Debug + Display + Send + Sync + 'static {
    /// Exact conversion from a small index (abscissa, dimension size).
    fn from_usize(n: usize) -> Self {
        Self::from(n).expect("index fits in scalar")
    }

    fn from_f64(v: f64) -> Self {
        Self::from(v).expect("f64 converts to scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl<T> Scalar for T where T: Float + NumAssign + Default + Debug + Display + Send + Sync + 'static {}
