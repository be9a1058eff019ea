//! Neural-network training with grouped polynomial weight approximation,
//! coefficient-domain inference with computation reuse, and the matching
//! PE-array cost model.
//!
//! The numeric core is generic over [`Scalar`]; the aliases below pin the
//! double-precision types the training pipeline and CLI use.

pub mod datasets;
pub mod hwcost;
pub mod infer;
pub mod net;
pub mod polyproj;
pub mod presets;
pub mod scalar;
pub mod store;
pub mod tensor;
pub mod train;

pub use scalar::Scalar;

/// Double-precision tensor, the training default.
pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;

pub type Weights64 = net::Weights<f64>;
pub type CoeffStore64 = polyproj::CoeffStore<f64>;
pub type DesignCache64 = polyproj::DesignCache<f64>;
