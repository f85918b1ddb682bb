pub mod error;
pub mod eval;
pub mod geometry;
pub mod heatmap;
pub mod losses;
pub mod netcore;
pub mod rngs;
pub mod scalar;
pub mod synthgen;
pub mod trainer;

pub use error::{HgnError, Result};
pub use scalar::Real;

/// Single precision is the default for training and inference.
pub type Network32 = netcore::Network<f32>;
/// Double precision, used for gradient checks.
pub type Network64 = netcore::Network<f64>;
pub type Params32 = netcore::ParamSet<f32>;
pub type Params64 = netcore::ParamSet<f64>;
pub type Model32 = eval::Model<f32>;
pub type Model64 = eval::Model<f64>;
