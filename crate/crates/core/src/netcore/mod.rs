//! Network core: reverse-mode tape, convolution kernels, parameters and the
//! eye-region network itself.

pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod network;
pub mod params;
pub mod tape;

pub use network::{Heads, Network, NetworkConfig, NetworkOutput, OutputVars};
pub use params::{Param, ParamSet};
pub use tape::{Gradients, Tape, Tensor, Var};
pub use checkpoint::{checkpoint_dtype, Checkpoint};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
