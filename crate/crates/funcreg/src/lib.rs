//! Bayesian functional regression with penalized splines.
//!
//! Scalar-on-function, functional Cox, joint FPCA, and function-on-scalar
//! models, each expressed as a differentiable log-posterior and sampled with
//! an in-house adaptive Hamiltonian Monte Carlo engine. See the `examples/`
//! directory for one runnable program per capability.

pub mod analysis;
pub mod basis;
pub mod design;
pub mod error;
pub mod fpca;
pub mod io;
pub mod posteriors;
pub mod reparam;
pub mod sampler;
pub mod simlab;

pub use error::{Error, Result};
