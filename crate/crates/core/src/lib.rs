//! Multiple-solution search for nonlinear boundary-value problems with
//! boundary-exact neural networks and deflated least-squares training.

pub mod autodiff;
pub mod cli;
pub mod deflation;
pub mod error;
pub mod model;
pub mod network;
pub mod optimizer;
pub mod probing;
pub mod problems;
pub mod registry;
pub mod residual;
pub mod rng;
pub mod sampler;
pub mod stencil;
pub mod wrappers;

pub use error::{Error, Result};
