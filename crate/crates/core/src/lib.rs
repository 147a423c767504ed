#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod distance;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod ou;
pub mod poisson;
pub mod quad;
pub mod rng;
pub mod sampling;
pub mod sde;

pub use error::{LabError, Result};
pub use rng::RngStream;
