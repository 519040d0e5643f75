//! Schrödinger operators with δ and δ′ interactions supported on closed
//! curves and spheres: boundary operators, Birman–Schwinger bound states,
//! and Schatten-class decay of resolvent-power differences.

pub mod boundary_ops;
pub mod bs_solver;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod krein_schatten;
pub mod op_algebra;
pub mod specfun;

pub use error::{Error, Result};
