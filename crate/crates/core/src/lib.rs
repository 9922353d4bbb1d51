//! Hybrid High-Order discretizations of the Poisson problem and linear
//! elasticity on interval and polygonal meshes.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod basis;
pub mod cli;
pub mod context;
pub mod elasticity_operators;
pub mod error;
pub mod harness;
pub mod local_operators;
pub mod mesh;
pub mod problems;
pub mod projection;
pub mod quadrature;
pub mod sparse;

pub use error::{HhoError, Result};

/// Point in the plane; 1D meshes store `[x, 0]`.
pub type Point = [f64; 2];
