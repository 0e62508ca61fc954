//! Entropy functionals along one-dimensional Wasserstein geodesics and
//! numerical checks of curvature-dimension inequalities.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod comparison;
pub mod entropy;
pub mod error;
pub mod geometry;
pub mod lab;
pub mod numerics;
pub mod transport;

pub use error::{LabError, Result};
