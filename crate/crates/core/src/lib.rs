//! Polynomial chaos expansions for dynamical systems with correlated inputs.

// `!(x > 0.0)` deliberately treats NaN as failure; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod compensated;
pub mod error;
pub mod galerkin;
pub mod moments;
pub mod polyalg;
pub mod scenarios;
pub mod stats;

pub use error::{PceError, Result};
