//! Polyhedral variational analysis and M-stationarity certificates for
//! two-stage integrated learning and optimization.

// Dense kernels index several arrays in lockstep, and `!(x >= 0.0)` is the
// idiom used throughout to reject NaN alongside negatives.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cone;
pub mod error;
pub mod feasible;
pub mod gen;
pub mod graph_normal;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod newsvendor;
pub mod portfolio;
pub mod qp;
pub mod stationarity;

pub use error::{Error, Result};
