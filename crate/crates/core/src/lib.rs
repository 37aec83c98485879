//! Bidomain and EMI cardiac tissue simulation with a strength-interval
//! experiment pipeline.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the element-matrix formulas.
#![allow(clippy::needless_range_loop)]

pub mod calibration;
pub mod cell;
pub mod chi;
pub mod config;
pub mod fem;
pub mod geometry;
pub mod io;
pub mod protocol;
pub mod stepping;
pub mod verify;
