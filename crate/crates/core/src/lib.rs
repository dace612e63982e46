//! Extrapolation-based first-order methods for monotone variational
//! inequalities over a simple set intersected with convex function
//! constraints.
//!
//! Find `x*` in `X ∩ {g <= 0}` with `<F(x*), x - x*> >= 0` for all feasible
//! `x`, where `F` is monotone, `X` is a box, ball or simplex, and `g` is a
//! vector of convex functions.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod oracles;
pub mod problem;
pub mod saddle;

pub use error::{FcviError, Result};
