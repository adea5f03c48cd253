//! Interpretable Kolmogorov-Arnold networks for one-step-ahead forecasting
//! of volatility-index series, with classical benchmarks and forecast
//! evaluation.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values, and
// edge loops index several per-node arrays by (q, p) at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod benchmarks;
pub mod bspline;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod interpret;
pub mod kan_core;
pub mod leverage;
pub mod linalg;
pub mod par;
pub mod pipeline;
pub mod train;

pub use error::{Error, Result};
