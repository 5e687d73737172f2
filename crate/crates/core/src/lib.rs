//! Stress-conditioned random-walk model of asset returns.
//!
//! Daily returns are modeled as normal draws whose mean and standard
//! deviation depend on an observable stress level κ (an implied-volatility
//! index such as VXO or MOVE). Pooling days that sit at different stress
//! levels produces a normal mixture, and the fat tails of observed return
//! distributions follow from that mixing.
//!
//! Modules:
//!
//! * [`ingest`] parses and aligns dated CSV inputs into labeled series.
//! * [`estimators`] orders, partitions and buckets observations into
//!   per-stress estimates ([`estimators::EstimateTable`], [`estimators::Grid2D`]).
//! * [`normality`] runs Shapiro-Wilk tests and rescales returns by σ(κ).
//! * [`riskmodel`] evaluates the mixture CDF and derived risk measures.
//! * [`portfolio`] covers two-asset frontiers, 2-D mixture CDFs and CAPM.
//! * [`simulate`] generates synthetic markets with known ground truth.
//! * [`cli`] wires everything into a file-based batch tool.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimators;
pub mod ingest;
pub mod normality;
pub mod portfolio;
pub mod riskmodel;
pub mod simulate;
pub mod special;
mod stats;

pub use error::{Error, Result};
