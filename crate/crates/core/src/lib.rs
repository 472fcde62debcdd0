//! Covariate analysis of biometric verification scores.
//!
//! Raw match scores from each recognition algorithm are mapped onto a common
//! `log10(FAR)` axis by fitting a line through impostor-tail anchors. The
//! normalized genuine scores are then explained by categorical covariates in a
//! random-intercept linear mixed model (one intercept per sensor x collection
//! group), fitted by REML. Fitted or tabulated coefficients combine additively
//! into a predicted `log10(FAR)` for any scenario.
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the command
//! line live in the `covfar` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::excessive_precision
)]

extern crate alloc;

pub mod covariates;
pub mod data;
pub mod error;
#[allow(clippy::approx_constant)]
pub mod fixture;
mod linalg;
pub mod lmm;
pub mod metrics;
pub mod normalization;
pub mod prediction;
pub mod report;
pub mod stats;
pub mod synthetic;

pub use covariates::{CovariateSpec, DesignMatrix, Scenario};
pub use data::{DropLog, ProbeMetadata, ScoreRow, ScoreTable};
pub use error::{Error, Result};
pub use lmm::{CoefficientStat, FittedModel};
pub use normalization::{NormalizationMap, NormalizedTable};
pub use prediction::FarEstimate;
