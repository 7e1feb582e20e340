//! Statistical toolkit for testing whether an AI system's case-level
//! assessments are diagnostically interchangeable with the standard of care.
//!
//! The crate is organised around the analysis pipeline:
//!
//! - [`cohort`]: reader studies, case cohorts and AI predictions (CSV / JSON).
//! - [`agreement`]: inter-reader and reader-vs-standard-of-care agreement with
//!   percentile bootstrap, and prevalence adjustment.
//! - [`roc`]: AUROC, DeLong variance, ROC operating points, binary metrics,
//!   Krippendorff's alpha, benefit-to-harm ratios, stratified AUROC.
//! - [`interchange`]: the primary endpoint, patient-level bootstrap Wald CI,
//!   the margin decision and Holm–Bonferroni.
//! - [`mi`]: verification-bias adjustment by multiple imputation with
//!   Rubin's-rules pooling.
//! - [`simulate`]: binormal score generation, operating-point tables,
//!   plan simulation and synthetic reader panels.
//! - [`power`]: expected CI half-widths.
//! - [`pipeline`]: configuration, full per-cohort analysis and reports.
//!
//! Every resampling kernel draws replicate `b` from an RNG stream derived
//! from `(seed, b)` (see [`exec`]), so results do not depend on the number of
//! worker threads or on whether the `parallel` feature is enabled.

pub mod agreement;
pub mod cohort;
pub mod error;
pub mod exec;
pub mod interchange;
pub mod mi;
pub mod pipeline;
pub mod power;
pub mod roc;
pub mod simulate;

pub use error::{Error, Result};
pub use exec::Execution;
