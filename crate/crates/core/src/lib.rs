//! Evaluation toolkit for triage classifiers scored against a binary
//! reference standard: ROC/PR curves, DeLong inference, threshold matching,
//! the tests-saved / number-needed-to-test framework, subgroup analysis and
//! seeded binormal cohorts.
//!
//! Decision rule throughout: `score >= threshold` is triage-positive.

pub mod cohort;
pub mod curves;
pub mod error;
pub mod framework;
pub mod ranks;
mod sample;
pub mod stats;
pub mod strata;
pub mod summary;
pub mod synth;
pub mod thresholds;

pub use cohort::{
    parse_cohort, write_cohort, BinaryClassification, Cohort, CohortRecord, IngestOptions, RadiologistGrade,
    ScoreScale,
};
pub use curves::{auc, pr_curve, prauc, roc_curve, Curve, CurveKind, CurvePoint};
pub use error::{Error, Result};
pub use stats::{BootstrapConfig, ConfidenceInterval, TestResult, DEFAULT_LEVEL};
