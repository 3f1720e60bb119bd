//! Simulation lab for the missing-outcome prediction-set constructors:
//! reproducible data-generating processes, per-trial coverage and width
//! metrics, multi-trial studies with standard errors, and bin-conditional
//! coverage estimation.

mod conditional;
mod dgp;
mod export;
mod metrics;
mod study;

pub use conditional::{conditional_coverage_study, ConditionalEstimate};
pub use dgp::{DgpKind, DgpModel, DgpSpec, GeneratedInstance, HIGHDIM_DIM};
pub use export::{coverage_histogram, histogram, summary_table, width_histogram};
pub use metrics::{evaluate, evaluate_with_bins, TrialMetrics};
pub use study::{
    aggregate, build_rule, calibration_scores, fit_study_models, run_study, FittedStudyModels,
    Method, PropensitySource, StudyAggregates, StudyConfig, StudySummary,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid generator spec: {0}")]
    BadSpec(String),
    #[error("rule thresholds cover {got} indices, expected the {expected} missing ones")]
    IndexMismatch { expected: usize, got: usize },
    #[error("score model error: {0}")]
    Score(String),
    #[error("propensity fit error: {0}")]
    Propensity(String),
    #[error("constructor error: {0}")]
    Conformal(String),
    #[error("this method needs a delta level")]
    MissingDelta,
}
