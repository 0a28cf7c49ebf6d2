//! Trial configuration, orchestration and reporting.

mod report;
mod runner;
mod spec;
pub mod synthetic;

use thiserror::Error;

pub use report::{decision_sentence, TrialReport};
pub use runner::{run_iteration, run_trial, IterationResult, TrialContext, CSV_HEADER};
pub use spec::{SyntheticSpec, TrialSpec, DEFAULT_TIME_BOUND_MS};

use crate::adjudication::AdjudicationError;
use crate::device::{ArmError, DeviceError};
use crate::patient::PatientError;
use crate::sprt::SprtError;
use crate::survival::SurvivalError;

#[derive(Debug, Error)]
pub enum TrialError {
    #[error("config: {0}")]
    Parse(String),
    #[error("config field `{field}`: {message}")]
    Config {
        field: &'static str,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Patient(#[from] PatientError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Arm(#[from] ArmError),
    #[error(transparent)]
    Adjudication(#[from] AdjudicationError),
    #[error(transparent)]
    Survival(#[from] SurvivalError),
    #[error(transparent)]
    Sprt(#[from] SprtError),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("iteration {iter} (seed {seed}): {source}")]
    Iteration {
        iter: u64,
        seed: u64,
        #[source]
        source: Box<TrialError>,
    },
}
