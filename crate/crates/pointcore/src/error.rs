//! Crate-wide error umbrella and process exit-code policy.

use thiserror::Error;

use crate::bank::BankError;
use crate::config::ConfigError;
use crate::eval::{EvalError, MetricError};
use crate::features::FeatureError;
use crate::geometry::GeometryError;
use crate::io::IoError;
use crate::registration::RegistrationError;
use crate::sampling::SamplingError;
use crate::scoring::ScoreError;

/// Any failure the pipeline can produce, one variant per module.
#[derive(Debug, Error)]
pub enum Error {
    /// A data problem with no richer representation, such as an input
    /// directory containing no cloud files.
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Process exit code for this error: 4 when registration itself failed
/// (however deeply nested), 3 for every other data or configuration
/// problem. Exit 2 is reserved for command-line usage errors and 0 for
/// success, neither of which reaches this type.
pub fn exit_code(error: &Error) -> i32 {
    if is_registration_failure(error) {
        4
    } else {
        3
    }
}

fn is_registration_failure(error: &Error) -> bool {
    match error {
        Error::Registration(_) => true,
        Error::Bank(e) => bank_is_registration(e),
        Error::Score(e) => score_is_registration(e),
        Error::Eval(e) => eval_is_registration(e),
        _ => false,
    }
}

fn bank_is_registration(error: &BankError) -> bool {
    matches!(error, BankError::Registration { .. })
}

fn score_is_registration(error: &ScoreError) -> bool {
    matches!(error, ScoreError::Registration(_))
}

fn eval_is_registration(error: &EvalError) -> bool {
    match error {
        EvalError::Bank(e) => bank_is_registration(e),
        EvalError::Score(e) => score_is_registration(e),
        _ => false,
    }
}
