use std::io;

use thiserror::Error;

use crate::model::Dimension;

pub type Result<T, E = CdriError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CdriError {
    #[error("expected {expected} parameters, found {found}")]
    ParameterCount { expected: usize, found: usize },

    #[error("parameter id {0} is outside 1..=5 or repeated")]
    ParameterId(u8),

    #[error("score {0} is outside [1, 5]")]
    ScoreOutOfRange(f64),

    #[error("weight {0} is negative or not finite")]
    InvalidWeight(f64),

    #[error("weights sum to {0}, expected 1 within 1e-6")]
    WeightSum(f64),

    #[error("dimension {0} is missing")]
    MissingDimension(Dimension),

    #[error("dimension {0} is present more than once")]
    DuplicateDimension(Dimension),

    #[error("records for one vector mix experts or years")]
    MixedRecords,

    #[error("expert {expert} in {year} does not cover all five dimensions")]
    IncompletePair { expert: String, year: i32 },

    #[error("year {0} is not present in the dataset")]
    YearAbsent(i32),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("need at least {needed} distinct years, found {found}")]
    TooFewYears { needed: usize, found: usize },

    #[error("years {0:?} are not equally spaced")]
    IrregularYears(Vec<i32>),

    #[error("unknown dimension token {0:?}")]
    UnknownDimension(String),

    #[error("design matrix is singular")]
    SingularDesign,

    #[error("ridge strength {0} is invalid for this fit")]
    InvalidRidge(f64),

    #[error("input has no samples")]
    EmptyInput,

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("unknown configuration key {0:?}")]
    UnknownConfigKey(String),

    #[error("horizon {horizon} is not a whole number of {interval}-year steps after {last_year}")]
    InvalidHorizon {
        horizon: i32,
        last_year: i32,
        interval: i32,
    },

    #[error("too many vectors for one chart: {0} (limit 8)")]
    TooManySeries(usize),

    #[error("dataset failed validation with {0} error(s)")]
    Validation(usize),

    #[error("unsupported schema {found:?}, expected {expected:?}")]
    Schema { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
