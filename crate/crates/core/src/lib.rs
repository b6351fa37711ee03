//! Climate Disaster Resilience Index (CDRI) scoring and temporal forecasting.
//!
//! The crate turns expert questionnaire panels (five dimensions, five weighted
//! parameters each, scored 1..=5) into yearly resilience vectors, fits six
//! forecasting models over the resulting series and renders comparison
//! artifacts (tables and SVG charts).
//!
//! Module map:
//!
//! * [`model`]: domain types and the scoring arithmetic.
//! * [`ingest`]: CSV parsing/validation, dataset archives, series building and
//!   the seeded synthetic panel generator.
//! * [`forecast`]: OLS trend, ridge VAR(1), CART/forest/boosting and an LSTM.
//! * [`pipeline`]: the end-to-end forecast and backtest workflow.
//! * [`report`]: markdown/CSV tables and SVG charts.
//! * [`cli`]: the `cdri` command-line front end.

pub mod cli;
pub mod error;
pub mod forecast;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod rng;

pub use error::{CdriError, Result};
pub use model::{
    aggregate_experts, dimension_score, expert_vector, overall_cdri, AssessmentRecord, Dimension,
    PanelDataset, ParameterScore, Provenance, ResilienceVector, DIMENSION_COUNT, SCORE_MAX,
    SCORE_MIN,
};
