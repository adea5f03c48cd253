//! Crate-wide error type.

use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // spline / network
    #[error("degenerate grid domain: lower {lower} must be strictly below upper {upper}")]
    DegenerateDomain { lower: f64, upper: f64 },
    #[error("basis derivative requires spline order >= 1")]
    OrderTooLow,
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid network shape: {0}")]
    InvalidShape(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("all edge norms in the layer are zero")]
    ZeroNorm,
    #[error("objective is not finite")]
    NonFiniteObjective,

    // interpretation
    #[error("pruning disconnected the output node")]
    AllPruned,
    #[error("symbolic fit needs at least 3 distinct sample inputs")]
    DegenerateSamples,
    #[error("edge (layer {layer}, {q}->{p}) uses non-affine candidate `{name}`")]
    NonAffineEdge {
        layer: usize,
        q: usize,
        p: usize,
        name: String,
    },
    #[error("closed form lacks required feature `{0}`")]
    MissingFeature(String),

    // data
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("insufficient history: need more than {needed} observations, have {have}")]
    InsufficientHistory { needed: usize, have: usize },
    #[error("split produced an empty {0} segment")]
    EmptySegment(&'static str),
    #[error("no risk-free rate on or before {0}")]
    MissingRate(NaiveDate),
    #[error("invalid split: {0}")]
    InvalidSplit(String),

    // benchmarks
    #[error("design matrix is singular")]
    SingularDesign,
    #[error("optimizer failed to converge: {0}")]
    NonConvergence(String),
    #[error("singular fit: {0}")]
    SingularFit(String),
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("insufficient context for forecasting at index {0}")]
    InsufficientContext(usize),

    // evaluation
    #[error("actual values must be strictly positive")]
    NonPositiveActual,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("forecast reproduces the actuals exactly; F statistic undefined")]
    PerfectForecast,
    #[error("forecast has zero variance")]
    DegenerateForecast,
    #[error("all residuals are zero")]
    ZeroResiduals,
    #[error("too few observations: need at least {needed}, have {have}")]
    TooFewObservations { needed: usize, have: usize },

    // leverage / cli
    #[error("no overlapping dates between forecasts, returns and actuals")]
    EmptyJoin,
    #[error("base report missing: {}", .0.display())]
    MissingBaseReport(PathBuf),
    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 config, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Config(_) | InvalidShape(_) | InvalidSplit(_) | MissingBaseReport(_) => 1,
            FileNotFound(_)
            | Parse { .. }
            | DuplicateDate(_)
            | InsufficientHistory { .. }
            | EmptySegment(_)
            | MissingRate(_)
            | EmptyJoin
            | Io(_)
            | Json(_)
            | Csv(_)
            | ShapeMismatch { .. }
            | MissingFeature(_)
            | EmptyBatch
            | NonPositiveActual
            | LengthMismatch { .. }
            | TooFewObservations { .. } => 2,
            _ => 3,
        }
    }
}
