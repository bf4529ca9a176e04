use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the estimators, the regression layer and the I/O helpers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("a state space needs at least two states (got {0})")]
    InvalidStateSpace(usize),
    #[error("no transition out of state {from} in a {num_states}-state chain")]
    InvalidTransition { from: usize, num_states: usize },
    #[error("state {state} is outside 1..={num_states}")]
    StateOutOfRange { state: usize, num_states: usize },
    #[error("group-size weights require a group label on every observation")]
    MissingGroups,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("weight at index {index} must be positive and finite (got {weight})")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("{what}: expected length {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("bandwidth must be positive and finite (got {0})")]
    NonPositiveBandwidth(f64),
    #[error("cannot derive a rule-of-thumb bandwidth from {0}; pass a fixed bandwidth value instead")]
    DegenerateBandwidth(&'static str),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("grid [{grid_min}, {grid_max}] extends beyond the observed inspection times [{data_min}, {data_max}]")]
    GridOutsideData {
        grid_min: f64,
        grid_max: f64,
        data_min: f64,
        data_max: f64,
    },
    #[error("time point {0} lies outside the estimation grid")]
    TimepointOutsideGrid(f64),
    #[error("the jackknife needs at least two units")]
    JackknifeTooSmall,
    #[error("pseudo-value panel is not aligned with the dataset: {0}")]
    MisalignedPanel(String),
    #[error("normal matrix is singular; dependent columns: {}", .columns.join(", "))]
    SingularMatrix { columns: Vec<String> },
    #[error("logit link needs responses in [0, 1]; binarize pseudo-values first (found {0})")]
    LogitOutOfRange(f64),
    #[error("coefficient {0} has zero or negative estimated variance")]
    ZeroVariance(usize),
    #[error("kernel weights sum to zero at z = {0}")]
    EmptyKernelMass(f64),
    #[error("dataset failed validation:\n{0}")]
    Validation(ValidationReport),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors caused by inconsistent user input rather than a failed computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_) | Error::MissingGroups | Error::StateOutOfRange { .. }
        )
    }
}
