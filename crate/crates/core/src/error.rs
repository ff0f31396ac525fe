use thiserror::Error;

/// Errors raised by model construction and the simulation/verification routines.
///
/// State indices carried by variants are 1-based, matching how states are
/// numbered in configuration files and exported CSV.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("rate matrix is not square ({rows} rows, row {row} has {cols} entries)")]
    NonSquare { rows: usize, row: usize, cols: usize },

    #[error("generator needs at least 2 states, got {0}")]
    TooFewStates(usize),

    #[error("negative rate at ({0}, {1})")]
    NegativeRate(usize, usize),

    #[error("state {0} has zero exit rate")]
    ZeroExitRate(usize),

    #[error("zero off-diagonal rate at ({0}, {1}) but strict positivity was requested")]
    ZeroRate(usize, usize),

    #[error("row {row}: supplied diagonal {diagonal} does not match minus the exit rate {exit_rate}")]
    RowMismatch { row: usize, diagonal: f64, exit_rate: f64 },

    #[error("uniformization did not reach tolerance {tol} within {max_terms} terms")]
    ToleranceNotReached { tol: f64, max_terms: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state {0} is out of range")]
    BadState(usize),

    #[error("time {t} lies outside the horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },

    #[error("jump-law order m = {0} is not supported (m must be 1 or 2)")]
    UnsupportedOrder(usize),

    #[error("time point {t} falls in the first or last grid cell, or shares a cell with another point")]
    BadTimePoint { t: f64 },

    #[error("return family is not admissible: gamma_N = {gamma} must be < 1")]
    GammaTooLarge { gamma: f64 },
}

impl LabError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        LabError::InvalidParameter { name, reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
