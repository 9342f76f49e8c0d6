use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not positive definite (breakdown at pivot {pivot})")]
    Singular { pivot: usize },

    #[error("degenerate augmentation: phi = {phi:e} (candidate coincides with a selected point)")]
    Degenerate { phi: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("response matrix has no variation after centering")]
    DegenerateResponse,

    #[error("series is constant; normalizing denominator is zero")]
    DegenerateDenominator,

    #[error("every optimizer start failed to factorize the correlation matrix")]
    FitFailed,

    #[error("coefficient {index}: {source}")]
    Coefficient {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("neighborhood step k = {k}: {source}")]
    Neighborhood {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no admissible candidate left for selection")]
    NoCandidate,

    #[error("refusing to fit a full model on N = {n} points (limit {limit}); set force = true to override")]
    SizeGuard { n: usize, limit: usize },

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
