use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("expected a {expected} field, got {found}")]
    WrongDomain {
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid mode: {0}")]
    InvalidMode(String),

    #[error("field has zero norm")]
    ZeroNorm,

    #[error("field contains non-finite amplitudes")]
    NonFinite,

    #[error("index ({0}, {1}) is outside the grid")]
    OffGrid(i64, i64),

    #[error("invalid coupling angle {0} (must satisfy 0 < theta <= pi/2)")]
    InvalidTheta(f64),

    #[error("post-selection has zero success probability")]
    DivergentPostSelection,

    #[error("kraus set is not complete: max |sum M^dag M - I| = {0:e}")]
    IncompleteKraus(f64),

    #[error("outcome {0} has zero probability; post-measurement state undefined")]
    ZeroProbability(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("sample count must be at least 1")]
    ZeroSamples,

    #[error("weak value map has no valid pixels")]
    AllInvalid,

    #[error("mask blocks all light")]
    OpaqueMask,

    #[error("invalid propagation parameters: {0}")]
    InvalidPropagation(String),

    #[error("{kernel} kernel undersampled at d = {distance:e} m; minimum admissible distance is {min_distance:e} m")]
    Undersampled {
        kernel: &'static str,
        distance: f64,
        min_distance: f64,
    },

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
