use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("number of particles must be at least 1")]
    NoParticles,

    #[error("degenerate initialisation: all initial weights are zero")]
    DegenerateInitialisation,

    #[error("weight degeneracy at time {time}: all weights are zero")]
    WeightDegeneracy { time: usize },

    #[error("categorical weights must contain at least one positive entry")]
    ZeroCategoricalWeights,

    #[error("invalid {what} at time {time}: {value}")]
    InvalidWeight {
        what: &'static str,
        time: usize,
        value: f64,
    },

    #[error("invalid ancestor index {index} for {n_particles} particles")]
    InvalidAncestor { index: usize, n_particles: usize },

    #[error("ancestor array has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("generation {generation} is outside the window [{oldest}, {newest}]")]
    GenerationOutOfWindow {
        generation: usize,
        oldest: usize,
        newest: usize,
    },

    #[error("lag {lag} is outside the window span {span}")]
    LagOutOfWindow { lag: usize, span: usize },

    #[error("estimator is at time {estimator}, cloud is at time {cloud}")]
    TimeMismatch { estimator: usize, cloud: usize },

    #[error("resampling schedule has no entry for time {time}")]
    ScheduleExhausted { time: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NoParticles | Error::InvalidParameter(_) => "invalid_parameter",
            Error::DegenerateInitialisation | Error::WeightDegeneracy { .. } => "degeneracy",
            Error::ZeroCategoricalWeights | Error::InvalidWeight { .. } => "invalid_weight",
            Error::InvalidAncestor { .. } | Error::LengthMismatch { .. } => "invalid_ancestor",
            Error::GenerationOutOfWindow { .. } | Error::LagOutOfWindow { .. } => "window",
            Error::TimeMismatch { .. } => "time_mismatch",
            Error::ScheduleExhausted { .. } => "schedule",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Data { .. } | Error::Csv(_) | Error::Json(_) => "data",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
