use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("{what} supports at most {max} qubits, got {n}")]
    TooLarge { what: &'static str, n: usize, max: usize },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("calibration data incomplete: {0}")]
    Calibration(String),

    #[error("confusion matrix is singular: {0}")]
    SingularConfusion(String),

    #[error("cholesky factorization failed after jitter {jitter:e}")]
    Cholesky { jitter: f64 },

    #[error("objective evaluation failed: {0}")]
    Objective(String),

    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Short stable identifier used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGraph(_) => "invalid_graph",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::TooLarge { .. } => "too_large",
            Error::Degenerate(_) => "degenerate",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InvalidNoise(_) => "invalid_noise",
            Error::Calibration(_) => "calibration",
            Error::SingularConfusion(_) => "singular_confusion",
            Error::Cholesky { .. } => "cholesky",
            Error::Objective(_) => "objective",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
