use thiserror::Error;

/// Errors raised by the reconstruction toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("photon number {n} exceeds the supported maximum {max}")]
    CutoffTooLarge { n: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "kernel column {column} is missing probability {deficit:.3e} outside the bin range; \
         widen the range or lower the cutoff"
    )]
    ColumnDeficit { column: usize, deficit: f64 },

    #[error("model predicts zero probability for occupied bin {bin}")]
    ModelZero { bin: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("truncated tail population {tail:.3e} exceeds tolerance {tolerance:.0e}")]
    Truncation { tail: f64, tolerance: f64 },

    #[error("quadrature density keeps mass {tail:.3e} outside the tabulated range")]
    TabulationRange { tail: f64 },

    #[error("histogram is empty: all {overflow} samples fell outside the bin range")]
    EmptyHistogram { overflow: u64 },

    #[error("overflow fraction {fraction:.3e} exceeds {limit:.0e}; widen the bin range")]
    Overflow { fraction: f64, limit: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("efficiency mismatch: record has eta={record}, configuration has eta={config}")]
    EtaMismatch { record: f64, config: f64 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable category used by the command line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::CutoffTooLarge { .. }
            | Error::InvalidParameter(_)
            | Error::ColumnDeficit { .. }
            | Error::TabulationRange { .. }
            | Error::Overflow { .. } => "range",
            Error::ModelZero { .. } | Error::EmptyHistogram { .. } => "numeric",
            Error::Truncation { .. } | Error::InvalidState(_) => "state",
            Error::DimensionMismatch(_) | Error::EtaMismatch { .. } => "validation",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
