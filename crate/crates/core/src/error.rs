use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The variants are grouped by the CLI exit code they map to, see
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("frame mismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: String, found: String },
    #[error("point outside the grid domain on axis {axis}: {value} not in [{lo}, {hi}]")]
    OutOfDomain { axis: usize, value: f64, lo: f64, hi: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("scale function invalid at t = {t}: {reason}")]
    ScaleValidity { t: f64, reason: String },
    #[error("potential error: {0}")]
    Potential(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("time mismatch: wavefunction at {found}, expected {expected}")]
    TimeMismatch { expected: f64, found: f64 },
    #[error("non-finite amplitude after step {step}")]
    NonFinite { step: usize },
    #[error("boundary leak {leak:.3e} exceeds abort threshold {threshold:.1e} at step {step}")]
    LeakAbort { step: usize, leak: f64, threshold: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 3 for validation problems, 4 for numerical aborts.
    /// Tolerance failures (2) are not errors and are reported by the harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } | Error::LeakAbort { .. } => 4,
            _ => 3,
        }
    }
}
