use std::path::PathBuf;

/// Errors raised by the solvers, problem constructors and I/O layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("normalization failed: {0}")]
    Normalization(String),

    #[error("rejection sampler gave up after {attempts} attempts (smoothing width {epsilon:e} too large for the domain?)")]
    RejectionExhausted { attempts: usize, epsilon: f64 },

    #[error("empty data source")]
    EmptyData,

    #[error("kernel underflow: particle mixture density is {value:e} at y = {y:?}")]
    KernelUnderflow { y: Vec<f64>, value: f64 },

    #[error("potential table is degenerate: {0}")]
    DegeneratePotentials(String),

    #[error("support mismatch in the discretized EM update at data bin {bin}")]
    SupportMismatch { bin: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("config error for key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("malformed image at byte {offset}: {reason}")]
    MalformedImage { offset: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
