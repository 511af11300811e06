use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quantization level {level} out of range for a {rate}-bit quantizer")]
    LevelOutOfRange { level: usize, rate: u32 },

    #[error("rate {rate} exceeds the table's maximum rate {max}")]
    RateOutOfRange { rate: usize, max: usize },

    #[error("a 0-bit sensor transmits nothing and cannot be quantized")]
    ZeroRate,

    #[error("particle set is empty")]
    EmptyParticles,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite")]
    NotPsd,

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("{count} candidate allocations exceed the enumeration cap {cap}")]
    CapExceeded { count: u128, cap: u128 },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("Newton iteration did not converge in {iters} iterations (decrement {decrement:e})")]
    NotConverged { iters: usize, decrement: f64 },

    #[error("backtracking line search failed to find a descent step")]
    LineSearch,

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("missing required config key `{0}`")]
    MissingKey(String),

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Configuration and input-format problems, as opposed to numerical failures.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::MissingKey(_) | Error::Format(_) | Error::InvalidParameter(_))
    }
}
