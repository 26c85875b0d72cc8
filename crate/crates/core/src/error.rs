use std::path::PathBuf;

/// Errors raised by the allocation laboratory.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("number of bins must be positive")]
    NoBins,
    #[error("bin {bin} out of range for {n} bins")]
    BinOutOfRange { bin: usize, n: usize },
    #[error("invalid weight {0}: weights must be finite and nonnegative")]
    InvalidWeight(f64),
    #[error("weight {0} is not an integer; exact mode only accepts integral weights")]
    NonIntegralWeight(f64),
    #[error("quantile {delta} times n = {n} is not an integer")]
    QuantileNotIntegral { delta: f64, n: usize },
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid probability vector: {0}")]
    InvalidVector(String),
    #[error("condition C1 does not hold for the supplied vector (delta={delta}, eps={eps})")]
    PreconditionC1 { delta: f64, eps: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("moment generating function diverges at z={z} for {dist}")]
    MgfDivergent { dist: String, z: f64 },
    #[error("graph: {0}")]
    Graph(String),
    #[error("exact conductance limited to n <= {max}, got n = {n}; use conductance_bounds")]
    GraphTooLarge { n: usize, max: usize },
    #[error("config: {0}")]
    Config(String),
    #[error("scope: {0}")]
    Scope(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("table: {0}")]
    Table(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
