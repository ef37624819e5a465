use thiserror::Error;

/// Error type shared by all library modules.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is missing, malformed or out of range.
    #[error("config error: {0}")]
    Config(String),

    /// An iterative solver ran out of iterations.
    #[error("convergence failure after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    /// A dense linear-algebra kernel failed (singular matrix, Jacobi cap, ...).
    #[error("solver error: {0}")]
    Solver(String),

    /// The covariance kernel produced an invalid spectrum.
    #[error("kernel validity error: {0}")]
    Kernel(String),

    /// No stable mesh width exists above the configured floor.
    #[error("stability refinement exhausted below h = {floor:.3e} (R3 = {r3:.6e})")]
    RefinementExhausted { r3: f64, floor: f64 },

    /// A sample-level failure, tagged with its origin.
    #[error("sample failure at level {level}, sample {sample}: {source}")]
    Sample {
        level: usize,
        sample: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn at_sample(self, level: usize, sample: u64) -> Self {
        Error::Sample {
            level,
            sample,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the CLI: 2 for configuration problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) => 2,
            Error::Sample { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
