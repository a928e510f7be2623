use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed input at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e}, tolerance {tol:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("series did not converge by k = {k_max}: partial sum {partial:.6e}, last term {last_term:.3e}")]
    SeriesDivergence {
        k_max: usize,
        partial: f64,
        last_term: f64,
    },

    #[error("bound violated: {0}")]
    BoundViolation(String),

    #[error("path leaves the simulation box at time {time}")]
    OutsideBox { time: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the failure stems from user input rather than a numerical breakdown.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::Parse { .. } | Error::Config(_) | Error::Io(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
