use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A penalty too small for the requested update, such as a local ADMM
    /// subproblem that is not strongly convex.
    #[error("stepsize rho = {rho} for component {component} is not certified: {reason}")]
    InfeasibleStepsize {
        component: usize,
        rho: f64,
        reason: String,
    },

    #[error(
        "staleness bound violated at iteration {iteration}: component {component} \
         uses a gradient {staleness} iterations old (bound {bound})"
    )]
    StalenessViolation {
        iteration: usize,
        component: usize,
        staleness: usize,
        bound: usize,
    },

    #[error("component {0} has no exact local solver")]
    NoLocalSolver(usize),

    #[error("csv output failed: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Csv(err.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
