use thiserror::Error;

/// Errors surfaced by the estimation and simulation routines.
///
/// `-inf` log-densities are *not* errors: optimizers and samplers probe
/// infeasible points all the time and need a cheap in-band answer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("parameter on support boundary: {0}")]
    Boundary(String),

    #[error("non-convergence: {message}")]
    NonConvergence {
        message: String,
        /// Best point found before giving up, when one exists.
        best: Option<(f64, f64)>,
    },

    #[error("conditioning failure: {message} (eigenvalues {eigenvalues:?})")]
    Conditioning {
        message: String,
        eigenvalues: [f64; 2],
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Stable machine-readable code, used by the CLI for exit codes and reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Data(_) => "data-error",
            Error::Degenerate(_) => "degenerate-sample",
            Error::Boundary(_) => "boundary",
            Error::NonConvergence { .. } => "non-convergence",
            Error::Conditioning { .. } => "conditioning",
            Error::Internal(_) => "internal",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
