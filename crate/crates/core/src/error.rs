use std::path::PathBuf;

use thiserror::Error;

use crate::approx::ApproxPolynomial;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Remez iteration hit its iteration cap. Carries the last iterate so the
    /// caller can inspect how close it got.
    #[error(
        "remez exchange did not converge after {iterations} iterations \
         (relative level gap {relative_gap:.3e})"
    )]
    ConvergenceFailure {
        iterations: usize,
        relative_gap: f64,
        last: Box<ApproxPolynomial>,
    },

    #[error("approximation coefficient a_{index} = {value:e} exceeds the bound {bound:e}")]
    CoefficientBound {
        index: usize,
        value: f64,
        bound: f64,
    },

    /// Rescaling interval [0, a] with a >= 1 does not shrink the base interval.
    #[error("rescaled interval [0, {upper}] is not contained in [0, 1)")]
    DomainWarning { upper: f64 },

    #[error("falling factorial ({count})_{order} overflows")]
    Overflow { count: u64, order: usize },

    #[error("enumeration needs {outcomes:e} outcomes, limit is {limit:e}")]
    TooLarge { outcomes: f64, limit: f64 },

    #[error("experiment cost {cost:e} exceeds budget {budget:e}")]
    BudgetExceeded { cost: f64, budget: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
