use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// `pivot` is the zero-based index of the first pivot that failed.
    #[error("covariance matrix is not positive definite (failing pivot {pivot}, value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate pivot: {0}")]
    DegeneratePivot(String),

    #[error(
        "vertex enumeration needs {candidates} candidate bases, above the budget of {budget}; \
         full enumeration is only required by the refinement step"
    )]
    BudgetExceeded { candidates: u128, budget: u128 },

    #[error("linear program {index} failed: {message}")]
    Lp { index: usize, message: String },

    #[error("did not converge: {0}")]
    Convergence(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// True for errors caused by the numerical content of the inputs rather
    /// than their shape.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::Argument(_) | Error::Dimension(_))
    }
}
