use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },
    #[error("singular input: eigenvalue {eigenvalue:.3e}")]
    Singular { eigenvalue: f64 },
    #[error("state is not faithful: minimum eigenvalue {min_eigenvalue:.3e}")]
    NotFaithful { min_eigenvalue: f64 },
    #[error("map is not CPTP: {0}")]
    NotCptp(String),
    #[error("index {index} out of range for {len} probes")]
    Index { index: usize, len: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("possibly non-primitive map: {0}")]
    NonPrimitive(String),
    #[error("non-entanglement condition violated (residual {residual:.3e})")]
    NeViolated { residual: f64 },
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("branch budget exceeded: {branches} > {budget}")]
    BranchBudget { branches: f64, budget: usize },
    #[error("optimizer stagnated: {0}")]
    Optimizer(String),
}

impl Error {
    /// Failures caused by the model not meeting a structural assumption.
    pub fn is_assumption(&self) -> bool {
        matches!(self, Error::NonPrimitive(_) | Error::NeViolated { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
