use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e} < -{tol:e})")]
    NotPsd { min_eigenvalue: f64, tol: f64 },

    #[error("{what} must be positive definite at step {step} (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite {
        what: &'static str,
        step: usize,
        min_eigenvalue: f64,
    },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("descriptor step {step} is inconsistent: residual {residual:e} (C x + f not in range of F)")]
    InconsistentStep { step: usize, residual: f64 },

    #[error("direction vector must be nonzero")]
    ZeroDirection,

    #[error("measurements are infeasible for the uncertainty set at step {step} (beta = {beta:e})")]
    InfeasibleData { step: usize, beta: f64 },

    #[error("rank condition violated at step {step}: rank {rank} < {dim}")]
    RankDeficient { step: usize, rank: usize, dim: usize },

    #[error("innovation matrix is numerically singular at step {step}")]
    SingularInnovation { step: usize },

    #[error("{what} must be unit (identity) weights at step {step}")]
    NonUnitWeights { what: &'static str, step: usize },

    #[error("{family} has no entry for step {step}")]
    StepOutOfRange { family: &'static str, step: usize },
}

impl Error {
    /// Machine-readable code printed by the command-line driver.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotSquare { .. } | Error::DimensionMismatch { .. } => "E_DIM",
            Error::NotSymmetric { .. } => "E_SYM",
            Error::NotPsd { .. } | Error::NotPositiveDefinite { .. } => "E_PSD",
            Error::InconsistentStep { .. } => "E_STEP",
            Error::ZeroDirection => "E_DIRECTION",
            Error::InfeasibleData { .. } => "E_INFEASIBLE",
            Error::RankDeficient { .. } => "E_RANK",
            Error::SingularInnovation { .. } => "E_SINGULAR",
            Error::NonUnitWeights { .. } => "E_WEIGHTS",
            Error::StepOutOfRange { .. } => "E_RANGE",
        }
    }

    pub(crate) fn dim(what: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
