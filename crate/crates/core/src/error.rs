use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration blew up at step {step}{}", trajectory.map(|j| format!(" of trajectory {j}")).unwrap_or_default())]
    IntegrationBlowup {
        step: usize,
        trajectory: Option<usize>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("ill-conditioned Gram matrix (cond ~ {cond:.3e}); use fewer or better separated eigenvalues")]
    IllConditioned { cond: f64 },

    #[error("overflow propagating eigenvalue {re}{im:+}i over the sample window")]
    Overflow { re: f64, im: f64 },

    #[error("branch-cut ambiguity: {0}")]
    BranchCut(String),

    #[error("undefined error metric: reference sequence is identically zero")]
    ZeroDenominator,

    #[error("quadratic program is primal infeasible")]
    Infeasible,

    #[error("quadratic program is unbounded below")]
    Unbounded,

    #[error("closed loop aborted after {0} consecutive solver failures")]
    SolverFailures(usize),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Missing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn dims(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Wraps the error with a pipeline stage label.
    pub fn at(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
