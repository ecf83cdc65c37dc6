use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },

    #[error("optimization diverged: {0}")]
    Divergence(String),

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("degenerate curvature at observation {index}: a''-infimum {value:e}")]
    DegenerateCurvature { index: usize, value: f64 },

    #[error("log of zero probability: {0}")]
    LogOfZero(String),

    #[error("unreliable importance sampling: effective sample size {ess:.1} below required {required:.1}")]
    Reliability { ess: f64, required: f64 },

    #[error("unsupported: {0}")]
    Capability(String),

    #[error("integration box too small: boundary log-mass {boundary_log_ratio:.2} relative to peak; try halfwidth {suggested_halfwidth}")]
    BoxTooSmall {
        boundary_log_ratio: f64,
        suggested_halfwidth: f64,
    },

    #[error("quadrature not converged: {nodes} nodes per dimension, last change {change:e}")]
    Quadrature { nodes: usize, change: f64 },

    #[error("support error: {0}")]
    Support(String),

    #[error("insufficient replicates: need at least {required}, got {got}")]
    InsufficientReplicates { required: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 for configuration problems, 3 for numerical or
    /// reliability failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Unknown { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::InsufficientReplicates { .. }
            | Error::Capability(_) => 2,
            _ => 3,
        }
    }

    /// True for errors that mark a single replicate as failed rather than
    /// aborting a whole experiment.
    pub fn is_replicate_failure(&self) -> bool {
        !matches!(self.exit_code(), 2)
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
