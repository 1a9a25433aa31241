use thiserror::Error;

/// Errors raised across the solver stack.
#[derive(Debug, Error)]
pub enum CmgError {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid game spec field `{field}`: {reason}")]
    Spec { field: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("simplex stalled after {0} pivots")]
    PivotLimit(usize),

    #[error("constraint generation did not converge after {rounds} rounds (last gap {gap:e})")]
    IterationLimit { rounds: usize, gap: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at iteration {iteration}: loss {loss}")]
    Training { iteration: usize, loss: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CmgError {
    pub(crate) fn spec(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CmgError::Spec {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CmgError>;
