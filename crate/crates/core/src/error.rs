use thiserror::Error;

use crate::domain::ConstraintViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible assignment: {0}")]
    Constraint(#[from] ConstraintViolation),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value during training ({context})")]
    NonFinite { context: String },

    #[error("action {action} is masked in the current state")]
    MaskedAction { action: usize },

    #[error("episode is terminal; no container left to plan")]
    EpisodeFinished,

    #[error("episode incomplete after {decided} decisions")]
    EpisodeIncomplete { decided: usize },

    #[error("instance too large for exhaustive search: {containers} containers (limit {limit})")]
    InstanceTooLarge { containers: usize, limit: usize },

    #[error("flow of {requested} units unreachable; only {achieved} routed")]
    FlowInfeasible { requested: i64, achieved: i64 },

    #[error("no trained policy available for method {0}")]
    MissingPolicy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
