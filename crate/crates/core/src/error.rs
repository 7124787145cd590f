use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("state index {state} out of range (num_states = {num_states})")]
    StateOutOfRange { state: usize, num_states: usize },

    #[error("action index {action} out of range (num_actions = {num_actions})")]
    ActionOutOfRange { action: usize, num_actions: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown column: {0}")]
    UnknownColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
