use thiserror::Error;

/// Errors surfaced by channel synthesis, precoder evaluation, and solvers.
#[derive(Debug, Error)]
pub enum HiaError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("message index {k} has an empty eavesdropper set")]
    EmptyEavesdropperSet { k: usize },
}

pub type Result<T> = std::result::Result<T, HiaError>;
