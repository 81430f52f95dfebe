use thiserror::Error;

pub type Result<T> = std::result::Result<T, GradmapError>;

#[derive(Debug, Error)]
pub enum GradmapError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid frame: smallest singular value {smallest_singular:e} is below 1e-10")]
    InvalidFrame { smallest_singular: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(
        "scale cap exceeded: |t|*||xi|| = {scale:e} > {cap:e}; use weight_filtration_limit for the exact limit"
    )]
    ScaleCap { scale: f64, cap: f64 },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GradmapError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GradmapError::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        GradmapError::Numerical(msg.into())
    }
}
