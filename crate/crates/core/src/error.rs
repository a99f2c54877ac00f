use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),

    #[error("NonPositiveDepth: joint {joint} has z = {z} mm")]
    NonPositiveDepth { joint: usize, z: f64 },

    #[error("DegenerateInput: {0}")]
    DegenerateInput(String),

    #[error("DegenerateConfiguration: {0}")]
    DegenerateConfiguration(String),

    #[error("ZeroLengthPart: part ({0}, {1}) has zero groundtruth length")]
    ZeroLengthPart(usize, usize),

    #[error("ConfigError: {0}")]
    Config(String),

    #[error("NonFiniteLoss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("InvalidSkeleton: {0}")]
    InvalidSkeleton(String),

    #[error("Format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_mismatch(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
