use thiserror::Error;

pub type Result<T> = std::result::Result<T, GradError>;

#[derive(Debug, Error)]
pub enum GradError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("zero-extent dimension in shape {shape:?}")]
    ZeroExtent { shape: Vec<usize> },

    #[error("label row {row} is not one-hot")]
    NotOneHot { row: usize },

    #[error("backward already ran on this graph")]
    BackwardTwice,

    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },

    #[error("non-finite gradient in parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GradError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        GradError::ShapeMismatch { op, detail: detail.into() }
    }
}
