use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("token id {id} outside the {partition} partition")]
    Partition { id: u32, partition: &'static str },

    #[error("data error in entry `{entry}`: {reason}")]
    Data { entry: String, reason: String },

    #[error("unsupported character {0:?}")]
    UnsupportedChar(char),

    #[error("non-finite loss at step {step} (batch items {items:?})")]
    NonFiniteLoss { step: usize, items: Vec<String> },

    #[error("client error: {0}")]
    Client(String),

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
