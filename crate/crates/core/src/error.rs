use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid layer {layer} ({index}): {detail}")]
    Compose {
        index: usize,
        layer: String,
        detail: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid label: {0}")]
    Label(String),

    #[error("undecodable image: {0}")]
    Undecodable(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("png error: {0}")]
    Png(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}
