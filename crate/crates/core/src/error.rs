use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {detail}")]
    ShapeMismatch { context: String, detail: String },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("placeholder `{0}` is not bound")]
    UnboundPlaceholder(String),

    #[error("non-finite value produced by node {node} ({op})")]
    NonFinite { node: usize, op: String },

    #[error("loss node must be scalar-valued, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("tape already consumed by a previous backward pass")]
    GraphConsumed,

    #[error("gradient reversal requires lambda >= 0, got {0}")]
    NegativeLambda(f64),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("invalid label {label} for {classes} classes")]
    InvalidLabel { label: i64, classes: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("variant mismatch: model is `{model}`, training config expects `{train}`")]
    VariantMismatch { model: String, train: String },

    #[error("missing labels: {0}")]
    MissingLabels(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("bad IDX data: {0}")]
    Idx(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("incomplete block design: {0}")]
    IncompleteBlocks(String),

    #[error("no usable patch images in {0}")]
    NoPatches(PathBuf),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            detail: detail.into(),
        }
    }
}
