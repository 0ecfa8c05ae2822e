use crate::model::ValidationReport;

/// Errors produced by the topicflow pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid tree cut: {0}")]
    InvalidCut(String),
    #[error("cut enumeration limit exceeded: {count} cuts > limit {limit}")]
    LimitExceeded { count: u128, limit: u128 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid topic tree: {0}")]
    InvalidTree(ValidationReport),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("unknown document {0}")]
    UnknownDocument(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate document id {0}")]
    DuplicateId(String),
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("no aligned documents between the two cuts")]
    EmptyAlignment,
    #[error("cost matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("viewport too small: {0}")]
    ViewportTooSmall(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
