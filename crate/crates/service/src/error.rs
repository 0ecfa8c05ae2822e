use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    BadConfig,
    BadRequest,
    UnknownSession,
    EmptyBatch,
    DuplicateDocument,
    OutOfOrderBatch,
    EmptySession,
    UnknownNode,
    NotInCut,
    NotSiblingGroup,
    LeafSplit,
    EmptyQueryVector,
    UnknownDocument,
    ViewportTooSmall,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        use ErrorCode::*;
        match self {
            BadConfig | BadRequest | EmptyBatch | EmptyQueryVector | ViewportTooSmall => StatusCode::BAD_REQUEST,
            UnknownSession | UnknownNode | UnknownDocument => StatusCode::NOT_FOUND,
            DuplicateDocument | OutOfOrderBatch | EmptySession | NotInCut | NotSiblingGroup | LeafSplit => {
                StatusCode::CONFLICT
            }
            Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Error body `{code, message}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ServiceError {
    pub code: ErrorCode,
    pub message: String,
}

impl ServiceError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<topicflow::Error> for ServiceError {
    fn from(e: topicflow::Error) -> Self {
        use topicflow::Error as E;
        let code = match &e {
            E::UnknownNode(_) => ErrorCode::UnknownNode,
            E::UnknownDocument(_) => ErrorCode::UnknownDocument,
            E::ViewportTooSmall(_) => ErrorCode::ViewportTooSmall,
            E::BadParams(_) => ErrorCode::BadConfig,
            E::DuplicateId(_) => ErrorCode::DuplicateDocument,
            E::EmptyVocabulary => ErrorCode::EmptyBatch,
            E::InvalidCut(_) => ErrorCode::NotInCut,
            _ => ErrorCode::Internal,
        };
        Self::new(code, e.to_string())
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;
