use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;

use crate::api::ErrorBody;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    NotFound(String),
    #[error("missing or wrong session token")]
    Forbidden,
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Forbidden => StatusCode::FORBIDDEN,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Forbidden => "forbidden",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Unprocessable(_) => "data",
            ServiceError::Internal(_) => "internal",
        }
    }
}

impl From<satc_core::Error> for ServiceError {
    fn from(e: satc_core::Error) -> Self {
        use satc_core::Error as E;
        match e {
            E::Config(_) | E::InvalidId(_) | E::Precondition(_) => ServiceError::BadRequest(e.to_string()),
            E::Protocol(_) => ServiceError::Conflict(e.to_string()),
            E::UnknownClass(_)
            | E::UnknownDocument(_)
            | E::DataConsistency(_)
            | E::InvalidTable(_)
            | E::Parse { .. } => ServiceError::Unprocessable(e.to_string()),
            E::Degenerate(_) => ServiceError::Unprocessable(e.to_string()),
            E::Io { .. } | E::Serialize(_) => ServiceError::Internal(e.to_string()),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if let ServiceError::Internal(msg) = &self {
            tracing::error!("{msg}");
        }
        let body = ErrorBody {
            error: self.to_string(),
            kind: self.kind().to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}
