use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum InspectError {
    #[error(transparent)]
    Core(#[from] repodedup_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("run metadata: {0}")]
    Metadata(String),

    #[error("invalid rule: {0}")]
    InvalidRule(String),

    #[error("no staged rule with id {0}")]
    UnknownRule(String),

    #[error("no component {0}")]
    UnknownComponent(u32),

    #[error("unknown project {0:?}")]
    UnknownProject(String),

    #[error("{0}")]
    BadRequest(String),

    #[error("no path between {from:?} and {to:?}")]
    NoPath { from: String, to: String },
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl InspectError {
    pub fn status(&self) -> StatusCode {
        match self {
            InspectError::InvalidRule(_)
            | InspectError::UnknownProject(_)
            | InspectError::BadRequest(_) => StatusCode::BAD_REQUEST,
            InspectError::UnknownRule(_)
            | InspectError::UnknownComponent(_)
            | InspectError::NoPath { .. } => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for InspectError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}
