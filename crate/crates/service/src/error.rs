use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use elicit_core::{ApiError, Error};

/// A module error on its way to becoming an HTTP response.
#[derive(Debug)]
pub struct HttpError(pub Error);

impl From<Error> for HttpError {
    fn from(e: Error) -> Self {
        HttpError(e)
    }
}

pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::Stage(_) => StatusCode::CONFLICT,
        Error::Auth(_) => StatusCode::UNAUTHORIZED,
        Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        let body = serde_json::to_vec(&ApiError::from(&self.0)).expect("error serializes");
        (status_for(&self.0), [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

/// Error returned by [`crate::start`] and [`crate::serve`].
#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    Startup(String),
    #[error(transparent)]
    Store(#[from] Error),
}

impl ServiceError {
    pub fn to_api_error(&self) -> ApiError {
        match self {
            ServiceError::Startup(m) => ApiError { code: "StartupError".into(), message: m.clone(), detail: None },
            ServiceError::Store(e) => ApiError::from(e),
        }
    }
}
