use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Parameter(String),
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("invalid judgement: {0}")]
    Judgement(String),
    #[error("targets outside family support: {0}")]
    Support(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("invalid weights: {0}")]
    Weight(String),
    #[error("transform rejected: {0}")]
    Transform(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("design error: {0}")]
    Design(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage error: {0}")]
    Stage(String),
    #[error("not authorised: {0}")]
    Auth(String),
    #[error("record error: {0}")]
    Record(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable error code shared by the CLI and the HTTP service.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "ParameterError",
            Error::Domain(_) => "DomainError",
            Error::Judgement(_) => "JudgementError",
            Error::Support(_) => "SupportError",
            Error::Fit(_) => "FitError",
            Error::Weight(_) => "WeightError",
            Error::Transform(_) => "TransformError",
            Error::Model(_) => "ModelError",
            Error::Design(_) => "DesignError",
            Error::Config(_) => "ConfigError",
            Error::Stage(_) => "StageError",
            Error::Auth(_) => "AuthError",
            Error::Record(_) => "RecordError",
            Error::Schema(_) => "SchemaError",
            Error::NotFound(_) => "NotFoundError",
            Error::Io(_) => "IoError",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Error::Parameter(m)
            | Error::Domain(m)
            | Error::Judgement(m)
            | Error::Support(m)
            | Error::Fit(m)
            | Error::Weight(m)
            | Error::Transform(m)
            | Error::Model(m)
            | Error::Design(m)
            | Error::Config(m)
            | Error::Stage(m)
            | Error::Auth(m)
            | Error::Record(m)
            | Error::Schema(m)
            | Error::NotFound(m)
            | Error::Io(m) => m,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Wire form of an [`Error`], used on CLI stderr and in HTTP error bodies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl From<&Error> for ApiError {
    fn from(e: &Error) -> Self {
        ApiError { code: e.code().to_string(), message: e.message().to_string(), detail: Some(e.to_string()) }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::from(&e)
    }
}
