//! Request and response bodies. Every body is JSON.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use driftline_core::nn::HeadSpec;
use driftline_core::orchestrator::{Event, HyperparameterEdit, LogRecord};
use driftline_core::strategies::StrategySpec;
use driftline_core::{Error, RawSample};

/// One log record as pushed on `/events`. `type` and `payload` are the
/// event itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiEvent {
    pub sequence: u64,
    pub timestamp: DateTime<Utc>,
    pub position: u64,
    #[serde(flatten)]
    pub event: Event,
}

impl From<&LogRecord> for ApiEvent {
    fn from(r: &LogRecord) -> Self {
        Self {
            sequence: r.seq,
            timestamp: r.timestamp,
            position: r.position,
            event: r.event.clone(),
        }
    }
}

/// `POST /ingest`: a single sample or `{"samples": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IngestRequest {
    Batch { samples: Vec<RawSample> },
    One(RawSample),
}

impl IngestRequest {
    pub fn into_samples(self) -> Vec<RawSample> {
        match self {
            IngestRequest::Batch { samples } => samples,
            IngestRequest::One(s) => vec![s],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub ingested: usize,
    pub position: u64,
    pub last_event: u64,
}

/// `PATCH /hyperparameters`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditRequest {
    pub edits: Vec<HyperparameterEdit>,
}

/// `POST /targets`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetRequest {
    pub target: String,
    #[serde(default)]
    pub head: Option<HeadSpec>,
    #[serde(default)]
    pub strategy: Option<StrategySpec>,
    /// Samples the new head is fitted on; may be empty.
    #[serde(default)]
    pub warmup: Vec<RawSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetResponse {
    pub target: String,
    pub version: u64,
}

/// `POST /rollback`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RollbackRequest {
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.into(),
                message: message.into(),
            },
        }
    }

    pub fn unavailable() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "unavailable", "command queue is closed")
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, kind) = match &e {
            Error::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::Validation(_)
            | Error::Argument(_)
            | Error::Shape(_)
            | Error::Ingest(_)
            | Error::MissingTarget { .. }
            | Error::Format(_)
            | Error::Json(_) => (StatusCode::BAD_REQUEST, "invalid"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// Parses a JSON body; the message names the offending field when serde can.
pub fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed", e.to_string()))
}
