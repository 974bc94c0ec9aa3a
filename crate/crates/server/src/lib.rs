//! HTTP side of the system: the model server hosting both classifiers and
//! the gateway that fronts one or more model servers and the browser UI.
//!
//! Both speak JSON over HTTP/1.1. Errors are always `{"code", "message"}`
//! objects (the gateway adds `backend_id` where relevant).

pub mod gateway;
pub mod model_server;

use std::path::PathBuf;

use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gateway::{gateway_router, serve_gateway, BackendConfig, Gateway, GatewayConfig};
pub use model_server::{model_router, serve_model, ModelFileInfo, ModelService, Reply, ServerConfig, ServerInfo};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_id: Option<String>,
}

impl ErrorBody {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        ErrorBody { code: code.to_string(), message: message.into(), backend_id: None }
    }
}

pub(crate) fn json_response(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

pub(crate) fn error_response(status: StatusCode, error: &ErrorBody) -> Response {
    json_response(status, serde_json::to_vec(error).expect("error body serializes"))
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Model { path: PathBuf, source: dialact_core::models::ModelError },
    #[error(transparent)]
    Analysis(#[from] dialact_core::analysis::AnalysisError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server failed: {0}")]
    Serve(std::io::Error),
}

/// Resolves on Ctrl-C; used for graceful shutdown of both servers.
pub(crate) async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
}
