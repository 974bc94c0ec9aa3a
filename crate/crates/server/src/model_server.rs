//! The model server: both classifiers loaded once, shared read-only by every
//! request. Request content is never logged; only sizes, status and latency.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Body;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use dialact_core::analysis::{AnalysisError, AnalysisRequest, Analyzer, API_VERSION, DEFAULT_TOP_K};
use dialact_core::corpus::tag_set;
use dialact_core::models::{decode_model, LoadedModel, ModelError, ModelKind};
use dialact_core::NUM_TAGS;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{error_response, json_response, shutdown_signal, ErrorBody, ServerError};

pub const DEFAULT_MAX_UTTERANCES: usize = 200;
pub const DEFAULT_MAX_UTTERANCE_CHARS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub no_context_model: PathBuf,
    pub context_model: PathBuf,
    /// Used when a request omits `top_k`.
    pub top_k: usize,
    pub max_utterances: usize,
    pub max_utterance_chars: usize,
}

impl ServerConfig {
    pub fn new(no_context_model: impl Into<PathBuf>, context_model: impl Into<PathBuf>) -> Self {
        ServerConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8081)),
            no_context_model: no_context_model.into(),
            context_model: context_model.into(),
            top_k: DEFAULT_TOP_K,
            max_utterances: DEFAULT_MAX_UTTERANCES,
            max_utterance_chars: DEFAULT_MAX_UTTERANCE_CHARS,
        }
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        if self.max_utterances == 0 || self.max_utterance_chars == 0 {
            return Err(ServerError::Config("request limits must be positive".into()));
        }
        if !(1..=NUM_TAGS).contains(&self.top_k) {
            return Err(ServerError::Config(format!("top_k must be between 1 and {NUM_TAGS}, got {}", self.top_k)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFileInfo {
    pub id: String,
    pub kind: ModelKind,
    /// SHA-256 of the `.dwm` file as read from disk.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagInfo {
    pub tag: String,
    pub name: String,
}

/// Body of `GET /info`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerInfo {
    pub api_version: String,
    pub version: String,
    pub no_context_model: ModelFileInfo,
    pub context_model: ModelFileInfo,
    pub context_size: usize,
    pub max_len: usize,
    pub vocabulary_size: usize,
    pub tags: Vec<TagInfo>,
    pub default_top_k: usize,
    pub max_utterances: usize,
    pub max_utterance_chars: usize,
}

/// Status and JSON body of an `/analyze` call, independent of the transport.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: StatusCode,
    pub body: Vec<u8>,
}

impl Reply {
    fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        let body = serde_json::to_vec(&ErrorBody::new(code, message)).expect("error body serializes");
        Reply { status, body }
    }
}

/// Wire form of a request; `top_k` falls back to the server default.
#[derive(Debug, Deserialize)]
struct WireRequest {
    #[serde(default)]
    api_version: Option<String>,
    utterances: Vec<String>,
    #[serde(default)]
    top_k: Option<usize>,
}

#[derive(Debug)]
pub struct ModelService {
    analyzer: Analyzer,
    info: ServerInfo,
}

fn read_model(path: &Path) -> Result<(LoadedModel, String), ServerError> {
    let bytes = std::fs::read(path).map_err(|source| ServerError::Io { path: path.to_path_buf(), source })?;
    let sha256 = hex::encode(Sha256::digest(&bytes));
    let model = decode_model(&bytes).map_err(|source| ServerError::Model { path: path.to_path_buf(), source })?;
    Ok((model, sha256))
}

impl ModelService {
    /// Loads and cross-checks both model files. Any failure is fatal.
    pub fn load(config: &ServerConfig) -> Result<Self, ServerError> {
        config.validate()?;
        let wrong_kind = |path: &Path, expected, found| ServerError::Model {
            path: path.to_path_buf(),
            source: ModelError::WrongKind { expected, found },
        };
        let (no_context, no_context_sha) = match read_model(&config.no_context_model)? {
            (LoadedModel::NoContext(m), sha) => (Arc::new(m), sha),
            (other, _) => return Err(wrong_kind(&config.no_context_model, ModelKind::NoContext, other.kind())),
        };
        let (context, context_sha) = match read_model(&config.context_model)? {
            (LoadedModel::Context(m), sha) => (Arc::new(m), sha),
            (other, _) => return Err(wrong_kind(&config.context_model, ModelKind::Context, other.kind())),
        };
        let analyzer = Analyzer::new(no_context, context)?;
        let info = ServerInfo {
            api_version: API_VERSION.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            no_context_model: ModelFileInfo {
                id: analyzer.no_context().model_id(),
                kind: ModelKind::NoContext,
                sha256: no_context_sha,
            },
            context_model: ModelFileInfo {
                id: analyzer.context().model_id(),
                kind: ModelKind::Context,
                sha256: context_sha,
            },
            context_size: analyzer.context_size(),
            max_len: analyzer.no_context().max_len(),
            vocabulary_size: analyzer.no_context().vocab().len(),
            tags: tag_set()
                .tags()
                .iter()
                .map(|t| TagInfo { tag: t.mnemonic.clone(), name: t.display_name.clone() })
                .collect(),
            default_top_k: config.top_k,
            max_utterances: config.max_utterances,
            max_utterance_chars: config.max_utterance_chars,
        };
        Ok(ModelService { analyzer, info })
    }

    pub fn info(&self) -> &ServerInfo {
        &self.info
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    /// Largest request body worth reading: every utterance at the character
    /// limit in 4-byte UTF-8, plus JSON overhead.
    fn body_limit(&self) -> usize {
        self.info.max_utterances * (self.info.max_utterance_chars * 4 + 16) + 4096
    }

    /// Full `/analyze` handling on a raw body. The CLI's offline mode calls
    /// this too, so both paths emit identical bytes.
    pub fn analyze_body(&self, body: &[u8]) -> Reply {
        let wire: WireRequest = match serde_json::from_slice(body) {
            Ok(w) => w,
            Err(e) if e.is_data() => return Reply::error(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()),
            Err(e) => return Reply::error(StatusCode::BAD_REQUEST, "malformed_json", e.to_string()),
        };
        if wire.utterances.len() > self.info.max_utterances {
            return Reply::error(
                StatusCode::PAYLOAD_TOO_LARGE,
                "too_many_utterances",
                format!("{} utterances exceed the limit of {}", wire.utterances.len(), self.info.max_utterances),
            );
        }
        if let Some(i) = wire.utterances.iter().position(|u| u.chars().count() > self.info.max_utterance_chars) {
            return Reply::error(
                StatusCode::PAYLOAD_TOO_LARGE,
                "utterance_too_long",
                format!("utterance {} exceeds {} characters", i + 1, self.info.max_utterance_chars),
            );
        }
        let request = AnalysisRequest {
            api_version: wire.api_version.unwrap_or_else(|| API_VERSION.to_string()),
            utterances: wire.utterances,
            top_k: wire.top_k.unwrap_or(self.info.default_top_k),
        };
        match self.analyzer.analyze(&request) {
            Ok(result) => {
                Reply { status: StatusCode::OK, body: serde_json::to_vec(&result).expect("result serializes") }
            }
            Err(
                e @ (AnalysisError::EmptyRequest
                | AnalysisError::UnsupportedApiVersion(_)
                | AnalysisError::InvalidTopK(_)),
            ) => Reply::error(StatusCode::BAD_REQUEST, e.code(), e.to_string()),
            Err(e) => {
                tracing::error!(code = e.code(), "analysis failed");
                Reply::error(StatusCode::INTERNAL_SERVER_ERROR, e.code(), "internal model error")
            }
        }
    }
}

pub fn model_router(service: Arc<ModelService>) -> Router {
    Router::new()
        .route("/analyze", post(analyze))
        .route("/health", get(health))
        .route("/info", get(info))
        .with_state(service)
}

async fn analyze(State(service): State<Arc<ModelService>>, body: Body) -> Response {
    let started = Instant::now();
    let bytes = match axum::body::to_bytes(body, service.body_limit()).await {
        Ok(b) => b,
        Err(_) => {
            let e = ErrorBody::new("payload_too_large", "request body exceeds the configured limits");
            return error_response(StatusCode::PAYLOAD_TOO_LARGE, &e);
        }
    };
    let request_bytes = bytes.len();
    let worker = service.clone();
    let reply = match tokio::task::spawn_blocking(move || worker.analyze_body(&bytes)).await {
        Ok(r) => r,
        Err(_) => Reply::error(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", "analysis task failed"),
    };
    tracing::info!(
        status = reply.status.as_u16(),
        request_bytes,
        response_bytes = reply.body.len(),
        elapsed_ms = started.elapsed().as_millis() as u64,
        "analyze"
    );
    json_response(reply.status, reply.body)
}

async fn health() -> Response {
    json_response(StatusCode::OK, br#"{"status":"ok","models_loaded":2}"#.to_vec())
}

async fn info(State(service): State<Arc<ModelService>>) -> Response {
    json_response(StatusCode::OK, serde_json::to_vec(service.info()).expect("info serializes"))
}

/// Loads the models, binds, and serves until Ctrl-C. Returns an error
/// before binding when either model is unusable.
pub async fn serve_model(config: ServerConfig) -> Result<(), ServerError> {
    let service = Arc::new(ModelService::load(&config)?);
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .map_err(|source| ServerError::Bind { addr: config.bind.to_string(), source })?;
    tracing::info!(
        addr = %listener.local_addr().map_err(ServerError::Serve)?,
        no_context = %service.info().no_context_model.id,
        context = %service.info().context_model.id,
        "model server listening"
    );
    axum::serve(listener, model_router(service))
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(ServerError::Serve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_zero_limits() {
        let mut config = ServerConfig::new("a.dwm", "b.dwm");
        assert!(config.validate().is_ok());
        config.max_utterances = 0;
        assert!(matches!(config.validate(), Err(ServerError::Config(_))));
        let config = ServerConfig { top_k: 43, ..ServerConfig::new("a.dwm", "b.dwm") };
        assert!(config.validate().is_err());
    }

    #[test]
    fn missing_file_fails_load() {
        let err = ModelService::load(&ServerConfig::new("/nonexistent/a.dwm", "/nonexistent/b.dwm")).unwrap_err();
        assert!(matches!(err, ServerError::Io { .. }), "{err}");
    }

    #[test]
    fn wire_request_defaults() {
        let w: WireRequest = serde_json::from_str(r#"{"utterances":["hi"]}"#).unwrap();
        assert_eq!(w.api_version, None);
        assert_eq!(w.top_k, None);
        assert!(serde_json::from_str::<WireRequest>(r#"{"utterances":"hi"}"#).unwrap_err().is_data());
        assert!(serde_json::from_str::<WireRequest>(r#"{"utterances":["#).unwrap_err().is_eof());
    }
}
