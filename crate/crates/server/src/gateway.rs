//! The gateway: serves the UI and relays `/api/analyze` to the first healthy
//! model server in priority order. Analysis payloads pass through untouched.
//!
//! Config file (TOML):
//!
//! ```toml
//! timeout_secs = 30          # per forwarded request
//! health_interval_secs = 10  # background /health polling
//!
//! [[backends]]
//! id = "primary"
//! url = "http://127.0.0.1:8081"
//! priority = 0               # lower goes first; ties keep file order
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::extract::State;
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tower_http::services::{ServeDir, ServeFile};

use crate::{error_response, json_response, shutdown_signal, ErrorBody, ServerError};

pub const SERVED_BY: &str = "x-served-by";
const MAX_FORWARD_BODY: usize = 16 * 1024 * 1024;
const HEALTH_TIMEOUT: Duration = Duration::from_secs(5);

fn default_timeout() -> f64 {
    30.0
}

fn default_health_interval() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub id: String,
    pub url: String,
    #[serde(default)]
    pub priority: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_health_interval")]
    pub health_interval_secs: f64,
    #[serde(default)]
    pub backends: Vec<BackendConfig>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            timeout_secs: default_timeout(),
            health_interval_secs: default_health_interval(),
            backends: Vec::new(),
        }
    }
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServerError> {
        toml::from_str(text).map_err(|e| ServerError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ServerError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ServerError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        if self.backends.is_empty() {
            return Err(ServerError::Config("no model server backends configured".into()));
        }
        for (name, secs) in [("timeout_secs", self.timeout_secs), ("health_interval_secs", self.health_interval_secs)] {
            if !(secs.is_finite() && secs > 0.0) {
                return Err(ServerError::Config(format!("{name} must be positive, got {secs}")));
            }
        }
        for (i, b) in self.backends.iter().enumerate() {
            if self.backends[..i].iter().any(|other| other.id == b.id) {
                return Err(ServerError::Config(format!("duplicate backend id {:?}", b.id)));
            }
            let url =
                reqwest::Url::parse(&b.url).map_err(|e| ServerError::Config(format!("backend {:?}: {e}", b.id)))?;
            if url.scheme() != "http" && url.scheme() != "https" {
                return Err(ServerError::Config(format!("backend {:?}: unsupported scheme {}", b.id, url.scheme())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Health {
    Unknown,
    Ok,
    Unhealthy,
}

/// One entry of `GET /api/backends`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendStatus {
    pub id: String,
    pub url: String,
    pub priority: i64,
    pub status: Health,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<serde_json::Value>,
}

#[derive(Debug)]
pub struct Gateway {
    /// Sorted by priority, stable in file order.
    backends: Vec<BackendConfig>,
    health: RwLock<Vec<Health>>,
    client: reqwest::Client,
    timeout: Duration,
    health_interval: Duration,
    assets_dir: Option<PathBuf>,
}

enum Attempt {
    Relayed(Response),
    Unreachable(String),
    TimedOut,
}

impl Gateway {
    /// Refuses configurations without backends.
    pub fn new(config: GatewayConfig, assets_dir: Option<PathBuf>) -> Result<Self, ServerError> {
        config.validate()?;
        let mut backends = config.backends;
        backends.sort_by_key(|b| b.priority);
        for b in &mut backends {
            b.url = b.url.trim_end_matches('/').to_string();
        }
        let client = reqwest::Client::builder().build().map_err(|e| ServerError::Config(e.to_string()))?;
        Ok(Gateway {
            health: RwLock::new(vec![Health::Unknown; backends.len()]),
            backends,
            client,
            timeout: Duration::from_secs_f64(config.timeout_secs),
            health_interval: Duration::from_secs_f64(config.health_interval_secs),
            assets_dir,
        })
    }

    pub fn backends(&self) -> &[BackendConfig] {
        &self.backends
    }

    pub fn health_snapshot(&self) -> Vec<Health> {
        self.health.read().expect("health lock").clone()
    }

    fn set_health(&self, index: usize, health: Health) {
        self.health.write().expect("health lock")[index] = health;
    }

    /// Healthy backends first, then unknown, then unhealthy; priority order
    /// within each group. Depends only on the health snapshot.
    pub fn candidate_order(&self) -> Vec<usize> {
        let health = self.health_snapshot();
        let mut order: Vec<usize> = (0..self.backends.len()).collect();
        order.sort_by_key(|&i| match health[i] {
            Health::Ok => 0,
            Health::Unknown => 1,
            Health::Unhealthy => 2,
        });
        order
    }

    async fn probe(&self, index: usize) -> Result<(), String> {
        let url = format!("{}/health", self.backends[index].url);
        let timeout = self.timeout.min(HEALTH_TIMEOUT);
        match self.client.get(url).timeout(timeout).send().await {
            Ok(resp) if resp.status() == StatusCode::OK => Ok(()),
            Ok(resp) => Err(format!("health check returned {}", resp.status())),
            Err(e) => Err(format!("health check failed: {e}")),
        }
    }

    /// Polls every backend once and updates the snapshot.
    pub async fn refresh_health(&self) {
        for i in 0..self.backends.len() {
            let health = if self.probe(i).await.is_ok() { Health::Ok } else { Health::Unhealthy };
            self.set_health(i, health);
        }
    }

    async fn status_of(&self, index: usize) -> BackendStatus {
        let b = &self.backends[index];
        let mut status = BackendStatus {
            id: b.id.clone(),
            url: b.url.clone(),
            priority: b.priority,
            status: Health::Unhealthy,
            error: None,
            info: None,
        };
        if let Err(e) = self.probe(index).await {
            status.error = Some(e);
            self.set_health(index, Health::Unhealthy);
            return status;
        }
        let info = self.client.get(format!("{}/info", b.url)).timeout(self.timeout.min(HEALTH_TIMEOUT)).send().await;
        match info {
            Ok(resp) if resp.status().is_success() => match resp
                .bytes()
                .await
                .map_err(|e| e.to_string())
                .and_then(|b| serde_json::from_slice::<serde_json::Value>(&b).map_err(|e| e.to_string()))
            {
                Ok(v) => {
                    status.status = Health::Ok;
                    status.info = Some(v);
                }
                Err(e) => status.error = Some(format!("invalid /info body: {e}")),
            },
            Ok(resp) => status.error = Some(format!("/info returned {}", resp.status())),
            Err(e) => status.error = Some(format!("/info failed: {e}")),
        }
        self.set_health(index, status.status);
        status
    }

    /// Live status of every backend, in priority order.
    pub async fn backend_statuses(&self) -> Vec<BackendStatus> {
        let mut out = Vec::with_capacity(self.backends.len());
        for i in 0..self.backends.len() {
            out.push(self.status_of(i).await);
        }
        out
    }

    async fn try_backend(&self, index: usize, content_type: Option<&HeaderValue>, body: &[u8]) -> Attempt {
        let b = &self.backends[index];
        let mut request = self.client.post(format!("{}/analyze", b.url)).timeout(self.timeout).body(body.to_vec());
        if let Some(ct) = content_type {
            request = request.header(header::CONTENT_TYPE, ct.clone());
        }
        let resp = match request.send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::TimedOut,
            Err(e) => return Attempt::Unreachable(e.to_string()),
        };
        let status = resp.status();
        let content_type = resp.headers().get(header::CONTENT_TYPE).cloned();
        let bytes = match resp.bytes().await {
            Ok(b) => b,
            Err(e) if e.is_timeout() => return Attempt::TimedOut,
            Err(e) => return Attempt::Unreachable(e.to_string()),
        };
        let mut response = (status, bytes).into_response();
        if let Some(ct) = content_type {
            response.headers_mut().insert(header::CONTENT_TYPE, ct);
        }
        if let Ok(id) = HeaderValue::from_str(&b.id) {
            response.headers_mut().insert(SERVED_BY, id);
        }
        Attempt::Relayed(response)
    }

    /// Forwards an analysis body. Unreachable backends are marked unhealthy
    /// and the next candidate is tried; a timeout ends the request with 504.
    pub async fn forward(&self, content_type: Option<&HeaderValue>, body: &[u8]) -> Response {
        let mut last_failure = None;
        for index in self.candidate_order() {
            let id = &self.backends[index].id;
            match self.try_backend(index, content_type, body).await {
                Attempt::Relayed(response) => {
                    self.set_health(index, Health::Ok);
                    return response;
                }
                Attempt::TimedOut => {
                    tracing::warn!(backend = %id, "backend timed out");
                    let mut e =
                        ErrorBody::new("backend_timeout", format!("backend did not answer within {:?}", self.timeout));
                    e.backend_id = Some(id.clone());
                    return error_response(StatusCode::GATEWAY_TIMEOUT, &e);
                }
                Attempt::Unreachable(reason) => {
                    tracing::warn!(backend = %id, %reason, "backend unreachable");
                    self.set_health(index, Health::Unhealthy);
                    last_failure = Some(index);
                }
            }
        }
        let index = last_failure.expect("at least one backend");
        let mut e = ErrorBody::new("backend_unavailable", "no model server backend is reachable");
        e.backend_id = Some(self.backends[index].id.clone());
        error_response(StatusCode::BAD_GATEWAY, &e)
    }

    /// Background health polling on the configured interval.
    pub fn spawn_health_poller(self: &Arc<Self>) -> tokio::task::JoinHandle<()> {
        let gateway = Arc::clone(self);
        tokio::spawn(async move {
            let mut ticker = tokio::time::interval(gateway.health_interval);
            ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                ticker.tick().await;
                gateway.refresh_health().await;
            }
        })
    }
}

fn assets_present(dir: &Path) -> bool {
    dir.join("index.html").is_file()
}

async fn assets_missing() -> Response {
    (
        StatusCode::SERVICE_UNAVAILABLE,
        [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
        "UI assets are not available. Build the web UI and start the gateway with --assets-dir <dir>; \
         the /api endpoints work without it.\n",
    )
        .into_response()
}

pub fn gateway_router(gateway: Arc<Gateway>) -> Router {
    let static_files = gateway.assets_dir.as_deref().filter(|d| assets_present(d)).map(Path::to_path_buf);
    let api =
        Router::new().route("/api/analyze", post(analyze)).route("/api/backends", get(backends)).with_state(gateway);
    match static_files {
        Some(dir) => {
            let index = dir.join("index.html");
            api.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => api.fallback(assets_missing),
    }
}

async fn analyze(State(gateway): State<Arc<Gateway>>, headers: HeaderMap, body: Body) -> Response {
    let started = Instant::now();
    let bytes = match axum::body::to_bytes(body, MAX_FORWARD_BODY).await {
        Ok(b) => b,
        Err(_) => {
            return error_response(
                StatusCode::PAYLOAD_TOO_LARGE,
                &ErrorBody::new("payload_too_large", "request body too large"),
            )
        }
    };
    let response = gateway.forward(headers.get(header::CONTENT_TYPE), &bytes).await;
    tracing::info!(
        status = response.status().as_u16(),
        request_bytes = bytes.len(),
        backend = response.headers().get(SERVED_BY).and_then(|v| v.to_str().ok()).unwrap_or("-"),
        elapsed_ms = started.elapsed().as_millis() as u64,
        "forward"
    );
    response
}

async fn backends(State(gateway): State<Arc<Gateway>>) -> Response {
    let statuses = gateway.backend_statuses().await;
    json_response(StatusCode::OK, serde_json::to_vec(&statuses).expect("statuses serialize"))
}

/// Validates the config, binds, polls backend health in the background and
/// serves until Ctrl-C.
pub async fn serve_gateway(
    bind: SocketAddr,
    config: GatewayConfig,
    assets_dir: Option<PathBuf>,
) -> Result<(), ServerError> {
    if let Some(dir) = assets_dir.as_deref().filter(|d| !assets_present(d)) {
        tracing::warn!(dir = %dir.display(), "no index.html in assets dir; UI paths will answer 503");
    }
    let gateway = Arc::new(Gateway::new(config, assets_dir)?);
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|source| ServerError::Bind { addr: bind.to_string(), source })?;
    let poller = gateway.spawn_health_poller();
    tracing::info!(addr = %listener.local_addr().map_err(ServerError::Serve)?, backends = gateway.backends().len(), "gateway listening");
    let served = axum::serve(listener, gateway_router(gateway)).with_graceful_shutdown(shutdown_signal()).await;
    poller.abort();
    served.map_err(ServerError::Serve)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
timeout_secs = 5
[[backends]]
id = "b"
url = "http://127.0.0.1:9/"
priority = 2

[[backends]]
id = "a"
url = "http://127.0.0.1:10"
priority = 1

[[backends]]
id = "c"
url = "http://127.0.0.1:11"
priority = 2
"#;

    #[test]
    fn parses_and_orders_by_priority() {
        let config = GatewayConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(config.timeout_secs, 5.0);
        assert_eq!(config.health_interval_secs, 10.0);
        let gw = Gateway::new(config, None).unwrap();
        let ids: Vec<_> = gw.backends().iter().map(|b| b.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(gw.backends()[1].url, "http://127.0.0.1:9");
    }

    #[test]
    fn empty_backend_list_is_refused() {
        let config = GatewayConfig::from_toml("timeout_secs = 1").unwrap();
        assert!(matches!(Gateway::new(config, None), Err(ServerError::Config(_))));
    }

    #[test]
    fn bad_entries_are_refused() {
        let dup = "[[backends]]\nid='a'\nurl='http://x'\n[[backends]]\nid='a'\nurl='http://y'\n";
        assert!(GatewayConfig::from_toml(dup).unwrap().validate().is_err());
        assert!(GatewayConfig::from_toml("[[backends]]\nid='a'\nurl='ftp://x'\n").unwrap().validate().is_err());
        assert!(GatewayConfig::from_toml("timeout_secs=0\n[[backends]]\nid='a'\nurl='http://x'\n")
            .unwrap()
            .validate()
            .is_err());
        assert!(GatewayConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn candidates_follow_health_then_priority() {
        let gw = Gateway::new(GatewayConfig::from_toml(SAMPLE).unwrap(), None).unwrap();
        assert_eq!(gw.candidate_order(), [0, 1, 2]);
        gw.set_health(0, Health::Unhealthy);
        gw.set_health(2, Health::Ok);
        assert_eq!(gw.candidate_order(), [2, 1, 0]);
    }
}
