#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::Router;
use dialact_core::fixture;
use dialact_core::models::{save_context, save_no_context};
use dialact_server::{model_router, ModelService, ServerConfig};

/// Fixture models trained once per test binary and written to a temp dir
/// that lives until the process exits.
pub struct ModelFiles {
    pub dir: PathBuf,
    pub no_context: PathBuf,
    pub context: PathBuf,
}

pub fn model_files() -> &'static ModelFiles {
    static FILES: OnceLock<ModelFiles> = OnceLock::new();
    FILES.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let (encoder, context) = fixture::trained_models(2, 20);
        let files = ModelFiles { no_context: dir.join("no_context.dwm"), context: dir.join("context.dwm"), dir };
        save_no_context(&encoder, &files.no_context).unwrap();
        save_context(&context, &files.context).unwrap();
        files
    })
}

pub fn server_config() -> ServerConfig {
    let files = model_files();
    ServerConfig::new(&files.no_context, &files.context)
}

pub fn service() -> Arc<ModelService> {
    Arc::new(ModelService::load(&server_config()).unwrap())
}

pub async fn spawn(router: Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    addr
}

pub async fn spawn_model_server() -> SocketAddr {
    spawn(model_router(service())).await
}

/// An address nothing listens on.
pub async fn dead_addr() -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    listener.local_addr().unwrap()
}

pub fn analyze_body(lines: &[String]) -> String {
    serde_json::json!({ "api_version": "1", "utterances": lines }).to_string()
}

pub async fn post_json(client: &reqwest::Client, url: String, body: impl Into<reqwest::Body>) -> (u16, Vec<u8>) {
    let resp = client.post(url).header("content-type", "application/json").body(body).send().await.unwrap();
    let status = resp.status().as_u16();
    (status, resp.bytes().await.unwrap().to_vec())
}
