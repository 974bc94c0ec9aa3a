mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::SystemTime;

use common::*;
use dialact_core::analysis::AnalysisResult;
use dialact_core::fixture;
use dialact_server::{ErrorBody, ModelService, ServerConfig, ServerError, ServerInfo};
use sha2::{Digest, Sha256};

fn error_code(body: &[u8]) -> String {
    serde_json::from_slice::<ErrorBody>(body).unwrap().code
}

#[tokio::test]
async fn health_reports_both_models() {
    let addr = spawn_model_server().await;
    let resp = reqwest::get(format!("http://{addr}/health")).await.unwrap();
    assert_eq!(resp.status(), 200);
    assert_eq!(resp.text().await.unwrap(), r#"{"status":"ok","models_loaded":2}"#);
}

#[tokio::test]
async fn info_matches_files_on_disk() {
    let addr = spawn_model_server().await;
    let body = reqwest::get(format!("http://{addr}/info")).await.unwrap().bytes().await.unwrap();
    let info: ServerInfo = serde_json::from_slice(&body).unwrap();
    let files = model_files();
    let sha = |p: &Path| hex::encode(Sha256::digest(std::fs::read(p).unwrap()));
    assert_eq!(info.no_context_model.sha256, sha(&files.no_context));
    assert_eq!(info.context_model.sha256, sha(&files.context));
    assert_eq!(info.context_size, 2);
    assert_eq!(info.tags.len(), 42);
    assert_eq!(info.tags[0].tag, "sd");
    assert!(info.vocabulary_size > 2);
    assert!(info.context_model.id.starts_with("context-n2-"));
}

#[tokio::test]
async fn dialogue_gets_marker_then_top3() {
    let addr = spawn_model_server().await;
    let lines = fixture::dialogue("music");
    let (status, body) =
        post_json(&reqwest::Client::new(), format!("http://{addr}/analyze"), analyze_body(&lines)).await;
    assert_eq!(status, 200);
    let result: AnalysisResult = serde_json::from_slice(&body).unwrap();
    assert_eq!(result.results.len(), lines.len());
    for (i, r) in result.results.iter().enumerate() {
        assert_eq!(r.index, format!("utt{}", i + 1));
        assert_eq!(r.no_context.len(), 3);
        match r.context.predictions() {
            None => assert!(i < 2, "marker at {}", r.index),
            Some(p) => {
                assert!(i >= 2);
                assert_eq!(p.len(), 3);
            }
        }
    }
    let raw: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(raw["results"][0]["context"], "NotEnoughContext");
    assert_eq!(raw["api_version"], "1");
}

#[tokio::test]
async fn error_statuses_and_codes() {
    let addr = spawn_model_server().await;
    let client = reqwest::Client::new();
    let url = format!("http://{addr}/analyze");
    let cases: Vec<(String, u16, &str)> = vec![
        ("{\"utterances\": [".into(), 400, "malformed_json"),
        ("not json".into(), 400, "malformed_json"),
        (r#"{"utterances": []}"#.into(), 400, "empty_request"),
        (r#"{"utterances": ["", "   "]}"#.into(), 400, "empty_request"),
        (r#"{"utterances": "hello"}"#.into(), 400, "invalid_request"),
        (r#"{"api_version": "2", "utterances": ["hi"]}"#.into(), 400, "unsupported_api_version"),
        (r#"{"utterances": ["hi"], "top_k": 0}"#.into(), 400, "invalid_top_k"),
        (analyze_body(&vec!["hi".to_string(); 201]), 413, "too_many_utterances"),
        (analyze_body(&["x".repeat(1001)]), 413, "utterance_too_long"),
    ];
    for (body, status, code) in cases {
        let (got, bytes) = post_json(&client, url.clone(), body.clone()).await;
        assert_eq!(got, status, "{body:.60}");
        assert_eq!(error_code(&bytes), code, "{body:.60}");
        assert!(!String::from_utf8_lossy(&bytes).contains("panicked"));
    }
    let (status, _) = post_json(&client, url.clone(), analyze_body(&vec!["hi".to_string(); 200])).await;
    assert_eq!(status, 200);
    let (status, _) = post_json(&client, url, analyze_body(&["x".repeat(1000)])).await;
    assert_eq!(status, 200);
}

#[tokio::test]
async fn top_k_is_honoured() {
    let addr = spawn_model_server().await;
    let body = r#"{"utterances": ["Do you?", "Yes.", "Okay."], "top_k": 5}"#;
    let (status, bytes) = post_json(&reqwest::Client::new(), format!("http://{addr}/analyze"), body).await;
    assert_eq!(status, 200);
    let result: AnalysisResult = serde_json::from_slice(&bytes).unwrap();
    assert!(result.results.iter().all(|r| r.no_context.len() == 5));
    assert_eq!(result.results[2].context.predictions().unwrap().len(), 5);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_identical_requests_agree() {
    let addr = spawn_model_server().await;
    let client = reqwest::Client::new();
    let body = analyze_body(&fixture::dialogue("music"));
    let tasks: Vec<_> = (0..100)
        .map(|_| {
            let (client, body) = (client.clone(), body.clone());
            tokio::spawn(async move { post_json(&client, format!("http://{addr}/analyze"), body).await })
        })
        .collect();
    let health = reqwest::get(format!("http://{addr}/health")).await.unwrap().status();
    let mut bodies = Vec::new();
    for t in tasks {
        let (status, bytes) = t.await.unwrap();
        assert_eq!(status, 200);
        bodies.push(bytes);
    }
    assert_eq!(health, 200);
    assert!(bodies.iter().all(|b| b == &bodies[0]));
    let (_, again) = post_json(&client, format!("http://{addr}/analyze"), body).await;
    assert_eq!(again, bodies[0]);
}

fn snapshot(root: &Path) -> BTreeMap<String, (u64, SystemTime)> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let entry = entry.unwrap();
            let meta = entry.metadata().unwrap();
            if meta.is_dir() {
                stack.push(entry.path());
            } else {
                out.insert(entry.path().display().to_string(), (meta.len(), meta.modified().unwrap()));
            }
        }
    }
    out
}

#[tokio::test]
async fn requests_never_touch_the_filesystem() {
    let files = model_files();
    let cwd = std::env::current_dir().unwrap();
    let before = (snapshot(&files.dir), snapshot(&cwd));
    let addr = spawn_model_server().await;
    let client = reqwest::Client::new();
    for body in [analyze_body(&fixture::dialogue("music")), "{bad".into(), r#"{"utterances":[]}"#.into()] {
        post_json(&client, format!("http://{addr}/analyze"), body).await;
    }
    reqwest::get(format!("http://{addr}/info")).await.unwrap();
    assert_eq!((snapshot(&files.dir), snapshot(&cwd)), before);
}

#[test]
fn unusable_model_files_refuse_to_load() {
    let files = model_files();
    let missing = ServerConfig::new(files.dir.join("absent.dwm"), &files.context);
    assert!(matches!(ModelService::load(&missing), Err(ServerError::Io { .. })));
    let swapped = ServerConfig::new(&files.context, &files.no_context);
    assert!(matches!(ModelService::load(&swapped), Err(ServerError::Model { .. })));
}

#[test]
fn offline_body_equals_http_body() {
    let service = service();
    let body = analyze_body(&fixture::dialogue("yeah_contexts"));
    let offline = service.analyze_body(body.as_bytes());
    let rt = tokio::runtime::Runtime::new().unwrap();
    let online = rt.block_on(async {
        let addr = spawn_model_server().await;
        post_json(&reqwest::Client::new(), format!("http://{addr}/analyze"), body.clone()).await
    });
    assert_eq!(online, (offline.status.as_u16(), offline.body));
}
