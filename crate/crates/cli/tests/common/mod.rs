#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use dialact_core::fixture;
use dialact_core::training::TrainConfig;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dialact")
}

pub fn dialact(args: &[&str]) -> Output {
    dialact_stdin(args, None)
}

pub fn dialact_stdin(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(bin())
        .args(args)
        .env("RUST_LOG", "warn")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    if let Some(text) = stdin {
        pipe.write_all(text.as_bytes()).unwrap();
    }
    drop(pipe);
    child.wait_with_output().unwrap()
}

pub fn ok(output: Output) -> String {
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    String::from_utf8(output.stdout).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Fixture corpus prepared into `dir/prep`; returns that directory.
pub fn prepare_fixture(dir: &Path) -> PathBuf {
    let out = dir.join("prep");
    let swda = fixture::swda_dir();
    let splits = fixture::splits_dir();
    ok(dialact(&[
        "prepare-corpus",
        "--swda-dir",
        s(&swda),
        "--out",
        s(&out),
        "--test-list",
        s(&splits.join("test.txt")),
        "--train-list",
        s(&splits.join("train.txt")),
        "--validation",
        "0",
    ]));
    out
}

pub fn write_config(dir: &Path, max_epochs: usize) -> PathBuf {
    let path = dir.join("train.toml");
    let config = TrainConfig { max_epochs, ..fixture::train_config() };
    std::fs::write(&path, toml::to_string(&config).unwrap()).unwrap();
    path
}

pub struct Trained {
    pub data: PathBuf,
    pub config: PathBuf,
    pub no_context: PathBuf,
    pub context: PathBuf,
}

/// Prepares the fixture and trains both models (n = 2) through the binary.
pub fn train_fixture(dir: &Path, max_epochs: usize) -> Trained {
    let data = prepare_fixture(dir);
    let config = write_config(dir, max_epochs);
    let no_context = dir.join("no_context.dwm");
    let context = dir.join("context.dwm");
    ok(dialact(&[
        "train",
        "--phase",
        "no-context",
        "--data",
        s(&data),
        "--config",
        s(&config),
        "--out-model",
        s(&no_context),
    ]));
    ok(dialact(&[
        "train",
        "--phase",
        "context",
        "--data",
        s(&data),
        "--config",
        s(&config),
        "--encoder",
        s(&no_context),
        "--n",
        "2",
        "--out-model",
        s(&context),
    ]));
    Trained { data, config, no_context, context }
}

pub fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

/// A server subprocess, killed on drop.
pub struct Server {
    pub child: Child,
    pub base: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn spawn_server(args: &[&str], port: u16) -> Server {
    let bind = format!("127.0.0.1:{port}");
    let child = Command::new(bin())
        .args(args)
        .args(["--bind", &bind])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    Server { child, base: format!("http://{bind}") }
}

/// Status of a plain `GET`, or `None` when nothing answers.
pub fn http_status(base: &str, path: &str) -> Option<u16> {
    let host = base.trim_start_matches("http://");
    let mut stream = TcpStream::connect(host).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: {host}\r\nConnection: close\r\n\r\n").ok()?;
    let mut head = [0u8; 12];
    stream.read_exact(&mut head).ok()?;
    std::str::from_utf8(&head[9..12]).ok()?.parse().ok()
}

/// Polls `path` until it answers 200 or the process exits.
pub fn wait_ready(server: &mut Server, path: &str) {
    let deadline = Instant::now() + Duration::from_secs(30);
    while Instant::now() < deadline {
        if let Some(status) = server.child.try_wait().unwrap() {
            panic!("server exited early with {status}");
        }
        if http_status(&server.base, path) == Some(200) {
            return;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    panic!("server at {} not ready", server.base);
}

pub fn spawn_model_server(trained: &Trained) -> Server {
    let mut server = spawn_server(
        &["serve-model", "--no-context-model", s(&trained.no_context), "--context-model", s(&trained.context)],
        free_port(),
    );
    wait_ready(&mut server, "/health");
    server
}

pub fn spawn_gateway(dir: &Path, backends: &[(&str, &str)]) -> Server {
    let config = dir.join("gateway.toml");
    let mut text = String::from("timeout_secs = 30\n");
    for (i, (id, url)) in backends.iter().enumerate() {
        text.push_str(&format!("\n[[backends]]\nid = \"{id}\"\nurl = \"{url}\"\npriority = {i}\n"));
    }
    std::fs::write(&config, text).unwrap();
    let mut server = spawn_server(&["serve-web", "--config", s(&config)], free_port());
    wait_ready(&mut server, "/api/backends");
    server
}
