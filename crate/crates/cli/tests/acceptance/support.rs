use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{anyhow, ensure, Context, Result};
use crowdlens_core::connectors::{load_config, AppConfig, DriverRegistry};
use crowdlens_service::{KeyStore, RunningServer};
use serde_json::Value;

// ---------------------------------------------------------------------------
// Captured logs of the in-process server.

#[derive(Clone, Default)]
pub struct LogBuffer(Arc<Mutex<Vec<u8>>>);

impl LogBuffer {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.0.lock().unwrap()).into_owned()
    }
}

impl Write for LogBuffer {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

pub fn capture_logs() -> LogBuffer {
    let buf = LogBuffer::default();
    let writer = buf.clone();
    tracing_subscriber::fmt()
        .with_ansi(false)
        .with_max_level(tracing::Level::INFO)
        .with_writer(move || writer.clone())
        .init();
    buf
}

// ---------------------------------------------------------------------------
// The command-line binary.

pub fn cli(args: &[&str]) -> Result<Output> {
    let out = Command::new(env!("CARGO_BIN_EXE_crowdlens"))
        .args(args)
        .env_remove("CROWDLENS_CONFIG")
        .env_remove("RUST_LOG")
        .output()
        .context("running crowdlens")?;
    Ok(out)
}

pub fn cli_ok(args: &[&str]) -> Result<String> {
    let out = cli(args)?;
    ensure!(out.status.success(), "crowdlens {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    Ok(String::from_utf8(out.stdout)?)
}

pub fn cli_json(args: &[&str]) -> Result<Value> {
    Ok(serde_json::from_str(&cli_ok(args)?)?)
}

pub fn gen_scenario(preset: &str, seed: u64, dir: &Path) -> Result<()> {
    cli_ok(&["gen-scenario", "--preset", preset, "--seed", &seed.to_string(), "--out", dir.to_str().unwrap()])?;
    Ok(())
}

// ---------------------------------------------------------------------------
// In-process server over a generated config.

pub struct Served {
    pub server: RunningServer,
    pub config: AppConfig,
    pub registry: DriverRegistry,
    pub base: String,
}

/// Starts the service for `<dir>/crowdlens.toml` on an ephemeral port.
pub async fn serve_dir(dir: &Path) -> Result<Served> {
    let path = dir.join("crowdlens.toml");
    let text = std::fs::read_to_string(&path)?.replace("bind = \"127.0.0.1:8080\"", "bind = \"127.0.0.1:0\"");
    std::fs::write(&path, text)?;
    let registry = DriverRegistry::with_builtin();
    let config = load_config(&path, &registry)?;
    let server = crowdlens_service::start(&config, &registry).await?;
    let base = format!("http://{}", server.addr);
    Ok(Served { server, config, registry, base })
}

impl Served {
    pub fn issue_key(&self, label: &str) -> Result<String> {
        Ok(KeyStore::open(&self.config.service.auth_store)?.add(label)?.token)
    }

    pub async fn get(&self, path: &str, key: Option<&str>) -> Result<(u16, String, String)> {
        let mut req = reqwest::Client::new().get(format!("{}{}", self.base, path));
        if let Some(k) = key {
            req = req.header("X-Api-Key", k);
        }
        let resp = req.send().await?;
        let status = resp.status().as_u16();
        let ctype = resp.headers().get("content-type").and_then(|v| v.to_str().ok()).unwrap_or("").to_string();
        Ok((status, ctype, resp.text().await?))
    }

    pub async fn get_json(&self, path: &str, key: &str) -> Result<Value> {
        let (status, _, body) = self.get(path, Some(key)).await?;
        ensure!(status == 200, "{path}: HTTP {status}: {body}");
        Ok(serde_json::from_str(&body)?)
    }
}

// ---------------------------------------------------------------------------
// Server-sent events.

pub struct SseReader {
    resp: reqwest::Response,
    buf: String,
}

impl SseReader {
    pub async fn open(base: &str, metric: &str, key: &str) -> Result<Self> {
        let resp = reqwest::Client::new()
            .get(format!("{base}/api/stream?metric={metric}"))
            .header("X-Api-Key", key)
            .send()
            .await?;
        ensure!(resp.status() == 200, "stream: HTTP {}", resp.status());
        Ok(SseReader { resp, buf: String::new() })
    }

    /// Next `(event, data)`; None at end of stream.
    pub async fn next(&mut self, wait: Duration) -> Result<Option<(String, Value)>> {
        loop {
            if let Some(i) = self.buf.find("\n\n") {
                let block: String = self.buf.drain(..i + 2).collect();
                let (mut name, mut data) = (String::new(), String::new());
                for line in block.lines() {
                    if let Some(v) = line.strip_prefix("event:") {
                        name = v.trim().to_string();
                    } else if let Some(v) = line.strip_prefix("data:") {
                        data.push_str(v.trim());
                    }
                }
                return Ok(Some((name, serde_json::from_str(&data)?)));
            }
            let chunk = tokio::time::timeout(wait, self.resp.chunk()).await.map_err(|_| anyhow!("stream idle for {wait:?}"))??;
            match chunk {
                Some(c) => self.buf.push_str(std::str::from_utf8(&c)?),
                None => return Ok(None),
            }
        }
    }
}
