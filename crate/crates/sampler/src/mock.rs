//! Scripted OpenAI-compatible endpoint.
//!
//! Responses are looked up by the prompt text of the user turn. Choice `i` of
//! a request with seed `s` is `responses[(s + i) % len]`, so the `g` choices
//! of one prompt always cover the scripted list exactly once when
//! `len == g`, whether they arrive in one `n = g` request or as `g` seeded
//! single requests. The server counts requests and tracks peak concurrency.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::client::ChatRequest;

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockPrompt {
    #[serde(default)]
    pub responses: Vec<String>,
    /// Always answer with this status instead of completions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_status: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    /// Honour `n > 1`; otherwise every request gets a single choice.
    #[serde(default = "yes")]
    pub supports_n: bool,
    #[serde(default)]
    pub delay_ms: u64,
    /// Require `Authorization: Bearer <key>` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    /// Reply for prompts missing from `prompts`.
    #[serde(default)]
    pub default_response: String,
    #[serde(default)]
    pub prompts: HashMap<String, MockPrompt>,
}

impl Default for MockScript {
    fn default() -> Self {
        Self {
            supports_n: true,
            delay_ms: 0,
            api_key: None,
            default_response: String::new(),
            prompts: HashMap::new(),
        }
    }
}

#[derive(Debug, Default)]
pub struct MockStats {
    requests: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

impl MockStats {
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.requests.store(0, Ordering::SeqCst);
        self.max_in_flight.store(0, Ordering::SeqCst);
    }
}

struct InFlight<'a>(&'a MockStats);

impl<'a> InFlight<'a> {
    fn enter(stats: &'a MockStats) -> Self {
        stats.requests.fetch_add(1, Ordering::SeqCst);
        let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        stats.max_in_flight.fetch_max(now, Ordering::SeqCst);
        InFlight(stats)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

struct AppState {
    script: MockScript,
    stats: Arc<MockStats>,
}

/// Text of the first user turn, whether sent as a string or as content parts.
fn prompt_text(req: &ChatRequest) -> String {
    let Some(msg) = req.messages.iter().find(|m| m.role == "user") else {
        return String::new();
    };
    match &msg.content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter(|p| p["type"] == "text")
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join(""),
        _ => String::new(),
    }
}

fn error(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({"error": {"message": message}}))).into_response()
}

async fn completions(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(req): Json<ChatRequest>,
) -> Response {
    let _guard = InFlight::enter(&state.stats);
    if state.script.delay_ms > 0 {
        tokio::time::sleep(Duration::from_millis(state.script.delay_ms)).await;
    }
    if let Some(key) = &state.script.api_key {
        let expected = format!("Bearer {key}");
        let ok = headers
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v == expected);
        if !ok {
            return error(StatusCode::UNAUTHORIZED, "invalid api key");
        }
    }
    let prompt = prompt_text(&req);
    let scripted = state.script.prompts.get(&prompt);
    if let Some(status) = scripted.and_then(|p| p.fail_status) {
        let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        return error(status, "scripted failure");
    }
    let fallback = [state.script.default_response.clone()];
    let pool: &[String] = match scripted {
        Some(p) if !p.responses.is_empty() => &p.responses,
        _ => &fallback,
    };
    let n = if state.script.supports_n { req.n.max(1) } else { 1 };
    let offset = req.seed.unwrap_or(0) as usize;
    let choices: Vec<Value> = (0..n)
        .map(|i| {
            json!({
                "index": i,
                "message": {"role": "assistant", "content": pool[(offset + i) % pool.len()]},
                "finish_reason": "stop",
            })
        })
        .collect();
    Json(json!({
        "id": "mock-completion",
        "object": "chat.completion",
        "model": req.model,
        "choices": choices,
    }))
    .into_response()
}

pub fn router(script: MockScript, stats: Arc<MockStats>) -> Router {
    Router::new()
        .route("/v1/chat/completions", post(completions))
        .with_state(Arc::new(AppState { script, stats }))
}

/// A running mock bound to a local port.
pub struct MockServer {
    addr: SocketAddr,
    stats: Arc<MockStats>,
    shutdown: Option<oneshot::Sender<()>>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `127.0.0.1` on an ephemeral port and serves in the background
    /// of the current Tokio runtime.
    pub async fn start(script: MockScript) -> std::io::Result<Self> {
        Self::bind(script, SocketAddr::from(([127, 0, 0, 1], 0))).await
    }

    pub async fn bind(script: MockScript, addr: SocketAddr) -> std::io::Result<Self> {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let stats = Arc::new(MockStats::default());
        let app = router(script, Arc::clone(&stats));
        let (tx, rx) = oneshot::channel::<()>();
        let handle = tokio::spawn(async move {
            let server = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = server.await {
                log::error!("mock server stopped: {e}");
            }
        });
        Ok(Self {
            addr,
            stats,
            shutdown: Some(tx),
            handle: Some(handle),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> &MockStats {
        &self.stats
    }

    /// Resolves when the server task ends.
    pub async fn wait(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.await;
        }
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.handle.take() {
            let _ = h.await;
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}
