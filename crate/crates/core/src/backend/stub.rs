//! Reference stub server implementing the logits wire protocol over the mock
//! backend. Used by integration tests and `scidc serve-stub`.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::oneshot;

use super::mock::{MockBackend, MockScript};
use super::{BackendError, DecoderBackend, GenParams};
use crate::token::{TokenId, Vocabulary};

#[derive(Debug, Clone, Default)]
pub struct StubOptions {
    pub script: MockScript,
    /// Artificial latency per request.
    pub delay: Duration,
    /// Answer every request with this status.
    pub fail_status: Option<u16>,
    /// Drop one entry from every logits vector.
    pub wrong_shape: bool,
    /// Required bearer token, if any.
    pub auth_token: Option<String>,
}

struct Shared {
    mock: Mutex<MockBackend>,
    options: StubOptions,
}

type AppState = Arc<Shared>;

#[derive(Deserialize)]
struct LogitsBody {
    context: Vec<TokenId>,
}

#[derive(Deserialize)]
struct GenerateBody {
    prompt: String,
    max_tokens: u32,
    #[serde(default)]
    temperature: f64,
    #[serde(default)]
    stop: Option<String>,
}

async fn gate(state: &Shared, headers: &HeaderMap) -> Option<Response> {
    if !state.options.delay.is_zero() {
        tokio::time::sleep(state.options.delay).await;
    }
    if let Some(status) = state.options.fail_status {
        let code = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        return Some((code, "stub configured to fail").into_response());
    }
    if let Some(token) = &state.options.auth_token {
        let expected = format!("Bearer {token}");
        let ok = headers
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v == expected);
        if !ok {
            return Some((StatusCode::UNAUTHORIZED, "missing or wrong token").into_response());
        }
    }
    None
}

fn error_response(e: BackendError) -> Response {
    let status = match e {
        BackendError::ContextOverflow { .. } => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    (status, e.to_string()).into_response()
}

async fn logits(State(state): State<AppState>, headers: HeaderMap, Json(body): Json<LogitsBody>) -> Response {
    if let Some(r) = gate(&state, &headers).await {
        return r;
    }
    let result = state.mock.lock().expect("mock lock").next_logits(&body.context);
    match result {
        Ok(mut v) => {
            if state.options.wrong_shape {
                v.pop();
            }
            Json(json!({ "logits": v })).into_response()
        }
        Err(e) => error_response(e),
    }
}

async fn generate(State(state): State<AppState>, headers: HeaderMap, Json(body): Json<GenerateBody>) -> Response {
    if let Some(r) = gate(&state, &headers).await {
        return r;
    }
    let params = GenParams {
        max_tokens: body.max_tokens,
        temperature: body.temperature,
        stop: body.stop,
    };
    let result = state
        .mock
        .lock()
        .expect("mock lock")
        .generate_unconstrained(&body.prompt, &params);
    match result {
        Ok(text) => Json(json!({ "text": text })).into_response(),
        Err(e) => error_response(e),
    }
}

fn router(vocab: Arc<Vocabulary>, options: StubOptions) -> Router {
    let mock = MockBackend::new(vocab, &options.script);
    let state = Arc::new(Shared {
        mock: Mutex::new(mock),
        options,
    });
    Router::new()
        .route("/v1/logits", post(logits))
        .route("/v1/generate", post(generate))
        .with_state(state)
}

/// A stub server running on a background thread; shuts down on drop.
pub struct StubServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and starts serving.
    pub fn start(addr: &str, vocab: Arc<Vocabulary>, options: StubOptions) -> Result<Self, BackendError> {
        let std_listener =
            std::net::TcpListener::bind(addr).map_err(|e| BackendError::Transport(e.to_string()))?;
        std_listener
            .set_nonblocking(true)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let addr = std_listener
            .local_addr()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(vocab, options);
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server thread exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
