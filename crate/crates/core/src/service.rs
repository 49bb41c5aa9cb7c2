//! Live conversations: the answering loop shared by the REPL and the HTTP
//! session API.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Config;
use crate::engine::{CgSession, GeneratorConfig};
use crate::error::{Error, Result};
use crate::eval::Backends;
use crate::model::{CommonGround, DocumentContext, Status};
use crate::reading::{check_mu, Pipeline, PipelineOutput};
use crate::retrieval::{Bm25Params, Index};
use crate::setups::{formulate, Setup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgEntryView {
    pub surface: String,
    pub origin_turn: usize,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgView {
    pub entries: Vec<CgEntryView>,
}

impl From<&CommonGround> for CgView {
    fn from(cg: &CommonGround) -> Self {
        Self {
            entries: cg
                .entries()
                .iter()
                .map(|e| CgEntryView {
                    surface: e.proposition.surface.clone(),
                    origin_turn: e.proposition.origin_turn,
                    status: e.status,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageRef {
    pub passage_id: String,
    pub rank: usize,
    pub s_ret_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub answer: String,
    pub passages: Vec<PassageRef>,
    pub cg: CgView,
    pub mu: f64,
}

/// Index, backends and answering settings for live sessions.
pub struct Assistant {
    index: Arc<Index>,
    backends: Backends,
    setup: Setup,
    mu: f64,
    params: Bm25Params,
    fusion_raw: bool,
    generator: GeneratorConfig,
}

impl Assistant {
    pub fn new(index: Arc<Index>, backends: Backends, config: &Config) -> Result<Self> {
        if matches!(config.setup, Setup::RewriteG | Setup::CgG) {
            return Err(Error::config(format!(
                "setup {} needs gold data and cannot serve live sessions",
                config.setup
            )));
        }
        backends.services.check(config.setup)?;
        check_mu(config.mu)?;
        config.bm25.validate()?;
        config.generator_sources.validate()?;
        Ok(Self {
            index,
            backends,
            setup: config.setup,
            mu: config.mu,
            params: config.bm25,
            fusion_raw: config.fusion_raw,
            generator: config.generator_sources,
        })
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    pub fn new_session(&self, doc: Option<DocumentContext>) -> Result<CgSession> {
        CgSession::new(
            doc,
            self.backends.generator.clone(),
            self.backends.selector.clone(),
            self.generator,
        )
    }

    /// One turn. On failure the session is unchanged.
    pub fn ask(&self, session: &mut CgSession, question: &str) -> Result<AskResponse> {
        let question = question.trim();
        if question.is_empty() {
            return Err(Error::argument("question must not be empty"));
        }
        let ctx = session.context_for(question);
        let pipeline = Pipeline {
            index: &self.index,
            reader: self.backends.reader.as_ref(),
            params: self.params,
            fusion_raw: self.fusion_raw,
        };
        let mut output: Option<PipelineOutput> = None;
        let views = session.step(question, |views| {
            let f = formulate(self.setup, &ctx, &views.full, &self.backends.services, None)?;
            let out = pipeline.run(&f.retriever_query, &f.reader_query, self.mu)?;
            let answer = out.answer().to_string();
            output = Some(out);
            Ok(answer)
        })?;
        let output = output.expect("set by a successful step");
        Ok(AskResponse {
            answer: output.answer().to_string(),
            passages: output
                .passages
                .iter()
                .map(|p| PassageRef {
                    passage_id: p.passage.passage_id.clone(),
                    rank: p.rank,
                    s_ret_norm: p.s_ret_norm,
                })
                .collect(),
            cg: CgView::from(&views.full),
            mu: self.mu,
        })
    }
}

/// One CG line: `[x]` selected, `[ ]` retained (dimmed when `color`).
pub fn render_cg_line(cg: &CgView, color: bool) -> String {
    let items: Vec<String> = cg
        .entries
        .iter()
        .map(|e| match (e.status, color) {
            (Status::Selected, _) => format!("[x] {}", e.surface),
            (Status::Retained, false) => format!("[ ] {}", e.surface),
            (Status::Retained, true) => format!("\x1b[2m[ ] {}\x1b[0m", e.surface),
        })
        .collect();
    format!("CG: {}", items.join("  "))
}

/// Reads questions line by line and prints each answer followed by the CG.
/// `:reset` starts a new conversation, `:quit` ends.
pub fn run_repl<R: BufRead, W: Write>(
    assistant: &Assistant,
    doc: Option<DocumentContext>,
    input: R,
    mut out: W,
    color: bool,
) -> Result<()> {
    let mut session = assistant.new_session(doc.clone())?;
    for line in input.lines() {
        let line = line?;
        let q = line.trim();
        match q {
            "" => continue,
            ":quit" | ":q" => break,
            ":reset" => {
                session = assistant.new_session(doc.clone())?;
                writeln!(out, "(new conversation)")?;
                continue;
            }
            _ => {}
        }
        match assistant.ask(&mut session, q) {
            Ok(r) => {
                writeln!(out, "answer: {}", if r.answer.is_empty() { "(no answer)" } else { &r.answer })?;
                writeln!(out, "{}", render_cg_line(&r.cg, color))?;
            }
            Err(e) => writeln!(out, "error: {e}")?,
        }
        out.flush()?;
    }
    Ok(())
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub question: String,
    pub answer: String,
    pub cg_full: Vec<CgEntryView>,
    pub cg_selected: Vec<CgEntryView>,
}

pub struct SessionState {
    pub session_id: String,
    pub cg_session: CgSession,
    pub transcript: Vec<TranscriptEntry>,
    pub created_at: u64,
}

struct SessionSlot {
    state: Arc<tokio::sync::Mutex<SessionState>>,
    last_active: AtomicU64,
}

#[derive(Clone)]
pub struct AppState {
    assistant: Arc<Assistant>,
    sessions: Arc<Mutex<HashMap<String, Arc<SessionSlot>>>>,
    ttl: Duration,
    log: Option<Arc<Mutex<std::fs::File>>>,
}

impl AppState {
    pub fn new(assistant: Arc<Assistant>, ttl: Duration, session_log: Option<&Path>) -> Result<Self> {
        let log = match session_log {
            Some(p) => Some(Arc::new(Mutex::new(
                std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| Error::io(p, e))?,
            ))),
            None => None,
        };
        Ok(Self {
            assistant,
            sessions: Arc::default(),
            ttl,
            log,
        })
    }

    fn slot(&self, id: &str) -> Option<Arc<SessionSlot>> {
        let mut sessions = self.sessions.lock().expect("session map poisoned");
        let slot = sessions.get(id)?.clone();
        if self.expired(&slot, now_ms()) {
            sessions.remove(id);
            return None;
        }
        Some(slot)
    }

    fn expired(&self, slot: &SessionSlot, now: u64) -> bool {
        now.saturating_sub(slot.last_active.load(Ordering::Relaxed)) > self.ttl.as_millis() as u64
    }

    /// Drops idle sessions; returns how many were removed.
    pub fn reap(&self) -> usize {
        let now = now_ms();
        let mut sessions = self.sessions.lock().expect("session map poisoned");
        let before = sessions.len();
        sessions.retain(|_, s| !self.expired(s, now));
        before - sessions.len()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map poisoned").len()
    }
}

struct ApiError(StatusCode, String, String);

impl ApiError {
    fn not_found(id: &str) -> Self {
        ApiError(StatusCode::NOT_FOUND, "not_found".into(), format!("no session {id}"))
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError(StatusCode::BAD_REQUEST, "bad_request".into(), message.into())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Argument(_) | Error::Parse { .. } | Error::Json(_) => StatusCode::BAD_REQUEST,
            Error::Adapter(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.kind().to_string(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"error": {"kind": self.1, "message": self.2}}))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes, allow_empty: bool) -> ApiResult<T> {
    if allow_empty && body.iter().all(u8::is_ascii_whitespace) {
        return serde_json::from_str("{}").map_err(|e| ApiError::bad_request(e.to_string()));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid body: {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    doc_title: Option<String>,
    doc_first_sentence: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AskBody {
    question: String,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let body: CreateBody = parse_body(&body, true)?;
    let doc = match (body.doc_title, body.doc_first_sentence) {
        (None, None) => None,
        (title, sentence) => Some(DocumentContext::new(title.unwrap_or_default(), sentence.unwrap_or_default())),
    };
    let cg_session = state.assistant.new_session(doc)?;
    let id = hex::encode(rand::rng().random::<[u8; 12]>());
    let now = now_ms();
    let slot = Arc::new(SessionSlot {
        state: Arc::new(tokio::sync::Mutex::new(SessionState {
            session_id: id.clone(),
            cg_session,
            transcript: Vec::new(),
            created_at: now,
        })),
        last_active: AtomicU64::new(now),
    });
    state.sessions.lock().expect("session map poisoned").insert(id.clone(), slot);
    Ok(Json(json!({ "session_id": id })))
}

async fn ask(State(state): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<AskResponse>> {
    let body: AskBody = parse_body(&body, false)?;
    if body.question.trim().is_empty() {
        return Err(ApiError::bad_request("field `question` must not be empty"));
    }
    let slot = state.slot(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let mut guard = slot.state.clone().lock_owned().await;
    let assistant = state.assistant.clone();
    let log = state.log.clone();
    let (guard_back, result) = tokio::task::spawn_blocking(move || {
        let result = assistant.ask(&mut guard.cg_session, &body.question).map(|r| {
            let views = guard.cg_session.views();
            let entry = TranscriptEntry {
                question: body.question.trim().to_string(),
                answer: r.answer.clone(),
                cg_full: CgView::from(&views.full).entries,
                cg_selected: CgView::from(&views.selected).entries,
            };
            if let Some(log) = &log {
                let line = json!({
                    "session_id": guard.session_id,
                    "turn": guard.transcript.len(),
                    "ts": now_ms(),
                    "entry": entry,
                });
                let mut f = log.lock().expect("log poisoned");
                if let Err(e) = writeln!(f, "{line}") {
                    log::warn!("session log: {e}");
                }
            }
            guard.transcript.push(entry);
            r
        });
        (guard, result)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, "internal".into(), e.to_string()))?;
    drop(guard_back);
    slot.last_active.store(now_ms(), Ordering::Relaxed);
    Ok(Json(result?))
}

async fn get_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let slot = state.slot(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let s = slot.state.lock().await;
    Ok(Json(json!({
        "session_id": s.session_id,
        "doc": s.cg_session.doc(),
        "created_at": s.created_at,
        "last_active": slot.last_active.load(Ordering::Relaxed),
        "transcript": s.transcript,
    })))
}

async fn delete_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let removed = state.sessions.lock().expect("session map poisoned").remove(&id);
    match removed {
        Some(_) => Ok(Json(json!({ "session_id": id, "deleted": true }))),
        None => Err(ApiError::not_found(&id)),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session).delete(delete_session))
        .route("/v1/sessions/{id}/ask", post(ask))
        .with_state(state)
}

/// A running HTTP service on its own thread.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<Result<()>>>,
}

impl ServerHandle {
    /// Binds `bind` and serves until [`ServerHandle::shutdown`] or Ctrl-C.
    pub fn start(state: AppState, bind: &str) -> Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .map_err(Error::from)?;
        let listener = runtime
            .block_on(tokio::net::TcpListener::bind(bind))
            .map_err(|e| Error::config(format!("cannot bind {bind}: {e}")))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let reaper_state = state.clone();
                let period = (reaper_state.ttl / 4).clamp(Duration::from_millis(50), Duration::from_secs(60));
                tokio::spawn(async move {
                    let mut tick = tokio::time::interval(period);
                    loop {
                        tick.tick().await;
                        let n = reaper_state.reap();
                        if n > 0 {
                            log::info!("expired {n} idle sessions");
                        }
                    }
                });
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async move {
                        tokio::select! {
                            _ = rx => {}
                            _ = tokio::signal::ctrl_c() => {}
                        }
                    })
                    .await
                    .map_err(Error::from)
            })
        });
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn shutdown(mut self) -> Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.join()
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) -> Result<()> {
        self.join()
    }

    fn join(&mut self) -> Result<()> {
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| Error::integrity("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = self.join();
    }
}
