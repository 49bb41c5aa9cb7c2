//! JSON-lines wire protocol for out-of-process model backends.
//!
//! Every message is one key-sorted JSON object on one line and carries
//! `v: 1`. A request names a task and a task-specific payload; the response
//! echoes the request id and holds either a payload or an error message.
//! The same bytes travel over a child process's stdio or as an HTTP POST
//! body.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{DocumentContext, Exchange};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    GenerateCg,
    Classify,
    Rewrite,
    Summarize,
    Read,
    Annotate,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::GenerateCg,
        Task::Classify,
        Task::Rewrite,
        Task::Summarize,
        Task::Read,
        Task::Annotate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::GenerateCg => "generate_cg",
            Task::Classify => "classify",
            Task::Rewrite => "rewrite",
            Task::Summarize => "summarize",
            Task::Read => "read",
            Task::Annotate => "annotate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterRequest {
    pub v: u32,
    pub task: Task,
    pub request_id: String,
    pub payload: Value,
}

impl AdapterRequest {
    pub fn new(task: Task, request_id: impl Into<String>, payload: Value) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            task,
            request_id: request_id.into(),
            payload,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Outcome {
    Ok { payload: Value },
    Error { error_message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterResponse {
    pub v: u32,
    pub request_id: String,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl AdapterResponse {
    pub fn ok(request_id: impl Into<String>, payload: Value) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            request_id: request_id.into(),
            outcome: Outcome::Ok { payload },
        }
    }

    pub fn error(request_id: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            request_id: request_id.into(),
            outcome: Outcome::Error {
                error_message: message.into(),
            },
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self.outcome, Outcome::Ok { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdapterError {
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("backend reported: {0}")]
    Remote(String),
    #[error("protocol version {0} not supported")]
    Version(u32),
}

impl AdapterError {
    pub fn into_response(self, request_id: &str) -> AdapterResponse {
        AdapterResponse::error(request_id, self.to_string())
    }
}

/// Serializes a message as one key-sorted JSON line (no trailing newline).
pub fn encode_line<T: Serialize>(message: &T) -> String {
    let value = serde_json::to_value(message).expect("protocol messages are JSON-representable");
    serde_json::to_string(&value).expect("JSON values always serialize")
}

pub fn decode_request(line: &str) -> Result<AdapterRequest, AdapterError> {
    let req: AdapterRequest = serde_json::from_str(line).map_err(|e| AdapterError::Malformed(e.to_string()))?;
    if req.v != PROTOCOL_VERSION {
        return Err(AdapterError::Version(req.v));
    }
    Ok(req)
}

pub fn decode_response(line: &str) -> Result<AdapterResponse, AdapterError> {
    let resp: AdapterResponse = serde_json::from_str(line).map_err(|e| AdapterError::Malformed(e.to_string()))?;
    if resp.v != PROTOCOL_VERSION {
        return Err(AdapterError::Version(resp.v));
    }
    Ok(resp)
}

/// Hex SHA-256 of the key-sorted JSON form of a payload.
pub fn payload_digest(payload: &Value) -> String {
    let canonical = serde_json::to_string(payload).expect("JSON values always serialize");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

// Task payloads. Field names are part of the wire format.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateCgPayload {
    pub doc: Option<DocumentContext>,
    pub history: Vec<Exchange>,
    /// Absent when the generator runs without the current question.
    pub question: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateCgResult {
    pub propositions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyPayload {
    pub proposition: String,
    pub question: String,
    pub context_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResult {
    pub label: u8,
    #[serde(default)]
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewritePayload {
    pub doc: Option<DocumentContext>,
    pub history: Vec<Exchange>,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteResult {
    pub rewrite: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizePayload {
    pub doc: Option<DocumentContext>,
    pub history: Vec<Exchange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizeResult {
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadPayload {
    pub passage_id: String,
    pub passage: String,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadResult {
    pub spans: Vec<ReadSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatePayload {
    pub text: String,
}

pub type Handler = Arc<dyn Fn(&AdapterRequest) -> AdapterResponse + Send + Sync>;

#[derive(Clone)]
pub enum Endpoint {
    /// Child process speaking the protocol over stdin/stdout.
    Command(Vec<String>),
    /// HTTP URL accepting one request per POST.
    Http(String),
    /// Function in this process; used for tests and built-in backends.
    InProcess(Handler),
}

impl std::fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Command(argv) => f.debug_tuple("Command").field(argv).finish(),
            Endpoint::Http(url) => f.debug_tuple("Http").field(url).finish(),
            Endpoint::InProcess(_) => f.write_str("InProcess"),
        }
    }
}

impl Endpoint {
    /// `http://` / `https://` URLs are HTTP endpoints; anything else is a
    /// whitespace-separated command line.
    pub fn parse(spec: &str) -> Result<Self, AdapterError> {
        let spec = spec.trim();
        if spec.starts_with("http://") || spec.starts_with("https://") {
            return Ok(Endpoint::Http(spec.to_string()));
        }
        let argv: Vec<String> = spec.split_whitespace().map(str::to_string).collect();
        if argv.is_empty() {
            return Err(AdapterError::Transport("empty endpoint".into()));
        }
        Ok(Endpoint::Command(argv))
    }
}

type Pending = Arc<Mutex<HashMap<String, Sender<Result<AdapterResponse, AdapterError>>>>>;

struct ProcessTransport {
    child: Mutex<Child>,
    stdin: Mutex<ChildStdin>,
    pending: Pending,
    closed: Arc<AtomicBool>,
}

impl ProcessTransport {
    fn spawn(argv: &[String]) -> Result<Self, AdapterError> {
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AdapterError::Transport(format!("cannot spawn {}: {e}", argv[0])))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let pending: Pending = Arc::default();
        let closed = Arc::new(AtomicBool::new(false));
        {
            let pending = Arc::clone(&pending);
            let closed = Arc::clone(&closed);
            thread::spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    let Ok(line) = line else { break };
                    if line.trim().is_empty() {
                        continue;
                    }
                    route_line(&line, &pending);
                }
                closed.store(true, Ordering::SeqCst);
                for (_, tx) in pending.lock().unwrap().drain() {
                    let _ = tx.send(Err(AdapterError::Transport("adapter process exited".into())));
                }
            });
        }
        Ok(Self {
            child: Mutex::new(child),
            stdin: Mutex::new(stdin),
            pending,
            closed,
        })
    }

    fn call(&self, request: &AdapterRequest, deadline: Instant) -> Result<AdapterResponse, AdapterError> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(AdapterError::Transport("adapter process exited".into()));
        }
        let (tx, rx) = mpsc::channel();
        {
            let mut pending = self.pending.lock().unwrap();
            if pending.contains_key(&request.request_id) {
                return Err(AdapterError::Transport(format!(
                    "request id {} already in flight",
                    request.request_id
                )));
            }
            pending.insert(request.request_id.clone(), tx);
        }
        let line = encode_line(request);
        let written = {
            let mut stdin = self.stdin.lock().unwrap();
            stdin
                .write_all(line.as_bytes())
                .and_then(|_| stdin.write_all(b"\n"))
                .and_then(|_| stdin.flush())
        };
        if let Err(e) = written {
            self.pending.lock().unwrap().remove(&request.request_id);
            return Err(AdapterError::Transport(format!("write failed: {e}")));
        }
        let wait = deadline.saturating_duration_since(Instant::now());
        let result = match rx.recv_timeout(wait) {
            Ok(r) => r,
            Err(RecvTimeoutError::Timeout) => Err(AdapterError::Timeout(wait)),
            Err(RecvTimeoutError::Disconnected) => {
                Err(AdapterError::Transport("adapter process exited".into()))
            }
        };
        // late replies for an abandoned id are dropped by the reader
        self.pending.lock().unwrap().remove(&request.request_id);
        result
    }
}

impl Drop for ProcessTransport {
    fn drop(&mut self) {
        if let Ok(mut child) = self.child.lock() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn route_line(line: &str, pending: &Pending) {
    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => {
            log::warn!("adapter emitted non-JSON line: {e}");
            return;
        }
    };
    let Some(id) = value.get("request_id").and_then(Value::as_str).map(str::to_string) else {
        log::warn!("adapter response without request_id dropped");
        return;
    };
    let Some(tx) = pending.lock().unwrap().remove(&id) else {
        log::debug!("no caller waiting for response {id}");
        return;
    };
    let parsed = serde_json::from_value::<AdapterResponse>(value)
        .map_err(|e| AdapterError::Malformed(e.to_string()))
        .and_then(|r| {
            if r.v == PROTOCOL_VERSION {
                Ok(r)
            } else {
                Err(AdapterError::Version(r.v))
            }
        });
    let _ = tx.send(parsed);
}

enum Transport {
    Process(ProcessTransport),
    Http(ureq::Agent, String),
    InProcess(Handler),
}

/// Counting semaphore bounding requests in flight.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self, deadline: Instant) -> bool {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            free = self.cv.wait_timeout(free, deadline - now).unwrap().0;
        }
        *free -= 1;
        true
    }

    fn release(&self) {
        *self.free.lock().unwrap() += 1;
        self.cv.notify_one();
    }
}

/// Client for one endpoint. Safe to share across threads; responses are
/// matched to callers by request id.
pub struct AdapterClient {
    transport: Transport,
    slots: Slots,
    next_id: AtomicU64,
    pub timeout: Duration,
}

impl AdapterClient {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

    pub fn connect(endpoint: &Endpoint, max_in_flight: usize) -> Result<Self, AdapterError> {
        let transport = match endpoint {
            Endpoint::Command(argv) => Transport::Process(ProcessTransport::spawn(argv)?),
            Endpoint::Http(url) => Transport::Http(ureq::AgentBuilder::new().build(), url.clone()),
            Endpoint::InProcess(h) => Transport::InProcess(Arc::clone(h)),
        };
        Ok(Self {
            transport,
            slots: Slots {
                free: Mutex::new(max_in_flight.max(1)),
                cv: Condvar::new(),
            },
            next_id: AtomicU64::new(1),
            timeout: Self::DEFAULT_TIMEOUT,
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn next_request_id(&self) -> String {
        format!("r{}", self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    /// Sends one request and waits at most `timeout` for its response.
    /// A response with `status: error` is returned as `Ok`.
    pub fn call(&self, request: &AdapterRequest, timeout: Duration) -> Result<AdapterResponse, AdapterError> {
        let deadline = Instant::now() + timeout;
        if !self.slots.acquire(deadline) {
            return Err(AdapterError::Timeout(timeout));
        }
        let result = self.dispatch(request, deadline, timeout);
        self.slots.release();
        let response = result?;
        if response.request_id != request.request_id {
            return Err(AdapterError::Malformed(format!(
                "response id {} does not match request {}",
                response.request_id, request.request_id
            )));
        }
        Ok(response)
    }

    /// Like [`AdapterClient::call`], folding every failure into an error response.
    pub fn call_or_error(&self, request: &AdapterRequest, timeout: Duration) -> AdapterResponse {
        self.call(request, timeout)
            .unwrap_or_else(|e| e.into_response(&request.request_id))
    }

    /// Typed request/response with an auto-assigned id and the client timeout.
    pub fn invoke<P: Serialize, R: DeserializeOwned>(&self, task: Task, payload: &P) -> Result<R, AdapterError> {
        let payload = serde_json::to_value(payload).map_err(|e| AdapterError::Malformed(e.to_string()))?;
        let request = AdapterRequest::new(task, self.next_request_id(), payload);
        match self.call(&request, self.timeout)?.outcome {
            Outcome::Ok { payload } => {
                serde_json::from_value(payload).map_err(|e| AdapterError::Malformed(e.to_string()))
            }
            Outcome::Error { error_message } => Err(AdapterError::Remote(error_message)),
        }
    }

    fn dispatch(&self, request: &AdapterRequest, deadline: Instant, timeout: Duration) -> Result<AdapterResponse, AdapterError> {
        match &self.transport {
            Transport::Process(p) => p.call(request, deadline),
            Transport::Http(agent, url) => {
                let remaining = deadline.saturating_duration_since(Instant::now());
                let body = encode_line(request);
                let result = agent
                    .post(url)
                    .timeout(remaining)
                    .set("content-type", "application/json")
                    .send_string(&body);
                let text = match result {
                    Ok(resp) => resp.into_string().map_err(|e| AdapterError::Transport(e.to_string()))?,
                    Err(ureq::Error::Status(code, resp)) => {
                        let text = resp.into_string().unwrap_or_default();
                        if let Ok(r) = decode_response(&text) {
                            return Ok(r);
                        }
                        return Err(AdapterError::Transport(format!("HTTP {code}")));
                    }
                    Err(ureq::Error::Transport(t)) => {
                        if Instant::now() >= deadline || t.to_string().contains("timed out") {
                            return Err(AdapterError::Timeout(timeout));
                        }
                        return Err(AdapterError::Transport(t.to_string()));
                    }
                };
                decode_response(text.trim())
            }
            Transport::InProcess(handler) => {
                let (tx, rx) = mpsc::channel();
                let handler = Arc::clone(handler);
                let req = request.clone();
                thread::spawn(move || {
                    let _ = tx.send(handler(&req));
                });
                let wait = deadline.saturating_duration_since(Instant::now());
                rx.recv_timeout(wait).map_err(|e| match e {
                    RecvTimeoutError::Timeout => AdapterError::Timeout(timeout),
                    RecvTimeoutError::Disconnected => AdapterError::Transport("handler panicked".into()),
                })
            }
        }
    }
}

/// One canned exchange in an echo fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub task: Task,
    pub payload: Value,
    pub response: Value,
}

/// Deterministic test double: answers from canned responses keyed by
/// (task, payload digest).
#[derive(Debug, Clone, Default)]
pub struct EchoBackend {
    responses: HashMap<(Task, String), Value>,
}

impl EchoBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<I: IntoIterator<Item = FixtureEntry>>(entries: I) -> Self {
        let mut echo = Self::new();
        for e in entries {
            echo.insert(e.task, &e.payload, e.response);
        }
        echo
    }

    pub fn load(path: impl AsRef<Path>) -> crate::Result<Self> {
        let entries: Vec<FixtureEntry> = crate::model::read_jsonl(path)?;
        Ok(Self::from_entries(entries))
    }

    pub fn insert(&mut self, task: Task, payload: &Value, response: Value) {
        self.responses.insert((task, payload_digest(payload)), response);
    }

    pub fn respond(&self, request: &AdapterRequest) -> AdapterResponse {
        match self.responses.get(&(request.task, payload_digest(&request.payload))) {
            Some(payload) => AdapterResponse::ok(&request.request_id, payload.clone()),
            None => AdapterResponse::error(
                &request.request_id,
                format!("no fixture for task {}", request.task.as_str()),
            ),
        }
    }

    pub fn into_handler(self) -> Handler {
        Arc::new(move |req| self.respond(req))
    }
}

/// Serves `handler` over a line-oriented stream until EOF.
pub fn serve_lines<R: BufRead, W: Write>(input: R, output: W, handler: &dyn Fn(&AdapterRequest) -> AdapterResponse) -> std::io::Result<()> {
    let mut output = BufWriter::new(output);
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match decode_request(&line) {
            Ok(req) => handler(&req),
            Err(e) => {
                let id = serde_json::from_str::<Value>(&line)
                    .ok()
                    .and_then(|v| v.get("request_id").and_then(Value::as_str).map(str::to_string))
                    .unwrap_or_default();
                e.into_response(&id)
            }
        };
        output.write_all(encode_line(&response).as_bytes())?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

/// Writes fixture entries as JSON-lines, e.g. to capture a live session for replay.
pub fn write_fixture(path: impl AsRef<Path>, entries: &[FixtureEntry]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for e in entries {
        out.write_all(encode_line(e).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn response_wire_shape() {
        let ok = AdapterResponse::ok("7", json!({"propositions": ["Messi"]}));
        assert_eq!(
            encode_line(&ok),
            r#"{"payload":{"propositions":["Messi"]},"request_id":"7","status":"ok","v":1}"#
        );
        let err = AdapterResponse::error("8", "boom");
        assert_eq!(
            encode_line(&err),
            r#"{"error_message":"boom","request_id":"8","status":"error","v":1}"#
        );
        assert_eq!(decode_response(&encode_line(&err)).unwrap(), err);
    }

    #[test]
    fn request_wire_shape() {
        let req = AdapterRequest::new(
            Task::Classify,
            "1",
            serde_json::to_value(ClassifyPayload {
                proposition: "Messi".into(),
                question: "which position does he play?".into(),
                context_digest: "Messi".into(),
            })
            .unwrap(),
        );
        let line = encode_line(&req);
        assert!(line.starts_with(r#"{"payload":{"context_digest":"Messi","proposition":"Messi""#));
        assert!(line.contains(r#""task":"classify""#));
        assert_eq!(decode_request(&line).unwrap(), req);
    }

    #[test]
    fn wrong_version_rejected() {
        let line = r#"{"payload":{},"request_id":"1","task":"read","v":2}"#;
        assert_eq!(decode_request(line).unwrap_err(), AdapterError::Version(2));
    }

    #[test]
    fn echo_answers_known_and_rejects_unknown() {
        let payload = json!({"doc": null, "history": [], "question": "how old is Messi?"});
        let mut echo = EchoBackend::new();
        echo.insert(Task::GenerateCg, &payload, json!({"propositions": ["Messi"]}));
        let hit = echo.respond(&AdapterRequest::new(Task::GenerateCg, "a", payload.clone()));
        assert_eq!(hit.outcome, Outcome::Ok { payload: json!({"propositions": ["Messi"]}) });
        let miss = echo.respond(&AdapterRequest::new(Task::Classify, "b", payload));
        assert!(!miss.is_ok());
        assert_eq!(miss.request_id, "b");
    }

    #[test]
    fn in_process_timeout_is_bounded() {
        let slow: Handler = Arc::new(|req| {
            thread::sleep(Duration::from_millis(500));
            AdapterResponse::ok(&req.request_id, Value::Null)
        });
        let client = AdapterClient::connect(&Endpoint::InProcess(slow), 4).unwrap();
        let req = AdapterRequest::new(Task::Read, "x", Value::Null);
        let started = Instant::now();
        let resp = client.call_or_error(&req, Duration::from_millis(50));
        assert!(!resp.is_ok());
        assert!(started.elapsed() < Duration::from_millis(150));
    }

    #[test]
    fn invoke_maps_remote_errors() {
        let client = AdapterClient::connect(&Endpoint::InProcess(EchoBackend::new().into_handler()), 1).unwrap();
        let err = client
            .invoke::<_, GenerateCgResult>(Task::GenerateCg, &json!({}))
            .unwrap_err();
        assert!(matches!(err, AdapterError::Remote(_)));
    }

    #[test]
    fn endpoint_parsing() {
        assert!(matches!(Endpoint::parse("http://localhost:9/x").unwrap(), Endpoint::Http(_)));
        match Endpoint::parse("python3 model.py --fast").unwrap() {
            Endpoint::Command(argv) => assert_eq!(argv, ["python3", "model.py", "--fast"]),
            other => panic!("{other:?}"),
        }
        assert!(Endpoint::parse("  ").is_err());
    }

    #[test]
    fn serve_lines_echoes_ids() {
        let payload = json!({"text": "hi"});
        let mut echo = EchoBackend::new();
        echo.insert(Task::Annotate, &payload, json!({"tokens": []}));
        let input = format!(
            "{}\nnot json\n",
            encode_line(&AdapterRequest::new(Task::Annotate, "q1", payload))
        );
        let mut out = Vec::new();
        serve_lines(input.as_bytes(), &mut out, &|r| echo.respond(r)).unwrap();
        let lines: Vec<_> = std::str::from_utf8(&out).unwrap().lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(decode_response(lines[0]).unwrap().is_ok());
        assert!(!decode_response(lines[1]).unwrap().is_ok());
    }
}
