//! C ABI over the cground engine.
//!
//! Every fallible call returns a [`CgStatus`]; on failure the message is
//! available from [`cg_last_error_message`] on the same thread. Strings
//! handed out by the library must be released with [`cg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_double, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use cground::config::Config;
use cground::engine::CgSession as Session;
use cground::eval::token_f1;
use cground::model::{load_passages, DocumentContext};
use cground::retrieval::Index;
use cground::service::Assistant;
use cground::Error;
use serde_json::json;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Argument = 3,
    Io = 4,
    Parse = 5,
    Format = 6,
    Config = 7,
    Backend = 8,
    Integrity = 9,
    Panic = 10,
}

/// Opaque read-only passage index; may be shared by many sessions.
pub struct CgIndex {
    inner: Arc<Index>,
}

/// Opaque conversation with its own common ground.
pub struct CgSession {
    assistant: Assistant,
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CgStatus {
    match e {
        Error::Parse { .. } | Error::Json(_) => CgStatus::Parse,
        Error::Integrity(_) => CgStatus::Integrity,
        Error::Config(_) => CgStatus::Config,
        Error::Argument(_) => CgStatus::Argument,
        Error::Adapter(_) => CgStatus::Backend,
        Error::Format(_) => CgStatus::Format,
        Error::Io(_) => CgStatus::Io,
    }
}

struct Fail(CgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(CgStatus::Parse, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CgStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CgStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(CgStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CgStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn optional_text<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, name).map(Some)
    }
}

fn out_ptr<T>(out: *mut T, name: &str) -> Result<(), Fail> {
    if out.is_null() {
        Err(Fail(CgStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn to_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(CgStatus::Integrity, "output contains a nul byte".into()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn cg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn cg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// SQuAD-style token F1 between a prediction and a gold answer.
///
/// # Safety
/// `prediction` and `gold` must be nul-terminated strings; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cg_token_f1(prediction: *const c_char, gold: *const c_char, out: *mut c_double) -> CgStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let f1 = token_f1(text(prediction, "prediction")?, text(gold, "gold")?);
        *out = f1;
        Ok(())
    })
}

/// Loads a persisted index file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_index_load(path: *const c_char, out: *mut *mut CgIndex) -> CgStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let index = Index::load(text(path, "path")?)?;
        *out = Box::into_raw(Box::new(CgIndex { inner: Arc::new(index) }));
        Ok(())
    })
}

/// Builds an index from a passages JSON-lines file with the default
/// analyzer.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_index_build(path: *const c_char, out: *mut *mut CgIndex) -> CgStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let passages = load_passages(text(path, "path")?)?;
        let index = Index::build(passages, Default::default())?;
        *out = Box::into_raw(Box::new(CgIndex { inner: Arc::new(index) }));
        Ok(())
    })
}

/// # Safety
/// `index` must come from `cg_index_load`/`cg_index_build` and not have
/// been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cg_index_free(index: *mut CgIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Ranks passages for `query`. `*out_json` receives a JSON array of
/// `{passage_id, rank, s_ret, s_ret_norm}`; `top_n` of 0 uses the default.
///
/// # Safety
/// `index` must be a live handle, `query` a nul-terminated string and
/// `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cg_index_search(
    index: *const CgIndex,
    query: *const c_char,
    top_n: u32,
    out_json: *mut *mut c_char,
) -> CgStatus {
    guard(|| {
        out_ptr(out_json, "out_json")?;
        let index = index
            .as_ref()
            .ok_or_else(|| Fail(CgStatus::NullPointer, "index is null".into()))?;
        let mut params = cground::retrieval::Bm25Params::default();
        if top_n > 0 {
            params.top_n = top_n as usize;
        }
        let hits = index.inner.search(text(query, "query")?, &params)?;
        let rows: Vec<_> = hits
            .iter()
            .map(|h| {
                json!({
                    "passage_id": h.passage.passage_id,
                    "rank": h.rank,
                    "s_ret": h.s_ret,
                    "s_ret_norm": h.s_ret_norm,
                })
            })
            .collect();
        *out_json = to_c_string(serde_json::to_string(&rows)?)?;
        Ok(())
    })
}

/// Starts a conversation over `index`. `config_json` is a configuration
/// object (null for defaults: rule generator and selector, lexical reader,
/// `cg` setup). The document title and first sentence may be null.
///
/// # Safety
/// `index` must be a live handle; string arguments must be null or
/// nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_session_new(
    index: *const CgIndex,
    config_json: *const c_char,
    doc_title: *const c_char,
    doc_first_sentence: *const c_char,
    out: *mut *mut CgSession,
) -> CgStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let index = index
            .as_ref()
            .ok_or_else(|| Fail(CgStatus::NullPointer, "index is null".into()))?;
        let config = match optional_text(config_json, "config_json")? {
            Some(s) => Config::from_value(serde_json::from_str(s)?)?,
            None => Config::default(),
        };
        let doc = match (
            optional_text(doc_title, "doc_title")?,
            optional_text(doc_first_sentence, "doc_first_sentence")?,
        ) {
            (None, None) => None,
            (t, s) => Some(DocumentContext::new(t.unwrap_or_default(), s.unwrap_or_default())),
        };
        let assistant = Assistant::new(index.inner.clone(), config.backends(None)?, &config)?;
        let session = assistant.new_session(doc)?;
        *out = Box::into_raw(Box::new(CgSession { assistant, session }));
        Ok(())
    })
}

/// Answers one question. `*out_json` receives
/// `{answer, passages, cg: {entries}, mu}`. On failure the session is
/// unchanged.
///
/// # Safety
/// `session` must be a live handle not used concurrently from another
/// thread; `question` must be nul-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cg_session_ask(
    session: *mut CgSession,
    question: *const c_char,
    out_json: *mut *mut c_char,
) -> CgStatus {
    guard(|| {
        out_ptr(out_json, "out_json")?;
        let s = session
            .as_mut()
            .ok_or_else(|| Fail(CgStatus::NullPointer, "session is null".into()))?;
        let response = s.assistant.ask(&mut s.session, text(question, "question")?)?;
        *out_json = to_c_string(serde_json::to_string(&response)?)?;
        Ok(())
    })
}

/// Number of turns answered so far, or -1 for a null handle.
///
/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cg_session_turns(session: *const CgSession) -> i64 {
    session.as_ref().map_or(-1, |s| s.session.turn() as i64)
}

/// # Safety
/// `session` must come from `cg_session_new` and not have been freed. Null
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn cg_session_free(session: *mut CgSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}
