use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use cground_ffi::*;
use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take_json(p: *mut std::ffi::c_char) -> Value {
    let v = serde_json::from_str(CStr::from_ptr(p).to_str().unwrap()).unwrap();
    cg_string_free(p);
    v
}

unsafe fn last_error() -> String {
    CStr::from_ptr(cg_last_error_message()).to_string_lossy().into_owned()
}

#[test]
fn token_f1_through_the_abi() {
    let mut f1 = 0.0;
    let st = unsafe { cg_token_f1(c("the Gila River Indian Community").as_ptr(), c("Gila River Community").as_ptr(), &mut f1) };
    assert_eq!(st, CgStatus::Ok);
    assert!((f1 - 6.0 / 7.0).abs() < 1e-12);
    let st = unsafe { cg_token_f1(ptr::null(), c("x").as_ptr(), &mut f1) };
    assert_eq!(st, CgStatus::NullPointer);
    assert!(unsafe { last_error() }.contains("prediction"));
}

#[test]
fn search_and_two_turn_session() {
    unsafe {
        let mut index = ptr::null_mut();
        let path = c(fixtures().join("index.bin").to_str().unwrap());
        assert_eq!(cg_index_load(path.as_ptr(), &mut index), CgStatus::Ok);

        let mut out = ptr::null_mut();
        assert_eq!(cg_index_search(index, c("Messi position").as_ptr(), 3, &mut out), CgStatus::Ok);
        let hits = take_json(out);
        assert_eq!(hits.as_array().unwrap().len(), 2);
        assert_eq!(hits[0]["passage_id"], "messi-position");
        assert_eq!(hits[0]["rank"], 1);

        let mut session = ptr::null_mut();
        assert_eq!(cg_session_new(index, ptr::null(), ptr::null(), ptr::null(), &mut session), CgStatus::Ok);
        // Sessions keep their own reference to the index.
        cg_index_free(index);

        assert_eq!(cg_session_ask(session, c("how old is Messi?").as_ptr(), &mut out), CgStatus::Ok);
        let r = take_json(out);
        assert_eq!(r["answer"], "36 years");
        assert_eq!(cg_session_ask(session, c("which position does he play?").as_ptr(), &mut out), CgStatus::Ok);
        let r = take_json(out);
        assert_eq!(r["answer"], "a forward");
        assert_eq!(r["passages"][0]["passage_id"], "messi-position");
        let entries: Vec<(&str, &str)> = r["cg"]["entries"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| (e["surface"].as_str().unwrap(), e["status"].as_str().unwrap()))
            .collect();
        assert!(entries.contains(&("Messi", "selected")));
        assert_eq!(cg_session_turns(session), 2);

        assert_eq!(cg_session_ask(session, c("   ").as_ptr(), &mut out), CgStatus::Argument);
        assert_eq!(cg_session_turns(session), 2);
        cg_session_free(session);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut index = ptr::null_mut();
        assert_eq!(cg_index_load(c("/nonexistent/index.bin").as_ptr(), &mut index), CgStatus::Io);
        assert!(last_error().contains("/nonexistent/index.bin"));
        let bogus = fixtures().join("passages.jsonl");
        assert_eq!(cg_index_load(c(bogus.to_str().unwrap()).as_ptr(), &mut index), CgStatus::Format);

        let passages = fixtures().join("passages.jsonl");
        assert_eq!(cg_index_build(c(passages.to_str().unwrap()).as_ptr(), &mut index), CgStatus::Ok);
        let mut session = ptr::null_mut();
        let st = cg_session_new(index, c(r#"{"mu": 2}"#).as_ptr(), ptr::null(), ptr::null(), &mut session);
        assert_eq!(st, CgStatus::Config);
        let st = cg_session_new(index, c("{not json").as_ptr(), ptr::null(), ptr::null(), &mut session);
        assert_eq!(st, CgStatus::Parse);
        let st = cg_session_new(index, c(r#"{"setup": "cg_g"}"#).as_ptr(), ptr::null(), ptr::null(), &mut session);
        assert_eq!(st, CgStatus::Config);
        assert!(session.is_null());
        let bad = [0xffu8, 0];
        let mut out = ptr::null_mut();
        assert_eq!(cg_index_search(index, bad.as_ptr().cast(), 0, &mut out), CgStatus::InvalidUtf8);
        cg_index_free(index);
        cg_index_free(ptr::null_mut());
        cg_string_free(ptr::null_mut());
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(cg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles_as_c() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/cground.h")).unwrap();
    for f in [
        "cg_last_error_message", "cg_version", "cg_string_free", "cg_token_f1", "cg_index_load",
        "cg_index_build", "cg_index_free", "cg_index_search", "cg_session_new", "cg_session_ask",
        "cg_session_turns", "cg_session_free",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing");
    }
    assert!(header.contains("typedef struct CgSession CgSession;"));
    let probe = std::env::temp_dir().join(format!("cground_probe_{}.c", std::process::id()));
    std::fs::write(&probe, "#include \"cground.h\"\nint main(void) { return cg_version() == 0; }\n").unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    match std::process::Command::new(&cc)
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(dir.join("include"))
        .arg(&probe)
        .output()
    {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(e) => eprintln!("skipping C compile check: {cc}: {e}"),
    }
    let _ = std::fs::remove_file(probe);
}
