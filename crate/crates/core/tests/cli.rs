use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_cground");

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "error")
        .env_remove("CGROUND_MU")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> Value {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "{stderr}");
    serde_json::from_str(lines[0]).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn fixture_command_reproduces_the_shipped_files() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["fixture", "--out", p(dir.path())]);
    for f in ["dataset.jsonl", "raw.jsonl", "docs.jsonl", "passages.jsonl"] {
        let shipped = std::fs::read(fixtures().join(f)).unwrap();
        let fresh = std::fs::read(dir.path().join(f)).unwrap();
        assert!(shipped == fresh, "{f} differs from the generator output");
    }
    let index = dir.path().join("index.bin");
    ok(&["index", "--collection", p(&dir.path().join("passages.jsonl")), "--out", p(&index)]);
    assert!(std::fs::read(index).unwrap() == std::fs::read(fixtures().join("index.bin")).unwrap());
}

#[test]
fn build_gold_cg_from_raw_and_docs_matches_the_enriched_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("enriched.jsonl");
    let summary: Value = serde_json::from_str(&ok(&[
        "build-gold-cg",
        "--in",
        p(&fixtures().join("raw.jsonl")),
        "--doc-source",
        p(&fixtures().join("docs.jsonl")),
        "--out",
        p(&out),
    ]))
    .unwrap();
    assert_eq!(summary["conversations"], 15);
    assert!((summary["doc_coverage"].as_f64().unwrap() - 16.0 / 58.0).abs() < 1e-12);
    assert!(std::fs::read(&out).unwrap() == std::fs::read(fixtures().join("dataset.jsonl")).unwrap());

    let examples = dir.path().join("selector.jsonl");
    ok(&["build-selector-data", "--in", p(&out), "--out", p(&examples)]);
    let text = std::fs::read_to_string(&examples).unwrap();
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let keys: Vec<&String> = first.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["context_digest", "label", "proposition", "question"]);
    assert_eq!(first["proposition"], "Messi");
    assert_eq!(first["label"], 0);
}

#[test]
fn split_is_seeded_and_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.jsonl");
    std::fs::copy(fixtures().join("dataset.jsonl"), &input).unwrap();
    let a: Value = serde_json::from_str(&ok(&["split", "--in", p(&input), "--fraction", "0.2", "--seed", "7"])).unwrap();
    assert_eq!(a["train"], 12);
    assert_eq!(a["validation"], 3);
    let train = std::fs::read(dir.path().join("data.train.jsonl")).unwrap();
    let val = std::fs::read(dir.path().join("data.validation.jsonl")).unwrap();
    ok(&["split", "--in", p(&input), "--fraction", "0.2", "--seed", "7"]);
    assert!(train == std::fs::read(dir.path().join("data.train.jsonl")).unwrap());
    assert!(val == std::fs::read(dir.path().join("data.validation.jsonl")).unwrap());
    let err = fails(&["split", "--in", p(&input), "--fraction", "1.5"]);
    assert_eq!(err["error"]["kind"], "argument");
}

#[test]
fn bench_on_the_shipped_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let records = dir.path().join("records.jsonl");
    let table = ok(&[
        "bench",
        "--dataset",
        p(&fixtures().join("dataset.jsonl")),
        "--index",
        p(&fixtures().join("index.bin")),
        "--mu-file",
        p(&fixtures().join("mu.json")),
        "--out",
        p(&out),
        "--emit-records",
        p(&records),
    ]);
    let cg_g = table.lines().find(|l| l.starts_with("CG-g ")).unwrap();
    assert!(cg_g.contains("100.00"), "{cg_g}");
    assert!(table.lines().any(|l| l.starts_with("rewrite ") && l.contains("error")));

    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let setups = &report["setups"];
    assert_eq!(setups["cg_g"]["report"]["f1"], 1.0);
    assert_eq!(setups["rewrite"]["status"], "error");
    assert_eq!(setups["rewrite"]["kind"], "config");
    let f1 = |s: &str| setups[s]["report"]["f1"].as_f64().unwrap();
    assert!(f1("cg") > f1("original"));
    assert!(f1("cg_full_cg") >= f1("cg"));
    let n = std::fs::read_to_string(&records).unwrap().lines().count();
    assert_eq!(n, 8 * 58);

    let json_out: Value = serde_json::from_str(&ok(&[
        "bench",
        "--dataset",
        p(&fixtures().join("dataset.jsonl")),
        "--index",
        p(&fixtures().join("index.bin")),
        "--setups",
        "cg_g",
        "--json",
    ]))
    .unwrap();
    assert_eq!(json_out["setups"]["cg_g"]["mu"], 0.5);
    assert!(json_out["setups"].get("cg").is_none());
}

#[test]
fn tune_mu_with_a_single_point_grid_writes_that_value() {
    let dir = tempfile::tempdir().unwrap();
    let mu_file = dir.path().join("mu.json");
    let (data, idx) = (fixtures().join("dataset.jsonl"), fixtures().join("index.bin"));
    let common = [
        "tune-mu",
        "--validation",
        p(&data),
        "--index",
        p(&idx),
        "--mu-file",
        p(&mu_file),
    ];
    let mut args = common.to_vec();
    args.extend(["--setup", "cg", "--grid", "0.35"]);
    ok(&args);
    let mut args = common.to_vec();
    args.extend(["--setup", "original", "--grid", "0.7"]);
    ok(&args);
    let table: Value = serde_json::from_str(&std::fs::read_to_string(&mu_file).unwrap()).unwrap();
    assert_eq!(table, serde_json::json!({"cg": 0.35, "original": 0.7}));

    let mut args = common.to_vec();
    args.extend(["--setup", "cg", "--grid", "1.5"]);
    assert_eq!(fails(&args)["error"]["kind"], "argument");
}

#[test]
fn chat_messi_script() {
    use std::io::Write;
    let mut child = Command::new(BIN)
        .args(["chat", "--index", p(&fixtures().join("index.bin")), "--generator", "rule", "--selector", "rule"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"how old is Messi?\nwhich position does he play?\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines,
        ["answer: 36 years", "CG: [x] Messi", "answer: a forward", "CG: [x] Messi  [x] position"]
    );
}

#[test]
fn errors_are_single_line_json() {
    let idx = fixtures().join("index.bin");
    let missing = fails(&["bench", "--dataset", "/nonexistent/data.jsonl", "--index", p(&idx)]);
    assert_eq!(missing["error"]["kind"], "io");
    assert!(missing["error"]["message"].as_str().unwrap().contains("/nonexistent/data.jsonl"));

    assert_eq!(fails(&["bench", "--bogus"])["error"]["kind"], "usage");
    assert_eq!(fails(&["frobnicate"])["error"]["kind"], "usage");

    let bad_setup = fails(&["bench", "--dataset", p(&fixtures().join("dataset.jsonl")), "--index", p(&idx), "--setups", "cg,nope"]);
    assert_eq!(bad_setup["error"]["kind"], "argument");

    let not_an_index = fails(&["chat", "--index", p(&fixtures().join("passages.jsonl"))]);
    assert_eq!(not_an_index["error"]["kind"], "format");

    let bad_dataset = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(bad_dataset.path(), "{\"conversation_id\": \"x\"}\n").unwrap();
    let parse = fails(&["build-selector-data", "--in", p(bad_dataset.path()), "--out", "/tmp/unused.jsonl"]);
    assert_eq!(parse["error"]["kind"], "parse");
    assert!(parse["error"]["message"].as_str().unwrap().contains(":1:"));

    let gold_live = fails(&["chat", "--index", p(&idx), "--default-setup", "cg_g"]);
    assert_eq!(gold_live["error"]["kind"], "config");

    let out = Command::new(BIN)
        .args(["chat", "--index", p(&idx)])
        .env("CGROUND_MU", "7")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let v: Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"]["kind"], "config");
}

#[test]
fn help_and_version_succeed() {
    assert!(ok(&["--help"]).contains("bench"));
    assert!(ok(&["--version"]).contains(env!("CARGO_PKG_VERSION")));
}
