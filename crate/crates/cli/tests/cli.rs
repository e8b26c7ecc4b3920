use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/corpus.json"))
}

/// Runs the binary with endpoint variables cleared so the host environment cannot leak in.
fn rwgrade(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rwgrade"));
    for (k, _) in std::env::vars() {
        if k.starts_with("RWGRADE_") {
            cmd.env_remove(k);
        }
    }
    cmd.args(args).envs(env.iter().copied()).env("RUST_LOG", "warn");
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn two_paper_corpus(dir: &Path) -> PathBuf {
    let all: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(fixture()).unwrap()).unwrap();
    let path = dir.join("two.json");
    std::fs::write(&path, serde_json::to_string(&all[..2]).unwrap()).unwrap();
    path
}

#[test]
fn validate_reports_each_paper() {
    let o = rwgrade(&["validate", fixture().to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("ok   rw-graph") && out.contains("3 papers, 0 invalid"));
}

#[test]
fn validate_flags_bad_paper_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut all: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(fixture()).unwrap()).unwrap();
    // Cite an index that no cited paper has.
    all[1]["main"]["related_work"] = Value::from("Only this [40].");
    let path = dir.path().join("bad.json");
    std::fs::write(&path, serde_json::to_string(&all).unwrap()).unwrap();
    let o = rwgrade(&["validate", path.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 1);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("FAIL rw-adapt"), "{out}");
    assert!(out.contains("ok   rw-graph"));
}

#[test]
fn validate_empty_file_warns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.json");
    std::fs::write(&path, "").unwrap();
    let o = rwgrade(&["validate", path.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().contains("0 papers"));
}

#[test]
fn stub_run_is_deterministic_and_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = two_paper_corpus(dir.path());
    let mut outputs = Vec::new();
    for rep in 0..2 {
        let out = dir.path().join(format!("out{rep}"));
        let o = rwgrade(
            &["run", "--stub", "--iterations", "1", "--corpus", corpus.to_str().unwrap(), "--out", out.to_str().unwrap()],
            &[],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let mut names: Vec<_> = std::fs::read_dir(out.join("traces")).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        assert_eq!(names.len(), 2);
        assert!(out.join("scores.csv").exists() && out.join("scores.json").exists());
        // A single iteration has no deltas.
        assert!(!out.join("deltas.csv").exists());
        outputs.push(names.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn scenarios_are_recorded_in_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("np");
    let o = rwgrade(
        &[
            "run", "--stub", "--scenario", "new-paper", "--iterations", "3", "--jobs", "2",
            "--corpus", fixture().to_str().unwrap(), "--out", out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t: Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("traces/stub-generator__rw-adapt__new-paper.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(t["iterations"][0]["held_out"], serde_json::json!([10, 11, 12]));
    assert_eq!(t["iterations"][2]["held_out"], serde_json::json!([]));
    assert!(out.join("deltas.csv").exists());

    let out = dir.path().join("sc");
    let o = rwgrade(
        &[
            "run", "--stub", "--scenario", "style-change", "--iterations", "4",
            "--corpus", fixture().to_str().unwrap(), "--out", out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t: Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("traces/stub-generator__rw-graph__style-change.json")).unwrap(),
    )
    .unwrap();
    let styles: Vec<&str> = t["iterations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["expected_style"].as_str().unwrap())
        .collect();
    assert_eq!(styles, ["per-paragraph", "per-paragraph", "final-paragraph", "final-paragraph"]);
}

#[test]
fn missing_endpoint_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rwgrade(
        &["run", "--corpus", fixture().to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--judge-url"));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}/v1");
    let dir = tempfile::tempdir().unwrap();
    let o = rwgrade(
        &["run", "--corpus", fixture().to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        &[
            ("RWGRADE_JUDGE_URL", &url),
            ("RWGRADE_JUDGE_MODEL", "j"),
            ("RWGRADE_GENERATOR_URL", &url),
            ("RWGRADE_GENERATOR_MODEL", "g"),
        ],
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn flags_beat_env_beat_file() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let config = dir.path().join("rw.toml");
    std::fs::write(
        &config,
        format!(
            "corpus = {:?}\nout = {:?}\niterations = 0\n[judge]\nurl = \"http://127.0.0.1:{port}/v1\"\nmodel = \"file\"\n[generator]\nurl = \"http://127.0.0.1:{port}/v1\"\nmodel = \"file\"\n",
            fixture(),
            dir.path().join("out")
        ),
    )
    .unwrap();
    let cfg = config.to_str().unwrap();
    // The file's iterations = 0 is invalid.
    assert_eq!(code(&rwgrade(&["--config", cfg, "run", "--stub"], &[])), 2);
    // A flag overrides it; the file still supplies corpus and output.
    let o = rwgrade(&["--config", cfg, "run", "--stub", "--iterations", "2"], &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("out/deltas.csv").exists());
    // Live run: file endpoints are unreachable.
    assert_eq!(code(&rwgrade(&["--config", cfg, "run", "--iterations", "1"], &[])), 3);
    // An env URL wins over the file; still unreachable, but now named in the error.
    let o = rwgrade(
        &["--config", cfg, "run", "--iterations", "1"],
        &[("RWGRADE_JUDGE_URL", "http://127.0.0.1:1/v1")],
    );
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("127.0.0.1:1/v1"));
    let o = rwgrade(
        &["--config", cfg, "run", "--iterations", "1", "--judge-url", "http://127.0.0.1:2/v1"],
        &[("RWGRADE_JUDGE_URL", "http://127.0.0.1:1/v1")],
    );
    assert!(stderr(&o).contains("127.0.0.1:2/v1"), "{}", stderr(&o));

    std::fs::write(&config, "unknown_key = 1\n").unwrap();
    assert_eq!(code(&rwgrade(&["--config", cfg, "validate", fixture().to_str().unwrap()], &[])), 2);
}

#[test]
fn eval_single_draft() {
    let dir = tempfile::tempdir().unwrap();
    let all: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(fixture()).unwrap()).unwrap();
    let gold = dir.path().join("gold.txt");
    std::fs::write(&gold, all[0]["main"]["related_work"].as_str().unwrap()).unwrap();
    let corpus = fixture();
    let base = ["eval", "--stub", "--corpus", corpus.to_str().unwrap(), "--paper", "rw-graph"];
    let o = rwgrade(&[&base[..], &["--draft", gold.to_str().unwrap()]].concat(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["citation"]["missing_ratio"], 0.0);
    assert_eq!(r["citation"]["hallucination_ratio"], 0.0);
    assert_eq!(r["emphasis"]["mean"], 1.0);

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "Something else [99].").unwrap();
    let report = dir.path().join("r.json");
    let o = rwgrade(
        &[&base[..], &["--draft", bad.to_str().unwrap(), "--out", report.to_str().unwrap()]].concat(),
        &[],
    );
    assert_eq!(code(&o), 0);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["citation"]["hallucinated_indices"], serde_json::json!([99]));

    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "").unwrap();
    let o = rwgrade(&[&base[..], &["--draft", empty.to_str().unwrap()]].concat(), &[]);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["citation"]["missing_ratio"], 1.0);
    assert_eq!(r["length"]["pass"], false);

    let o = rwgrade(
        &["eval", "--stub", "--corpus", fixture().to_str().unwrap(), "--paper", "nope", "--draft", gold.to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn export_reaggregates_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = rwgrade(
        &["run", "--stub", "--iterations", "2", "--corpus", fixture().to_str().unwrap(), "--out", out.to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&o), 0);
    let again = dir.path().join("again");
    let o = rwgrade(&["export", out.to_str().unwrap(), "--out", again.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        std::fs::read_to_string(out.join("scores.csv")).unwrap(),
        std::fs::read_to_string(again.join("scores.csv")).unwrap()
    );
    let o = rwgrade(&["export", dir.path().join("none").to_str().unwrap(), "--out", again.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn arena_port_in_use_is_a_startup_error() {
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = held.local_addr().unwrap().to_string();
    let dir = tempfile::tempdir().unwrap();
    let o = rwgrade(&["arena", "--dir", dir.path().to_str().unwrap(), "--addr", &addr], &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("cannot listen"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&rwgrade(&["bogus"], &[])), 2);
    assert_eq!(code(&rwgrade(&["--help"], &[])), 0);
}
