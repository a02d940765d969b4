use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_symquant");

fn solver_cmd() -> String {
    std::env::var("SYMQUANT_SOLVER_CMD").unwrap_or_else(|_| "z3 -in".to_string())
}

fn symquant(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("SYMQUANT_SOLVER_CMD")
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn toy_spec(dir: &Path) -> String {
    let path = dir.join("toy_consensus.spec");
    std::fs::write(&path, symquant::corpus::TOY_CONSENSUS).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn verify_toy_consensus_prints_two_assertions() {
    let dir = tempfile::tempdir().unwrap();
    let spec = toy_spec(dir.path());
    let cert = dir.path().join("toy.cert");
    let solver = solver_cmd();
    let out = symquant(&[
        "verify",
        &spec,
        "--size",
        "node=3,value=3",
        "--solver-cmd",
        &solver,
        "--cert",
        cert.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&cert).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("(invariant ")).count(), 2);
    assert_eq!(text.lines().filter(|l| l.starts_with("(safety ")).count(), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains(&text));
}

#[test]
fn dropped_guard_exits_one_with_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("cex.txt");
    let solver = solver_cmd();
    let out = symquant(&[
        "verify",
        "corpus:toy-consensus",
        "--mutate",
        "drop-guard=CastVote",
        "--solver-cmd",
        &solver,
        "--trace",
        trace.to_str().unwrap(),
        "--oracle-check",
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("state 0:"), "{text}");
}

#[test]
fn missing_solver_is_a_usage_error() {
    let out = symquant(&["verify", "corpus:toy-consensus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver"));
}

#[test]
fn unknown_protocol_is_a_usage_error() {
    let solver = solver_cmd();
    let out = symquant(&["verify", "corpus:no-such-thing", "--solver-cmd", &solver]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn certificates_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let solver = solver_cmd();
    let mut certs = Vec::new();
    for i in 0..2 {
        let cert = dir.path().join(format!("run{i}.cert"));
        let out = symquant(&[
            "verify",
            "corpus:lock-server",
            "--solver-cmd",
            &solver,
            "--solver-seed",
            "7",
            "--cert",
            cert.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        certs.push(std::fs::read(&cert).unwrap());
    }
    assert_eq!(certs[0], certs[1]);
}

#[test]
fn result_file_is_json() {
    let dir = tempfile::tempdir().unwrap();
    let result = dir.path().join("result.json");
    let solver = solver_cmd();
    let out = symquant(&[
        "verify",
        "corpus:lock-server",
        "--solver-cmd",
        &solver,
        "--result",
        result.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert_eq!(v["verdict"], "safe");
}

#[test]
fn corpus_lists_bundled_protocols() {
    let out = symquant(&["corpus"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for b in symquant::corpus::all() {
        assert!(text.contains(b.name), "{text}");
    }
}
