use std::path::PathBuf;
use std::process::{Command, Output};

fn core_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core")
}

fn scidc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scidc")).args(args).output().unwrap()
}

fn path(rel: &str) -> String {
    core_dir().join(rel).to_string_lossy().into_owned()
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(core_dir().join("fixtures/compiler/golden").join(name)).unwrap()
}

#[test]
fn compile_and_revise_replay_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tnm.ir");
    let o = scidc(&[
        "compile",
        "--doc",
        &path("data/tnm_thyroid.md"),
        "--task",
        "stage thyroid cancer records",
        "--fixtures",
        &path("fixtures/compiler"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), golden("tnm_program.ir"));

    let o = scidc(&[
        "revise",
        out.to_str().unwrap(),
        "--suggestion",
        "offer metastasis-presence options before choosing M stage",
        "--fixtures",
        &path("fixtures/compiler"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), golden("tnm_revised.ir"));
}

#[test]
fn compile_without_fixture_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = scidc(&[
        "compile",
        "--doc",
        &path("data/tnm_thyroid.md"),
        "--task",
        "some other task",
        "--fixtures",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no fixture"));
}

#[test]
fn lint_exit_status_follows_errors() {
    assert!(scidc(&["lint", &path("data/formulation.ir")]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ir");
    std::fs::write(
        &bad,
        "scidc-ir v1\nprogram p\nstep s: select dynamic {\n  when ratio >= 2.5 -> [\"high\"];\n  else -> [\"low\"];\n}\n",
    )
    .unwrap();
    let o = scidc(&["lint", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("ratio"));
}

#[test]
fn run_is_deterministic_and_emits_json() {
    let args = ["run", &path("data/formulation.ir"), "--prompt", "Design: ", "--seed", "4", "--temperature", "1"];
    let a = scidc(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, scidc(&args).stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(v["output"].as_str().unwrap().starts_with("Step 1"));
}

#[test]
fn eval_writes_a_metrics_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let o = scidc(&[
        "eval",
        "--pack",
        "tnm",
        "--arms",
        "full,wo_rb",
        "--seeds",
        "1",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let arms = v["arms"].as_array().unwrap();
    assert_eq!(arms.len(), 2);
    assert_eq!(arms[0]["arm"], "full");
    assert_eq!(arms[0]["validity"], 100.0);
}

#[test]
fn unknown_arm_is_a_usage_error() {
    let o = scidc(&["eval", "--pack", "tnm", "--arms", "bogus"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown arm"));
}
