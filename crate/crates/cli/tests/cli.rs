use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_densfact"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(path: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg(path).arg("--out").arg(out).args(extra).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn rosenthal_scenario_passes_and_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&scenario("rosenthal-l1-identity.toml"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(tmp.path().join("table.csv")).unwrap();
    let mut lines = table.lines();
    assert!(lines.next().unwrap().starts_with("trial,seed,status,stage,"));
    assert!(lines.next().unwrap().contains(",pass,"));
    let v = bin().arg("verify").arg(tmp.path().join("report.json")).output().unwrap();
    assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stderr));
}

#[test]
fn q_below_p_is_a_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&scenario("malformed-q-below-p.toml"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("q must exceed p"));
}

#[test]
fn unknown_fields_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "s.toml", "pipeline = \"density\"\ncolour = 3\n[operator]\nfamily = \"l1-identity\"\nd = 4\n");
    assert_eq!(run(&p, &tmp.path().join("o"), &[]).status.code(), Some(2));
    let p = write(tmp.path(), "t.toml", "pipeline = \"density\"\n[operator]\nfamily = \"l1-identity\"\nd = 4\nsize = 2\n");
    assert_eq!(run(&p, &tmp.path().join("o"), &[]).status.code(), Some(2));
}

#[test]
fn capacity_failure_names_the_stage_and_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let row = format!("[{}]", vec!["1.0"; 26].join(", "));
    let text = format!("pipeline = \"density\"\n[operator]\ndomain = \"linf\"\nmatrix = [{row}, {row}]\nweights = [0.5, 0.5]\n");
    let p = write(tmp.path(), "big.toml", &text);
    let out = run(&p, &tmp.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("operator norm"));
    let table = std::fs::read_to_string(tmp.path().join("o/table.csv")).unwrap();
    assert!(table.lines().nth(1).unwrap().contains(",error,operator norm,"));
}

#[test]
fn tampered_report_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&scenario("factor-linf-identity.toml"), tmp.path(), &[]).status.code(), Some(0));
    let path = tmp.path().join("report.json");
    let mut report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let values = report["trials"][0]["values"].as_object_mut().unwrap();
    let (key, v) = values.iter_mut().find(|(_, v)| v.is_f64()).unwrap();
    let key = key.clone();
    *v = serde_json::json!(v.as_f64().unwrap() * 1.5 + 1.0);
    std::fs::write(&path, serde_json::to_string(&report).unwrap()).unwrap();
    let out = bin().arg("verify").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "tampering with {key} went unnoticed");

    std::fs::write(&path, "{\"format_version\": 1}").unwrap();
    assert_eq!(bin().arg("verify").arg(&path).output().unwrap().status.code(), Some(2));
}

#[test]
fn ledger_subcommand() {
    let out = bin().args(["ledger", "density", "--params", "norm_t=1,c1p=2,c1q=3,p=2,q=inf"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.is_object());
    assert_eq!(bin().args(["ledger", "no-such-ledger"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["ledger", "density", "--params", "p=two"]).output().unwrap().status.code(), Some(2));
}

#[test]
fn ledger_scenario_has_no_operator() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&scenario("ledger-density.toml"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["trials"][0]["witness"]["kind"], "ledger");
}

#[test]
fn seed_and_jobs_do_what_they_say() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario("factor-l1-gaussian.toml");
    let read = |d: &str, extra: &[&str]| {
        let o = tmp.path().join(d);
        assert_eq!(run(&s, &o, extra).status.code(), Some(0));
        std::fs::read(o.join("table.csv")).unwrap()
    };
    let a = read("a", &["--seed", "5"]);
    let b = read("b", &["--seed", "5", "--jobs", "3"]);
    let c = read("c", &["--seed", "6"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}
