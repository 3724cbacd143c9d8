use std::path::Path;
use std::process::{Command, Output};

const UNIVARIATE: &str = r#"
experiment = "univariate-clt"
n_grid = [256]
replicates = 300
seed = 5

[beta]
j_max = 100000

[gates]
variance_rel_tol = 0.5

[kernel]
family = "gamma"
alpha = -0.25
lambda = 1.0
"#;

fn semicov(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_semicov"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("SEMICOV_THREADS", t),
        None => cmd.env_remove("SEMICOV_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_clt_writes_csv_and_versioned_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "u.toml", UNIVARIATE);
    let out = dir.path().join("out");
    let res = semicov(&["verify-clt", &cfg, "--out", out.to_str().unwrap()], None);
    // a 300-replicate run may fail a statistical gate; only the artefacts matter here
    assert!(matches!(res.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(out.join("univariate-clt_replicates.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("replicate,n,statistic,target"));
    assert_eq!(lines.count(), 300);
    let summary = json(&out.join("univariate-clt_summary.json"));
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    assert!(summary["rows"].as_array().unwrap().iter().any(|r| r["check"] == "variance"));
}

#[test]
fn failing_assertion_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = UNIVARIATE.replace("variance_rel_tol = 0.5", "variance_rel_tol = 1e-9");
    let cfg = write_config(dir.path(), "strict.toml", &text);
    let res = semicov(&["verify-clt", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stdout).contains("FAIL"));
}

#[test]
fn invalid_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = UNIVARIATE.replace("alpha = -0.25", "alpha = 0.25");
    let cfg = write_config(dir.path(), "bad.toml", &text);
    let res = semicov(&["verify-clt", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("alpha"));
    let missing = semicov(&["verify-wlln", "/nonexistent/config.toml"], None);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "u.toml", UNIVARIATE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let one = semicov(&["verify-clt", &cfg, "--out", a.to_str().unwrap()], Some("1"));
    let three = semicov(&["verify-clt", &cfg, "--threads", "3", "--out", b.to_str().unwrap()], None);
    assert_eq!(one.status.code(), three.status.code());
    let csv = |d: &Path| std::fs::read(d.join("univariate-clt_replicates.csv")).unwrap();
    assert_eq!(csv(&a), csv(&b));
    let rows = |d: &Path| json(&d.join("univariate-clt_summary.json"))["rows"].clone();
    assert_eq!(rows(&a), rows(&b));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "u.toml", UNIVARIATE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    semicov(&["estimate", &cfg, "--out", a.to_str().unwrap()], None);
    semicov(&["estimate", &cfg, "--seed", "6", "--out", b.to_str().unwrap()], None);
    let sa = json(&a.join("estimate_summary.json"));
    let sb = json(&b.join("estimate_summary.json"));
    assert_eq!(sa["seed"], 5);
    assert_eq!(sb["seed"], 6);
    assert_ne!(sa["config_hash"], sb["config_hash"]);
    assert_ne!(
        std::fs::read(a.join("estimate_replicates.csv")).unwrap(),
        std::fs::read(b.join("estimate_replicates.csv")).unwrap()
    );
}

#[test]
fn compute_beta_matches_reference_value() {
    let dir = tempfile::tempdir().unwrap();
    let text = UNIVARIATE.replace("j_max = 100000", "j_max = 1000000");
    let cfg = write_config(dir.path(), "u.toml", &text);
    let res = semicov(&["compute-beta", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert!(res.status.success());
    let summary = json(&dir.path().join("beta_summary.json"));
    // independent lag-sum evaluation with K = 40, J = 10^6
    assert!((summary["beta"].as_f64().unwrap() - 0.69735748).abs() < 1e-7);
    let terms = std::fs::read_to_string(dir.path().join("beta_terms.csv")).unwrap();
    assert_eq!(terms.lines().count(), 41);
}

#[test]
fn simulate_and_audit_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "u.toml", UNIVARIATE);
    let out = dir.path().join("paths");
    let res = semicov(&["simulate", &cfg, "--paths", "2", "--out", out.to_str().unwrap()], None);
    assert!(res.status.success());
    let path = std::fs::read_to_string(out.join("path_n256_rep1.csv")).unwrap();
    assert_eq!(path.lines().next(), Some("i,t,x1"));
    assert_eq!(path.lines().count(), 258);

    let audit = semicov(&["audit-assumptions", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(audit.status.code(), Some(0));
    let positive = write_config(dir.path(), "p.toml", &UNIVARIATE.replace("alpha = -0.25", "alpha = 0.25"));
    let audit = semicov(&["audit-assumptions", &positive, "--out", out.to_str().unwrap()], None);
    assert_eq!(audit.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&audit.stdout).contains("clt-range"));
}
