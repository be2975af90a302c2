use std::path::Path;
use std::process::{Command, Output};

fn sindex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sindex")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL: &str = r#"
name = "cli"
seeds = 2
n_test = 500

[grid]
d = [5]
s = [1]
n = [200, 400]
N = [20]
lambda = [0.01]
lambda_ft = [1e-4]
step_theta = [1.0]

[train]
t0_steps = 20
t1_steps = 60
record_every = 20
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn hermite_relu_table() {
    let o = sindex(&["hermite", "--relu", "--max-order", "8"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "j,alpha");
    assert_eq!(lines.len(), 10);
    let a0: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((a0 - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-14);
    // Odd orders above one vanish.
    let a3: f64 = lines[4].split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(a3, 0.0);
}

#[test]
fn landscape_rows_follow_grid() {
    let o = sindex(&["landscape", "--m-grid", "101", "--n-features", "30", "--d", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 102);
    let o = sindex(&["landscape", "--m-grid", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn json_output() {
    let o = sindex(&["hermite", "--relu", "--max-order", "2", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.is_array() || v.is_object());
}

#[test]
fn invariants_pass() {
    let o = sindex(&["check", "--suite", "invariants"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 8);
}

#[test]
fn usage_errors() {
    let o = sindex(&["train", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = sindex(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("experiment"));
    let o = sindex(&["check", "--only", "99"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_then_finetune() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let common = ["--d", "5", "--n", "300", "--n-features", "20", "--quiet"];
    let mut args = vec!["train", "--t0", "10", "--t1", "40", "--out", out];
    args.extend(common);
    let o = sindex(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("trace.csv").exists());
    assert!(dir.path().join("trace.svg").exists());
    let state = dir.path().join("state.json");
    let mut args = vec!["finetune", "--state", state.to_str().unwrap()];
    args.extend(common);
    let o = sindex(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("m_abs,risk_pre,risk_pre_se,risk_post,risk_post_se\n"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn finetune_rejects_off_sphere_state() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    let c = vec![0.0; 20];
    let theta = [1.0, 1.0, 0.0, 0.0, 0.0];
    std::fs::write(&p, serde_json::json!({ "c": c, "theta": theta }).to_string()).unwrap();
    let o = sindex(&["finetune", "--state", p.to_str().unwrap(), "--d", "5", "--n-features", "20"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = sindex(&["experiment", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a");
    let b = run("b");
    let ra = std::fs::read(a.join("results.csv")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("results.csv")).unwrap());
    assert!(a.join("timings.csv").exists());
    for svg in ["risk_vs_n.svg", "m_vs_n.svg"] {
        assert!(std::fs::read_to_string(a.join(svg)).unwrap().contains("<polyline"));
    }
    // 2 cells x 2 seeds plus one summary row per cell.
    assert_eq!(String::from_utf8(ra).unwrap().lines().count(), 1 + 4 + 2);

    let o = sindex(&["plot", "--input", a.join("results.csv").to_str().unwrap(), "--kind", "risk_vs_n", "--out", dir.path().to_str().unwrap(), "--quiet"]);
    assert!(o.status.success());
    assert!(dir.path().join("risk_vs_n.svg").exists());
    let o = sindex(&["plot", "--input", a.join("timings.csv").to_str().unwrap(), "--kind", "risk_vs_n"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn divergent_cell_is_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("step_theta = [1.0]", "step_theta = [1e9]").replace("record_every = 20", "record_every = 20\nbackoff = false");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("o");
    let o = sindex(&["experiment", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let res = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(res.lines().any(|l| l.contains("failed")), "{res}");
}
