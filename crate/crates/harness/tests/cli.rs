use std::path::Path;
use std::process::{Command, Output};

const MODEL: &str = r#"
[model]
T = 1.0
a = 0.25
theta = 0.375
lambda = "constant(1)"
lambda_star = "constant(2)"
b = "affine(0, 1)"
sigma = "constant(1)"

[run]
n_periods = 10
steps_per_period = 64
replicates = 20
seed = 11
"#;

fn perphase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perphase"))
        .args(args)
        .env("PERPHASE_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, study: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, format!("{MODEL}\n{study}")).unwrap();
    p.display().to_string()
}

#[test]
fn passing_run_exits_zero_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[study]\nchecks = [\"hellinger\"]\n");
    let out = perphase(&["run", &cfg]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 9);
    for f in ["report.json", "report.csv", "timings.json"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let study = "[study]\nchecks = [\"hellinger\"]\ntolerances = { hellinger_se = 1e-9 }\n";
    let cfg = write_config(dir.path(), study);
    assert_eq!(perphase(&["run", &cfg]).status.code(), Some(1));
}

#[test]
fn config_errors_exit_two_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[study]\nchecks = [\"hellinger\"]\n");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("a = 0.25", "a = 1.0");
    std::fs::write(&cfg, text).unwrap();
    let out = perphase(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("0 < a < T"));

    let cfg = write_config(dir.path(), "[study]\nchecks = [\"nope\"]\n");
    let out = perphase(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nope") && err.contains("line"), "{err}");

    assert_eq!(
        perphase(&["limit", "--check", "variance"]).status.code(),
        Some(2)
    );
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let study = "[study]\nchecks = [\"finite-n\", \"contiguous\"]\n";
    let cfg = write_config(dir.path(), study);
    let read = || {
        ["report.json", "report.csv", "study_u0.csv", "study_u3.csv"]
            .map(|f| std::fs::read(dir.path().join("out").join(f)).unwrap())
    };
    perphase(&["run", &cfg]);
    let a = read();
    perphase(&["run", &cfg]);
    assert_eq!(a, read());
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    let p = path.display().to_string();
    let out = perphase(&[
        "simulate",
        "--n-periods",
        "60",
        "--steps-per-period",
        "128",
        "--seed",
        "3",
        "--burn-in",
        "10",
        "--lambda-star",
        "constant(6)",
        "--out",
        &p,
    ]);
    assert!(out.status.success());
    for kind in ["mle", "bayes"] {
        let out = perphase(&["estimate", kind, "--path", &p]);
        assert!(out.status.success());
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        let est = v["estimate"].as_f64().unwrap();
        assert!((est - 0.375).abs() < 0.05, "{kind}: {est}");
    }
    let curve = dir.path().join("c.csv");
    let out = perphase(&[
        "estimate",
        "curve",
        "--path",
        &p,
        "--out",
        &curve.display().to_string(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(curve).unwrap();
    assert!(text.starts_with("u,log_z\n"));
    assert!(text.lines().any(|l| l.starts_with("0e0,0e0")));
}
