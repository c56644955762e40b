use std::fs;
use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
kind = "exitlaw"
seed = 5
n_paths = 150
eps = [0.1]
times = [1.0]

[potential]
coefficients = [0.0, 0.0, -0.5, 0.0, 0.25]

[levy]
r = 1.0
"#;

fn metastab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_metastab")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn analyze_writes_report_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let res = metastab(&["analyze", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["kind"], "analyze");
    assert_eq!(report["pass"], true);
    assert!(out.join("tables/generator.csv").exists());
    assert!(out.join("tables/transition_t1.csv").exists());
}

#[test]
fn seed_and_workers_do_not_change_identical_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let mut reports = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "2")] {
        let out = dir.path().join(name);
        let res = metastab(&["exitlaw", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", workers]);
        assert!(matches!(res.status.code(), Some(0 | 2)));
        reports.push(fs::read(out.join("report.json")).unwrap());
        assert!(out.join("records/sigma_eps0.1.jsonl").exists());
        assert!(out.join("plotdata/survival_eps0.1.dat").exists());
    }
    assert_eq!(reports[0], reports[1]);
    let out = dir.path().join("c");
    metastab(&["exitlaw", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "6"]);
    assert_ne!(reports[0], fs::read(out.join("report.json")).unwrap());
}

#[test]
fn validate_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_config(dir.path(), CONFIG);
    let res = metastab(&["validate", "--config", &ok]);
    assert_eq!(res.status.code(), Some(0));
    let bad = write_config(dir.path(), &format!("rho = 0.45\ngamma = 0.3\n{CONFIG}"));
    let res = metastab(&["validate", "--config", &bad]);
    assert_eq!(res.status.code(), Some(1));
    let text = String::from_utf8_lossy(&res.stdout);
    assert!(text.contains("1/2<ρ<1"));
    assert!(text.contains("γ<(1−ρ)/4"));
}

#[test]
fn bad_configuration_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), &format!("rho = 0.45\n{CONFIG}"));
    let res = metastab(&["exitlaw", "--config", &bad, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let res = metastab(&["analyze", "--config", "/nonexistent.toml"]);
    assert_eq!(res.status.code(), Some(1));
}
