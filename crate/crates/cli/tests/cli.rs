use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
[lattice]
blocks = [2]

[potential]
model = "separable-cosine"
rho = 0.5

[grid]
n = [3]
omega = { values = [[1.0, 0.618033988749895]] }
theta = { values = [[0.1], [0.35]] }
energy = { values = [1.3] }
epsilon = { values = [0.01] }
"#;

fn qpgl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpgl")).args(args).env("SOURCE_DATE_EPOCH", "0").output().unwrap()
}

fn setup() -> (tempfile::TempDir, String, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = dir.path().join("out");
    (dir, cfg.display().to_string(), out.display().to_string())
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(qpgl(&["frobnicate", "--config", "x.toml"]).status.code(), Some(2));
}

#[test]
fn missing_config_is_a_config_error() {
    assert_eq!(qpgl(&["green"]).status.code(), Some(2));
    assert_eq!(qpgl(&["green", "--config", "/nonexistent/run.toml"]).status.code(), Some(2));
}

#[test]
fn green_writes_csv_and_json() {
    let (_dir, cfg, out) = setup();
    let res = qpgl(&["green", "--config", &cfg, "--out", &out]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = read(&Path::new(&out).join("green.csv"));
    assert!(csv.starts_with("# qpgl "));
    assert!(csv.lines().next().unwrap().contains("timestamp=0"));
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value = serde_json::from_str(&read(&Path::new(&out).join("green.json"))).unwrap();
    assert_eq!(json["summary"]["records"], 2);
}

#[test]
fn set_overrides_the_config() {
    let (_dir, cfg, out) = setup();
    let res = qpgl(&["green", "--config", &cfg, "--out", &out, "--set", "grid.n=[2, 3]"]);
    assert!(res.status.success());
    let json: serde_json::Value = serde_json::from_str(&read(&Path::new(&out).join("green.json"))).unwrap();
    assert_eq!(json["summary"]["records"], 4);
    assert_eq!(qpgl(&["green", "--config", &cfg, "--set", "potential.rho=2"]).status.code(), Some(2));
}

#[test]
fn seed_flag_enables_stochastic_runs() {
    let (_dir, cfg, out) = setup();
    assert_eq!(qpgl(&["cartan-probe", "--config", &cfg, "--out", &out]).status.code(), Some(2));
    let one = qpgl(&["cartan-probe", "--config", &cfg, "--out", &out, "--seed", "4", "--set", "options.samples=10"]);
    assert!(one.status.success());
    let first = read(&Path::new(&out).join("cartan-probe.csv"));
    let eight = qpgl(&[
        "cartan-probe", "--config", &cfg, "--out", &out, "--seed", "4", "--workers", "8", "--set", "options.samples=10",
    ]);
    assert!(eight.status.success());
    assert_eq!(first, read(&Path::new(&out).join("cartan-probe.csv")));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let (dir, cfg, _) = setup();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let res = qpgl(&["green", "--config", &cfg, "--out", &blocker.join("sub").display().to_string()]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn selftest_runs_without_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("st");
    let res = qpgl(&["selftest", "--out", &out.display().to_string()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stdout));
    assert!(out.join("selftest.csv").exists());
}
