use qpgl_core::sweep::{self, Subcommand, SweepConfig};

const DIAGONAL: &str = r#"
[lattice]
blocks = [2]

[potential]
model = "separable-cosine"
rho = 0.5

[grid]
n = [3]
omega = { values = [[1.0, 0.618033988749895]] }
theta = { values = [[0.1], [0.35], [0.8]] }
energy = { values = [1.3] }
epsilon = { values = [0.0] }
"#;

fn config(text: &str, overrides: &[&str]) -> SweepConfig {
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    SweepConfig::parse(text, &overrides).unwrap()
}

#[test]
fn diagonal_green_norm_is_inverse_distance() {
    let out = sweep::run(Subcommand::Green, &config(DIAGONAL, &[]), 2).unwrap();
    assert_eq!(out.records().len(), 3);
    let w = [1.0, 0.618033988749895];
    for (row, theta) in out.records().iter().zip([0.1, 0.35, 0.8]) {
        let mut min = f64::INFINITY;
        for a in -3i64..=3 {
            for b in -3i64..=3 {
                let x = a as f64 * w[0] + b as f64 * w[1] + theta;
                min = min.min((x * x - 1.3).abs());
            }
        }
        let norm = row.real("op_norm").unwrap();
        assert!((norm - 1.0 / min).abs() <= 1e-9 * norm, "{norm} vs {}", 1.0 / min);
        assert_eq!(row.text("status"), Some(""));
    }
    assert_eq!(out.exit_code(), 0);
}

#[test]
fn resonance_measure_header_and_bound() {
    let cfg = config(
        DIAGONAL,
        &["grid.delta={ values = [1e-2, 1e-3] }", "lattice.blocks=[1, 1]", "grid.theta={ values = [[0.2, 0.0]] }"],
    );
    let out = sweep::run(Subcommand::ResonanceMeasure, &cfg, 1).unwrap();
    let csv = out.csv(0).unwrap();
    let header = csv.lines().nth(1).unwrap();
    assert!(header.starts_with("j,theta_section,N,delta,E,measure,bound4,ratio"), "{header}");
    assert_eq!(out.summary["violations"], 0);
    for row in out.records() {
        assert!(row.real("measure").unwrap() <= row.real("bound4").unwrap());
    }
}

#[test]
fn success_rate_is_a_fraction() {
    let text = r#"
[lattice]
blocks = [2]

[potential]
model = "separable-cosine"
rho = 0.5

[grid]
n = [6]
omega = { uniform = [0.0, 2.0, 6] }
theta = { values = [[0.25]] }
energy = { values = [1.0] }
delta = { values = [1e-2] }

[run]
seed = 3
"#;
    let out = sweep::run(Subcommand::DoubleResonance, &config(text, &[]), 2).unwrap();
    let rate = out.summary["success_rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rate));
    assert_eq!(out.tables[1].suffix, "annulus");
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let cfg = config(DIAGONAL, &["grid.epsilon={ values = [0.05, 0.1] }", "run.seed=9"]);
    for sub in [Subcommand::Green, Subcommand::LdtScan, Subcommand::CartanProbe] {
        let a = sweep::run(sub, &cfg, 1).unwrap();
        let b = sweep::run(sub, &cfg, 4).unwrap();
        assert_eq!(a.json(), b.json(), "{sub}");
        assert_eq!(a.csv(0).unwrap(), b.csv(0).unwrap(), "{sub}");
    }
}

#[test]
fn refused_task_keeps_exit_code_zero() {
    let cfg = config(DIAGONAL, &["grid.energy={ values = [0.01] }", "grid.epsilon=\"first-step\"", "grid.theta={ values = [[0.1]] }"]);
    let out = sweep::run(Subcommand::Witness, &cfg, 1).unwrap();
    let status = out.records()[0].text("status").unwrap();
    assert!(status.starts_with("refused"), "{status}");
    assert_eq!(out.summary["refused"], 1);
    assert_eq!(out.exit_code(), 0);
}

#[test]
fn stochastic_subcommand_requires_seed() {
    assert!(sweep::run(Subcommand::CartanProbe, &config(DIAGONAL, &[]), 1).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(SweepConfig::parse(DIAGONAL, &["potential.rho=1.5".into()]).is_err());
    assert!(SweepConfig::parse(&format!("{DIAGONAL}\n[extra]\nx = 1\n"), &[]).is_err());
    assert!(SweepConfig::parse(DIAGONAL, &["grid.n=[]".into()]).is_err());
}

#[test]
fn written_files_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = sweep::run(Subcommand::Green, &config(DIAGONAL, &[]), 1).unwrap();
    let paths = out.write(dir.path()).unwrap();
    assert!(paths.iter().any(|p| p.ends_with("green.csv")));
    assert!(paths.iter().any(|p| p.ends_with("green.json")));
    let csv = std::fs::read_to_string(dir.path().join("green.csv")).unwrap();
    let first = csv.lines().next().unwrap();
    assert!(first.starts_with("# qpgl ") && first.contains("subcommand=green") && first.contains("config_sha256="));
    assert!(csv.contains("\r\n"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("green.json")).unwrap()).unwrap();
    assert_eq!(json["records"].as_array().unwrap().len(), 3);
}

#[test]
fn selftest_passes() {
    let out = sweep::selftest(2);
    assert_eq!(out.exit_code(), 0, "{}", out.json());
}
