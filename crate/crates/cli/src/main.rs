use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::Parser;
use qpgl_core::sweep::{self, Subcommand, SweepConfig, SweepResult};
use qpgl_core::Error;

const NAMES: [&str; 11] = [
    "assemble",
    "green",
    "ldt-scan",
    "resonance-measure",
    "double-resonance",
    "cartan-probe",
    "coupling-verify",
    "witness",
    "duality",
    "spectrum-window",
    "selftest",
];

/// Seeded sweeps over the momentum-space Green's function laboratory.
#[derive(Debug, Parser)]
#[command(name = "qpgl", version)]
struct Cli {
    #[arg(value_parser = PossibleValuesParser::new(NAMES))]
    subcommand: String,

    /// TOML configuration; optional for `selftest` only.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set schedule.c1=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads; defaults to `run.workers`.
    #[arg(long)]
    workers: Option<usize>,

    /// Output directory; defaults to `run.out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(cli: &Cli) -> Result<(SweepResult, PathBuf), Error> {
    let sub: Subcommand = cli.subcommand.parse()?;
    let Some(path) = &cli.config else {
        if sub != Subcommand::Selftest {
            return Err(Error::Config(format!("{sub} needs --config")));
        }
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        return Ok((sweep::selftest(cli.workers.unwrap_or(1)), out));
    };
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    let cfg = SweepConfig::load(path, &overrides)?;
    let workers = cli.workers.unwrap_or(cfg.run.workers);
    let out = cli.out.clone().unwrap_or_else(|| cfg.run.out.clone());
    Ok((sweep::run(sub, &cfg, workers)?, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, out) = match execute(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("qpgl: {e}");
            return ExitCode::from(2);
        }
    };
    let written = match result.write(&out) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("qpgl: cannot write results: {e}");
            return ExitCode::from(3);
        }
    };
    for path in &written {
        println!("wrote {}", path.display());
    }
    println!("{}", serde_json::Value::Object(result.summary.clone()));
    if result.exit_code() == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("qpgl: {} task(s) errored; see the status column", result.errored());
        ExitCode::from(1)
    }
}
