//! Batch sweeps over `(N, ε, ω, Θ, E, δ)` grids.
//!
//! A sweep expands the configured axes into tasks, runs them through an
//! [`Executor`] and buffers the results in task-index order, so the emitted
//! CSV and JSON are byte-identical for every worker count. A failing task
//! never stops the sweep: it becomes a record with a non-empty `status`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::format::{g17, g17_list};
use crate::resonance::{first_step_delta, first_step_epsilon};

mod config;
mod selftest;
mod tasks;

pub use config::{
    CoreShape, EpsilonAxis, GridConfig, LatticeConfig, Options, PotentialConfig, RealAxis, RegionConfig, RunConfig,
    SweepConfig, VectorAxis,
};
pub use selftest::{run_selftest, SuiteOutcome};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subcommand {
    Assemble,
    Green,
    LdtScan,
    ResonanceMeasure,
    DoubleResonance,
    CartanProbe,
    CouplingVerify,
    Witness,
    Duality,
    SpectrumWindow,
    Selftest,
}

impl Subcommand {
    pub const ALL: [Subcommand; 11] = [
        Subcommand::Assemble,
        Subcommand::Green,
        Subcommand::LdtScan,
        Subcommand::ResonanceMeasure,
        Subcommand::DoubleResonance,
        Subcommand::CartanProbe,
        Subcommand::CouplingVerify,
        Subcommand::Witness,
        Subcommand::Duality,
        Subcommand::SpectrumWindow,
        Subcommand::Selftest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Assemble => "assemble",
            Subcommand::Green => "green",
            Subcommand::LdtScan => "ldt-scan",
            Subcommand::ResonanceMeasure => "resonance-measure",
            Subcommand::DoubleResonance => "double-resonance",
            Subcommand::CartanProbe => "cartan-probe",
            Subcommand::CouplingVerify => "coupling-verify",
            Subcommand::Witness => "witness",
            Subcommand::Duality => "duality",
            Subcommand::SpectrumWindow => "spectrum-window",
            Subcommand::Selftest => "selftest",
        }
    }

    /// Draws per-task random numbers.
    fn stochastic(self) -> bool {
        matches!(self, Subcommand::CartanProbe | Subcommand::CouplingVerify)
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown subcommand `{s}`")))
    }
}

/// One output value, rendered to CSV and JSON from the same source.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Reals(Vec<f64>),
    Ints(Vec<i64>),
    /// Structured detail; compact JSON in CSV.
    Json(Value),
    #[default]
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Real(x) => g17(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Reals(xs) => g17_list(xs),
            Cell::Ints(xs) => xs.iter().map(i64::to_string).collect::<Vec<_>>().join(";"),
            Cell::Json(v) => v.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Real(x) => json!(x),
            Cell::Int(i) => json!(i),
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
            Cell::Reals(xs) => json!(xs),
            Cell::Ints(xs) => json!(xs),
            Cell::Json(v) => v.clone(),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<Vec<f64>> for Cell {
    fn from(x: Vec<f64>) -> Self {
        Cell::Reals(x)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Empty, Into::into)
    }
}

/// Named cells of one record.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Row(Vec<(String, Cell)>);

impl Row {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<Cell>) -> &mut Self {
        let value = value.into();
        match self.0.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.0.push((key.to_string(), value)),
        }
        self
    }

    pub fn with(mut self, key: &str, value: impl Into<Cell>) -> Self {
        self.set(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&Cell> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn real(&self, key: &str) -> Option<f64> {
        match self.get(key)? {
            Cell::Real(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn flag(&self, key: &str) -> Option<bool> {
        match self.get(key)? {
            Cell::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        match self.get(key)? {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Task failed or refused.
    pub fn failed(&self) -> bool {
        self.text("status").is_some_and(|s| !s.is_empty())
    }

    fn json(&self) -> Value {
        Value::Object(self.0.iter().map(|(k, v)| (k.clone(), v.json())).collect::<Map<_, _>>())
    }
}

/// A CSV table with a fixed header; missing cells are written empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File name suffix; empty for the main table.
    pub suffix: String,
    pub header: Vec<String>,
    pub rows: Vec<Row>,
}

impl Table {
    fn new(suffix: &str, header: &[&str]) -> Self {
        Self { suffix: suffix.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column(&self, key: &str) -> Vec<Option<&Cell>> {
        self.rows.iter().map(|r| r.get(key)).collect()
    }

    fn to_csv(&self, provenance: &Provenance) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            let cells: Vec<String> =
                self.header.iter().map(|h| row.get(h).map_or_else(String::new, Cell::csv)).collect();
            w.write_record(&cells).map_err(csv_err)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8 cells");
        Ok(format!("{}\r\n{body}", provenance.header_line()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Identifies an output: artifact version, config digest, seed, timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub subcommand: String,
    pub version: String,
    pub config_digest: String,
    pub seed: Option<u64>,
    /// From `SOURCE_DATE_EPOCH`, so reruns stay byte-identical.
    pub timestamp: String,
}

impl Provenance {
    pub fn new(subcommand: Subcommand, config_digest: String, seed: Option<u64>) -> Self {
        Self {
            subcommand: subcommand.name().into(),
            version: VERSION.into(),
            config_digest,
            seed,
            timestamp: std::env::var("SOURCE_DATE_EPOCH").unwrap_or_else(|_| "unset".into()),
        }
    }

    pub fn header_line(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".into(), |s| s.to_string());
        format!(
            "# qpgl {} subcommand={} config_sha256={} seed={} timestamp={}",
            self.version, self.subcommand, self.config_digest, seed, self.timestamp
        )
    }

    fn json(&self) -> Value {
        json!({
            "subcommand": self.subcommand,
            "version": self.version,
            "config_sha256": self.config_digest,
            "seed": self.seed,
            "timestamp": self.timestamp,
        })
    }
}

/// Records, summary and provenance of one run.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub subcommand: Subcommand,
    pub provenance: Provenance,
    /// `tables[0]` holds one record per task (several for `coupling-verify`).
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
    /// Extra text files, e.g. matrix dumps: `(file name, body without header)`.
    pub files: Vec<(String, String)>,
}

impl SweepResult {
    pub fn records(&self) -> &[Row] {
        &self.tables[0].rows
    }

    /// Records whose status starts with `error`.
    pub fn errored(&self) -> usize {
        self.records().iter().filter(|r| r.text("status").is_some_and(|s| s.starts_with("error"))).count()
    }

    /// Exit status of the run: 0 iff no task errored.
    pub fn exit_code(&self) -> i32 {
        if self.errored() == 0 {
            0
        } else {
            1
        }
    }

    pub fn csv(&self, table: usize) -> Result<String> {
        self.tables[table].to_csv(&self.provenance)
    }

    pub fn json(&self) -> String {
        let records: Vec<Value> = self.tables[0].rows.iter().map(Row::json).collect();
        let mut doc = json!({
            "provenance": self.provenance.json(),
            "summary": Value::Object(self.summary.clone()),
            "records": records,
        });
        for t in &self.tables[1..] {
            doc[t.suffix.as_str()] = Value::Array(t.rows.iter().map(Row::json).collect());
        }
        let mut s = serde_json::to_string_pretty(&doc).expect("json");
        s.push('\n');
        s
    }

    /// Writes `<name>.csv`, `<name>_<suffix>.csv`, `<name>.json` and extra files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let name = self.subcommand.name();
        let mut written = Vec::new();
        for (i, t) in self.tables.iter().enumerate() {
            let file = if t.suffix.is_empty() { format!("{name}.csv") } else { format!("{name}_{}.csv", t.suffix) };
            let path = dir.join(file);
            std::fs::write(&path, self.csv(i)?)?;
            written.push(path);
        }
        let path = dir.join(format!("{name}.json"));
        std::fs::write(&path, self.json())?;
        written.push(path);
        for (file, body) in &self.files {
            let path = dir.join(file);
            std::fs::write(&path, format!("{}\n{body}", self.provenance.header_line()))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Coupling of a task: explicit or tied to the first-step `δ` at `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    Value(f64),
    FirstStep,
}

/// One grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub index: usize,
    pub n: usize,
    pub epsilon: f64,
    pub omega: Vec<f64>,
    pub theta: Vec<f64>,
    pub energy: f64,
    /// Explicit resonance width; `None` means the subcommand's default.
    pub delta: Option<f64>,
}

impl Task {
    fn ident(&self, row: &mut Row) {
        row.set("task", self.index)
            .set("N", self.n)
            .set("epsilon", self.epsilon)
            .set("omega", self.omega.clone())
            .set("theta", self.theta.clone())
            .set("E", self.energy);
        if let Some(d) = self.delta {
            row.set("delta", d);
        }
    }
}

/// Expands the configured axes in the order `N, ε, ω, Θ, E, δ` (last fastest).
pub fn build_tasks(cfg: &SweepConfig, sub: Subcommand) -> Result<Vec<Task>> {
    let bs = cfg.block_structure()?;
    let seed = cfg.run.seed;
    let g = &cfg.grid;
    let omegas = g.omega.realize("grid.omega", bs.b(), seed, 0)?;
    let thetas = match (&g.theta, sub) {
        (_, Subcommand::SpectrumWindow) | (None, _) => vec![vec![0.0; bs.d()]],
        (Some(axis), _) => axis.realize("grid.theta", bs.d(), seed, 1)?,
    };
    let energies = match &g.energy {
        Some(axis) => axis.realize("grid.energy", seed, 2)?,
        None => vec![0.0],
    };
    let couplings = match &g.epsilon {
        EpsilonAxis::Rule(r) if r == "first-step" => vec![Coupling::FirstStep],
        EpsilonAxis::Rule(r) => return Err(Error::Config(format!("grid.epsilon: unknown rule `{r}`"))),
        EpsilonAxis::Axis(a) => a.realize("grid.epsilon", seed, 3)?.into_iter().map(Coupling::Value).collect(),
    };
    let deltas: Vec<Option<f64>> = match &g.delta {
        Some(axis) => axis.realize("grid.delta", seed, 4)?.into_iter().map(Some).collect(),
        None => vec![None],
    };
    if let Some(d) = deltas.iter().flatten().find(|d| !(**d > 0.0)) {
        return Err(Error::Config(format!("grid.delta: widths must be positive, got {d}")));
    }
    let mut out = Vec::new();
    for &n in &g.n {
        for c in &couplings {
            let epsilon = match *c {
                Coupling::Value(e) => e,
                Coupling::FirstStep => {
                    first_step_epsilon(first_step_delta(n, cfg.schedule.c1, bs.b(), cfg.schedule.c)?, n, bs.b())
                }
            };
            for w in &omegas {
                for t in &thetas {
                    for &e in &energies {
                        for &d in &deltas {
                            out.push(Task {
                                index: out.len(),
                                n,
                                epsilon,
                                omega: w.clone(),
                                theta: t.clone(),
                                energy: e,
                                delta: d,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Runs `sub` over the configured grid with `workers` threads.
pub fn run(sub: Subcommand, cfg: &SweepConfig, workers: usize) -> Result<SweepResult> {
    let provenance = Provenance::new(sub, cfg.digest(), cfg.run.seed);
    if sub == Subcommand::Selftest {
        return Ok(selftest::selftest_result(provenance, &Executor::with_workers(workers)));
    }
    if sub.stochastic() && cfg.run.seed.is_none() {
        return Err(Error::Config(format!("{sub} draws random samples and needs run.seed or --seed")));
    }
    let tasks = build_tasks(cfg, sub)?;
    tasks::execute(sub, cfg, &tasks, provenance, &Executor::with_workers(workers))
}

/// `selftest` without a configuration file.
pub fn selftest(workers: usize) -> SweepResult {
    let provenance = Provenance::new(Subcommand::Selftest, "none".into(), None);
    selftest::selftest_result(provenance, &Executor::with_workers(workers))
}
