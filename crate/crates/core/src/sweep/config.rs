use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::{enumerate_region, BlockStructure, MultiIndex, Region, RegionDescriptor, Restriction};
use crate::potential::{ModelParams, PotentialModel};
use crate::resonance::ScaleSchedule;
use crate::rng::{task_rng, GRID_STREAM};

/// Everything a sweep needs, read from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub lattice: LatticeConfig,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub schedule: ScaleSchedule,
    pub grid: GridConfig,
    #[serde(default)]
    pub region: RegionConfig,
    #[serde(default)]
    pub options: Options,
    #[serde(default)]
    pub run: RunConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    /// Block sizes `b_1, …, b_d`.
    pub blocks: Vec<usize>,
}

/// A named model or a coefficient table file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub table: Option<PathBuf>,
    pub rho: f64,
    #[serde(default = "one")]
    pub k_cut: u64,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn one() -> u64 {
    1
}

/// Exactly one of `values`, `linspace = [start, stop, count]` or
/// `uniform = [low, high, count]` (seeded).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealAxis {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linspace: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<[f64; 3]>,
}

/// Like [`RealAxis`] but every sample is a vector. `linspace` moves all
/// components together; `uniform` draws them independently.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorAxis {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linspace: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<[f64; 3]>,
}

/// Coupling axis: explicit reals, or `"first-step"` for `ε = δ/(2(2N+1)^b)`
/// with the first-step `δ` at each `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonAxis {
    Rule(String),
    Axis(RealAxis),
}

impl Default for EpsilonAxis {
    fn default() -> Self {
        EpsilonAxis::Axis(RealAxis { values: Some(vec![0.0]), ..RealAxis::default() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: Vec<usize>,
    #[serde(default)]
    pub theta: Option<VectorAxis>,
    #[serde(default)]
    pub energy: Option<RealAxis>,
    pub omega: VectorAxis,
    #[serde(default)]
    pub epsilon: EpsilonAxis,
    /// Resonance width; defaults to the first-step `δ` of each subcommand.
    #[serde(default)]
    pub delta: Option<RealAxis>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    #[serde(default)]
    pub center: Option<Vec<i64>>,
    /// `"full"` for the cube, or one of `"none"`, `"neg"`, `"pos"` per coordinate.
    #[serde(default)]
    pub restrictions: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoreShape {
    #[default]
    None,
    Center,
    Spike,
}

/// Per-subcommand knobs; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    /// Section coordinate, 1-based.
    pub j: usize,
    pub samples: usize,
    /// Half-size of the Cartan sub-region around the center.
    pub sub_radius: usize,
    /// Patch size for the global norm check; `N/3` when absent.
    pub patch: Option<usize>,
    pub core: CoreShape,
    /// Decay constant asserted by the coupling-decay check.
    pub constant: f64,
    /// Perturbation size relative to the allowed `e^{−3ρ̄N−ρ̄r}`.
    pub perturbation: f64,
    pub rho_bar: Option<f64>,
    pub poly_c: f64,
    pub poly_degree: Option<f64>,
    pub step: f64,
    pub halo: f64,
    /// `[start, stop, count]` per continuum coordinate.
    pub x_grid: [f64; 3],
    pub phase: Option<Vec<f64>>,
    pub energy_shift: f64,
    /// Also dump `G` matrices in `green`.
    pub dump: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            j: 1,
            samples: 200,
            sub_radius: 0,
            patch: None,
            core: CoreShape::None,
            constant: 1.0,
            perturbation: 0.5,
            rho_bar: None,
            poly_c: 1.0,
            poly_degree: None,
            step: 0.05,
            halo: 0.5,
            x_grid: [-6.0, 6.0, 25.0],
            phase: None,
            energy_shift: 0.0,
            dump: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: None, workers: 1, out: PathBuf::from("out") }
    }
}

impl SweepConfig {
    /// Reads `path` and applies `key=value` overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, overrides)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let cfg: Self = if overrides.is_empty() {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
            for o in overrides {
                apply_override(&mut table, o)?;
            }
            table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.block_structure()?;
        self.schedule.validate()?;
        if self.grid.n.is_empty() {
            return Err(Error::Config("grid.n is empty".into()));
        }
        if self.options.j == 0 || self.options.j > self.lattice.blocks.len() {
            return Err(Error::Config(format!("options.j = {} outside 1..={}", self.options.j, self.lattice.blocks.len())));
        }
        if !(self.potential.rho > 0.0 && self.potential.rho < 1.0) {
            return Err(Error::Config(format!("potential.rho must lie in (0, 1), got {}", self.potential.rho)));
        }
        if self.potential.model.is_some() == self.potential.table.is_some() {
            return Err(Error::Config("potential needs exactly one of `model` or `table`".into()));
        }
        Ok(())
    }

    pub fn block_structure(&self) -> Result<BlockStructure> {
        BlockStructure::new(self.lattice.blocks.clone()).map_err(|e| Error::Config(format!("lattice.blocks: {e}")))
    }

    pub fn potential_model(&self) -> Result<PotentialModel> {
        let bs = self.block_structure()?;
        let p = &self.potential;
        if let Some(name) = &p.model {
            let params = ModelParams { rho: p.rho, k_cut: p.k_cut, seed: p.seed.or(self.run.seed) };
            PotentialModel::from_named_model(name, &bs, &params)
        } else {
            let path = self.base_dir.join(p.table.as_ref().expect("validated"));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("cannot read potential table {}: {e}", path.display())))?;
            PotentialModel::from_table(&text, &bs, p.rho)
        }
    }

    /// Elementary region of size `n` described by `[region]`.
    pub fn region(&self, n: usize) -> Result<Region> {
        let b: usize = self.lattice.blocks.iter().sum();
        let center = MultiIndex::new(self.region.center.clone().unwrap_or_else(|| vec![0; b]));
        if center.len() != b {
            return Err(Error::Config(format!("region.center has {} entries, b = {b}", center.len())));
        }
        let restrictions = match self.region.restrictions.as_deref() {
            None => vec![Restriction::None; b],
            Some([one]) if one == "full" => vec![Restriction::None; b],
            Some(tags) => tags
                .iter()
                .map(|t| match t.as_str() {
                    "none" | "full" => Ok(Restriction::None),
                    "neg" => Ok(Restriction::Neg),
                    "pos" => Ok(Restriction::Pos),
                    other => Err(Error::Config(format!("unknown restriction tag `{other}`"))),
                })
                .collect::<Result<_>>()?,
        };
        Ok(enumerate_region(&RegionDescriptor::new(center, n, restrictions)?))
    }

    pub fn region_center(&self) -> MultiIndex {
        let b: usize = self.lattice.blocks.iter().sum();
        MultiIndex::new(self.region.center.clone().unwrap_or_else(|| vec![0; b]))
    }

    pub fn region_is_cube(&self) -> bool {
        self.region.restrictions.as_ref().is_none_or(|t| t.iter().all(|s| s == "none" || s == "full"))
    }

    /// SHA-256 of the effective configuration, ignoring settings that cannot
    /// change results (worker count, output directory).
    pub fn digest(&self) -> String {
        let mut canon = self.clone();
        canon.run.workers = 0;
        canon.run.out = PathBuf::new();
        let json = serde_json::to_string(&canon).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, falling back to a bare string.
fn apply_override(table: &mut toml::Table, raw: &str) -> Result<()> {
    let (key, value) =
        raw.split_once('=').ok_or_else(|| Error::Config(format!("override `{raw}` is not key=value")))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(value.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn count_of(raw: f64, what: &str) -> Result<usize> {
    if raw >= 1.0 && raw.fract() == 0.0 {
        Ok(raw as usize)
    } else {
        Err(Error::Config(format!("{what}: count must be a positive integer, got {raw}")))
    }
}

fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![start];
    }
    (0..count).map(|i| start + (stop - start) * i as f64 / (count - 1) as f64).collect()
}

fn exactly_one(what: &str, set: [bool; 3]) -> Result<()> {
    if set.iter().filter(|s| **s).count() != 1 {
        return Err(Error::Config(format!("{what}: give exactly one of values, linspace, uniform")));
    }
    Ok(())
}

fn need_seed(seed: Option<u64>, what: &str) -> Result<u64> {
    seed.ok_or_else(|| Error::Config(format!("{what}: uniform sampling needs run.seed or --seed")))
}

impl RealAxis {
    pub fn realize(&self, what: &str, seed: Option<u64>, stream: u64) -> Result<Vec<f64>> {
        exactly_one(what, [self.values.is_some(), self.linspace.is_some(), self.uniform.is_some()])?;
        let out = if let Some(v) = &self.values {
            v.clone()
        } else if let Some([a, b, c]) = self.linspace {
            linspace(a, b, count_of(c, what)?)
        } else {
            let [lo, hi, c] = self.uniform.expect("checked");
            let mut rng = task_rng(need_seed(seed, what)?, GRID_STREAM - stream);
            (0..count_of(c, what)?).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect()
        };
        if out.is_empty() {
            return Err(Error::Config(format!("{what}: empty grid")));
        }
        Ok(out)
    }
}

impl VectorAxis {
    pub fn realize(&self, what: &str, dim: usize, seed: Option<u64>, stream: u64) -> Result<Vec<Vec<f64>>> {
        exactly_one(what, [self.values.is_some(), self.linspace.is_some(), self.uniform.is_some()])?;
        let out: Vec<Vec<f64>> = if let Some(v) = &self.values {
            if let Some(bad) = v.iter().find(|x| x.len() != dim) {
                return Err(Error::Config(format!("{what}: entry of length {} where {dim} is needed", bad.len())));
            }
            v.clone()
        } else if let Some([a, b, c]) = self.linspace {
            linspace(a, b, count_of(c, what)?).into_iter().map(|x| vec![x; dim]).collect()
        } else {
            let [lo, hi, c] = self.uniform.expect("checked");
            let mut rng = task_rng(need_seed(seed, what)?, GRID_STREAM - stream);
            (0..count_of(c, what)?).map(|_| (0..dim).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect()).collect()
        };
        if out.is_empty() {
            return Err(Error::Config(format!("{what}: empty grid")));
        }
        Ok(out)
    }
}
