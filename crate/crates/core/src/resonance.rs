//! Resonance sets `X_N`, their exact one-dimensional sections, the
//! double-resonance annulus scan, the scale schedule and the Cartan probe.

use serde::{Deserialize, Serialize};

use crate::dual_green::{diagonal_symbol_raw, DualOperator};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::lattice::{cube_points, BlockStructure, Frequency, MultiIndex, Region};
use crate::rng::task_rng;

/// Per-`k` sections have measure at most `2√2·√δ ≤ 4√δ`.
pub const MEASURE_CONSTANT: f64 = 4.0;

/// Finite union of open intervals, sorted and pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct IntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl IntervalSet {
    /// Merges overlapping open intervals; empty ones are dropped.
    pub fn from_intervals(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|(a, b)| a < b);
        raw.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        let mut intervals: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            match intervals.last_mut() {
                Some(last) if a < last.1 => last.1 = last.1.max(b),
                _ => intervals.push((a, b)),
            }
        }
        Self { intervals }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn contains(&self, x: f64) -> bool {
        let i = self.intervals.partition_point(|(a, _)| *a < x);
        i > 0 && x < self.intervals[i - 1].1
    }
}

/// `X_N = ⋃_{|k|≤N} {Θ : |Σ_i(Θ_i + k_i·ω_i)² − E| < δ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceSpec {
    pub n: usize,
    pub delta: f64,
    pub energy: f64,
    pub omega: Frequency,
    pub bs: BlockStructure,
}

impl ResonanceSpec {
    pub fn new(n: usize, delta: f64, energy: f64, omega: Frequency, bs: BlockStructure) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Config(format!("resonance width δ must be positive, got {delta}")));
        }
        if omega.len() != bs.b() {
            return Err(Error::Structure(format!("ω has {} entries, b = {}", omega.len(), bs.b())));
        }
        Ok(Self { n, delta, energy, omega, bs })
    }

    /// `4(2N+1)^b √δ`.
    pub fn measure_bound(&self) -> f64 {
        MEASURE_CONSTANT * ((2 * self.n + 1) as f64).powi(self.bs.b() as i32) * self.delta.sqrt()
    }
}

/// First `|k| ≤ N` in lexicographic order with `Θ` resonant at `k`.
pub fn in_resonance(theta: &[f64], spec: &ResonanceSpec) -> Option<MultiIndex> {
    cube_points(spec.bs.b(), spec.n as i64).into_iter().find(|k| {
        (diagonal_symbol_raw(&spec.bs, theta, k.entries(), spec.omega.entries()) - spec.energy).abs() < spec.delta
    })
}

fn splice(j: usize, rest: &[f64], value: f64) -> Vec<f64> {
    let mut theta = Vec::with_capacity(rest.len() + 1);
    theta.extend_from_slice(&rest[..j]);
    theta.push(value);
    theta.extend_from_slice(&rest[j..]);
    theta
}

/// Exact section `{Θ_j : (Θ_j, Θ_j^¬) ∈ X_N}` as merged open intervals.
/// `j` is zero-based; `rest` holds the other `d − 1` coordinates in order.
pub fn section_intervals(j: usize, rest: &[f64], spec: &ResonanceSpec) -> Result<IntervalSet> {
    let d = spec.bs.d();
    if j >= d || rest.len() + 1 != d {
        return Err(Error::Structure(format!("section coordinate {j} with {} others, d = {d}", rest.len())));
    }
    let theta = splice(j, rest, 0.0);
    let omega = spec.omega.entries();
    let delta = spec.delta;
    let mut raw = Vec::new();
    for k in cube_points(spec.bs.b(), spec.n as i64) {
        let ke = k.entries();
        let mut off = 0.0;
        let mut shift = 0.0;
        for i in 0..d {
            let s: f64 = spec.bs.block_range(i).map(|c| ke[c] as f64 * omega[c]).sum();
            if i == j {
                shift = s;
            } else {
                let u = theta[i] + s;
                off += u * u;
            }
        }
        let s = spec.energy - off;
        if s + delta <= 0.0 {
            continue;
        }
        let outer = (s + delta).sqrt();
        if s - delta < 0.0 {
            raw.push((-outer - shift, outer - shift));
        } else {
            let inner = (s - delta).sqrt();
            raw.push((-outer - shift, -inner - shift));
            raw.push((inner - shift, outer - shift));
        }
    }
    Ok(IntervalSet::from_intervals(raw))
}

/// Lebesgue measure of the section of `X_N` along coordinate `j`.
pub fn section_measure(j: usize, rest: &[f64], spec: &ResonanceSpec) -> Result<f64> {
    Ok(section_intervals(j, rest, spec)?.measure())
}

/// `δ = C^{-2} (2N+1)^{-2b} e^{-2N^{c1}}`.
pub fn first_step_delta(n: usize, c1: f64, b: usize, c: f64) -> Result<f64> {
    if n < 1 || !(c1 > 0.0 && c1 < 0.25) || !(c > 0.0) {
        return Err(Error::Config(format!("first-step δ needs N ≥ 1, c1 ∈ (0, 1/4), C > 0; got N={n}, c1={c1}, C={c}")));
    }
    let nf = n as f64;
    Ok(c.powi(-2) * (2.0 * nf + 1.0).powf(-2.0 * b as f64) * (-2.0 * nf.powf(c1)).exp())
}

/// Largest coupling for which the first-step Neumann bounds hold at scale `N`:
/// `δ / (2(2N+1)^b)`.
pub fn first_step_epsilon(delta: f64, n: usize, b: usize) -> f64 {
    delta / (2.0 * ((2 * n + 1) as f64).powi(b as i32))
}

/// Constants of the multi-scale induction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleSchedule {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub n0: usize,
    /// Measure constant in the first-step `δ`.
    #[serde(rename = "C")]
    pub c: f64,
    pub epsilon: f64,
    /// Clamp `N1` into `[1, N − 1]`; the literal formula exceeds `N` below `N ≈ 3.5e15`.
    pub clamp_n1: bool,
}

impl Default for ScaleSchedule {
    fn default() -> Self {
        Self { c1: 0.2, c2: 0.3, c3: 0.6, c4: 0.9, n0: 3, c: 4.0, epsilon: 1e-3, clamp_n1: true }
    }
}

impl ScaleSchedule {
    /// Checks the hard constraints; returns advisory flags for the soft ones.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut flags = Vec::new();
        if !(self.c1 > 0.0 && self.c1 < 0.25) {
            return Err(Error::Config(format!("schedule needs 0 < c1 < 1/4, got c1 = {}", self.c1)));
        }
        if !(0.0 < self.c2 && self.c2 < self.c3 && self.c3 < self.c4 && self.c4 < 1.0) {
            return Err(Error::Config(format!(
                "schedule needs 0 < c2 < c3 < c4 < 1, got ({}, {}, {})",
                self.c2, self.c3, self.c4
            )));
        }
        if !(self.c > 0.0) {
            return Err(Error::Config(format!("schedule constant C must be positive, got {}", self.c)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("schedule ε must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.n0 < 2 {
            return Err(Error::Config(format!("schedule N0 must be at least 2, got {}", self.n0)));
        }
        if self.c1 >= self.c3 / 10.0 {
            flags.push(format!("c1 = {} is not below c3/10 = {}", self.c1, self.c3 / 10.0));
        }
        if !self.clamp_n1 {
            if let Some(n) = (self.n0..self.n0 + 64).find(|&n| self.n1(n) >= n) {
                return Err(Error::Config(format!(
                    "unclamped schedule gives N1({n}) = {} ≥ N; enable clamp_n1",
                    self.n1(n)
                )));
            }
        } else if self.n1_unclamped(self.n0) >= self.n0 {
            flags.push(format!("N1 clamped below N (literal N1({}) = {})", self.n0, self.n1_unclamped(self.n0)));
        }
        Ok(flags)
    }

    /// `⌈(ln N)^{2/c1}⌉`, saturating.
    pub fn n1_unclamped(&self, n: usize) -> usize {
        if n <= 1 {
            return 0;
        }
        (n as f64).ln().powf(2.0 / self.c1).ceil().min(usize::MAX as f64) as usize
    }

    pub fn n1(&self, n: usize) -> usize {
        let raw = self.n1_unclamped(n);
        if self.clamp_n1 {
            raw.min(n.saturating_sub(1)).max(1)
        } else {
            raw
        }
    }

    /// `⌈N1^{2/c1}⌉`, saturating.
    pub fn n2(&self, n: usize) -> usize {
        (self.n1(n) as f64).powf(2.0 / self.c1).ceil().min(usize::MAX as f64) as usize
    }

    /// Half-width `|ln ε|^{1/(2c1)}` of the energy window `I_ε`.
    pub fn energy_halfwidth(&self) -> f64 {
        self.epsilon.ln().abs().powf(1.0 / (2.0 * self.c1))
    }

    pub fn energy_in_window(&self, energy: f64) -> bool {
        energy.abs() <= self.energy_halfwidth()
    }

    /// Integers `M` with `N^{c3}/10 < M < 10 N^{c4}`.
    pub fn annulus_range(&self, n: usize) -> Result<(usize, usize)> {
        let nf = n as f64;
        let lo_real = nf.powf(self.c3) / 10.0;
        let hi_real = 10.0 * nf.powf(self.c4);
        let lo = lo_real.floor() as usize + 1;
        let hi = (hi_real.ceil() as usize).saturating_sub(1);
        if n == 0 || lo > hi {
            return Err(Error::Config(format!("no integer M in ({lo_real}, {hi_real}) at N = {n}")));
        }
        Ok((lo, hi))
    }

    /// First-step width at the inner scale `N1(N)`.
    pub fn first_step_delta(&self, n: usize, b: usize) -> Result<f64> {
        first_step_delta(self.n1(n).max(1), self.c1, b, self.c)
    }
}

/// Annulus statistics for one candidate `M`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnulusRecord {
    pub m: usize,
    pub annulus_size: usize,
    pub failures: usize,
    pub first_failure: Option<MultiIndex>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanOutcome {
    pub n: usize,
    pub n1: usize,
    pub delta: f64,
    pub m_range: (usize, usize),
    /// First `M` whose annulus avoids `X_{N1}` entirely.
    pub found: Option<usize>,
    /// Non-empty candidates in increasing order up to and including the first success.
    pub records: Vec<AnnulusRecord>,
}

/// Inner radius `M^{1/(10b)}` of the annulus.
pub fn annulus_inner_radius(m: usize, b: usize) -> f64 {
    (m as f64).powf(1.0 / (10.0 * b as f64))
}

/// Scans `M` upward for an annulus `[−M,M]^b ∖ [−M^{1/(10b)}, M^{1/(10b)}]^b`
/// with `Θ + kω ∉ X_{N1}` throughout. `delta` overrides the first-step width.
#[allow(clippy::too_many_arguments)]
pub fn double_resonance_scan(
    theta: &[f64],
    energy: f64,
    omega: &Frequency,
    bs: &BlockStructure,
    n: usize,
    schedule: &ScaleSchedule,
    delta: Option<f64>,
) -> Result<ScanOutcome> {
    let b = bs.b();
    if theta.len() != bs.d() || omega.len() != b {
        return Err(Error::Structure("Θ or ω does not match the block structure".into()));
    }
    if !schedule.energy_in_window(energy) {
        return Err(Error::Precondition(format!(
            "|E| = {} outside I_ε (half-width {})",
            energy.abs(),
            schedule.energy_halfwidth()
        )));
    }
    let theta_norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
    if theta_norm > 100.0 * (b * n * n) as f64 {
        return Err(Error::Precondition(format!("|Θ| = {theta_norm} exceeds 100bN²")));
    }
    let (lo, hi) = schedule.annulus_range(n)?;
    let n1 = schedule.n1(n);
    let delta = match delta {
        Some(d) if d > 0.0 => d,
        Some(d) => return Err(Error::Config(format!("δ override must be positive, got {d}"))),
        None => schedule.first_step_delta(n, b)?,
    };

    // Θ + kω ∈ X_{N1} iff some j with |j − k| ≤ N1 has |diag(Θ, j) − E| < δ.
    let reach = (hi + n1) as i64;
    let resonant: Vec<MultiIndex> = cube_points(b, reach)
        .into_iter()
        .filter(|j| (diagonal_symbol_raw(bs, theta, j.entries(), omega.entries()) - energy).abs() < delta)
        .collect();
    let failing = mark_failures(b, hi, n1, &resonant)?;

    let mut records = Vec::new();
    let mut found = None;
    for m in lo..=hi {
        let inner = annulus_inner_radius(m, b);
        let inner_int = inner.floor() as usize;
        let total = (2 * m + 1).pow(b as u32) - (2 * inner_int.min(m) + 1).pow(b as u32);
        if total == 0 {
            // An empty annulus is not a witness.
            continue;
        }
        let mut failures = 0;
        let mut first_failure = None;
        for k in &failing {
            let s = k.sup_norm() as usize;
            if s <= m && s as f64 > inner {
                failures += 1;
                if first_failure.is_none() {
                    first_failure = Some(k.clone());
                }
            }
        }
        records.push(AnnulusRecord { m, annulus_size: total, failures, first_failure });
        if failures == 0 {
            found = Some(m);
            break;
        }
    }
    Ok(ScanOutcome { n, n1, delta, m_range: (lo, hi), found, records })
}

/// Points of `[−hi,hi]^b` within sup-distance `n1` of some resonant index,
/// in lexicographic order.
fn mark_failures(b: usize, hi: usize, n1: usize, resonant: &[MultiIndex]) -> Result<Vec<MultiIndex>> {
    let side = 2 * hi + 1;
    let cells = side.checked_pow(b as u32).filter(|&c| c <= 50_000_000).ok_or_else(|| {
        Error::Config(format!("annulus grid [−{hi},{hi}]^{b} too large to scan"))
    })?;
    let mut marked = vec![false; cells];
    let hi = hi as i64;
    let n1 = n1 as i64;
    for j in resonant {
        let ranges: Vec<(i64, i64)> =
            j.entries().iter().map(|&c| ((c - n1).max(-hi), (c + n1).min(hi))).collect();
        if ranges.iter().any(|(a, z)| a > z) {
            continue;
        }
        let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        'odometer: loop {
            let flat = cur.iter().fold(0usize, |acc, &c| acc * side + (c + hi) as usize);
            marked[flat] = true;
            let mut axis = b;
            loop {
                if axis == 0 {
                    break 'odometer;
                }
                axis -= 1;
                if cur[axis] < ranges[axis].1 {
                    cur[axis] += 1;
                    break;
                }
                cur[axis] = ranges[axis].0;
            }
        }
    }
    Ok(marked
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(mut flat, _)| {
            let mut e = vec![0i64; b];
            for slot in e.iter_mut().rev() {
                *slot = (flat % side) as i64 - hi;
                flat /= side;
            }
            MultiIndex::new(e)
        })
        .collect())
}

/// Fraction of sampled `(Θ, E)` admitting a double-resonance-free annulus at a fixed `ω`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyDiagnostic {
    pub omega: Frequency,
    pub n: usize,
    pub outcomes: Vec<Option<usize>>,
    pub success_rate: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn frequency_diagnostic(
    omega: &Frequency,
    bs: &BlockStructure,
    samples: &[(Vec<f64>, f64)],
    n: usize,
    schedule: &ScaleSchedule,
    delta: Option<f64>,
) -> Result<FrequencyDiagnostic> {
    let outcomes = samples
        .iter()
        .map(|(theta, e)| double_resonance_scan(theta, *e, omega, bs, n, schedule, delta).map(|o| o.found))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrequencyDiagnostic { omega: omega.clone(), n, success_rate: success_rate(&outcomes), outcomes })
}

pub fn success_rate(outcomes: &[Option<usize>]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().filter(|o| o.is_some()).count() as f64 / outcomes.len() as f64
}

/// Result of the large-shift no-resonance check.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FarField {
    NotApplicable { reason: String },
    Holds { min_gap: f64 },
    Violated { witness: MultiIndex, gap: f64 },
}

/// With `|Θ| ≤ 100bN²`, `|E| ≤ N` and the shifted coordinates `y_I` outside
/// `B(200bN²)`, checks `diag(Θ + y, k) − E ≥ N⁴` for every `|k| ≤ radius`.
/// `y` has one entry per block; the shifted set `I` is its support.
pub fn no_resonance_far_field(
    theta: &[f64],
    energy: f64,
    omega: &Frequency,
    bs: &BlockStructure,
    n: usize,
    y: &[f64],
    radius: usize,
) -> FarField {
    let b = bs.b() as f64;
    let nf = n as f64;
    let theta_norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
    if theta_norm > 100.0 * b * nf * nf {
        return FarField::NotApplicable { reason: format!("|Θ| = {theta_norm} exceeds 100bN²") };
    }
    if energy.abs() > nf {
        return FarField::NotApplicable { reason: format!("|E| = {} exceeds N", energy.abs()) };
    }
    let y_norm = y.iter().map(|t| t * t).sum::<f64>().sqrt();
    if y_norm <= 200.0 * b * nf * nf {
        return FarField::NotApplicable { reason: format!("|y| = {y_norm} within 200bN²") };
    }
    let shifted: Vec<f64> = theta.iter().zip(y).map(|(t, s)| t + s).collect();
    let floor = nf.powi(4);
    let mut min_gap = f64::INFINITY;
    for k in cube_points(bs.b(), radius as i64) {
        let gap = diagonal_symbol_raw(bs, &shifted, k.entries(), omega.entries()) - energy;
        if gap < floor {
            return FarField::Violated { witness: k, gap };
        }
        min_gap = min_gap.min(gap);
    }
    FarField::Holds { min_gap }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSample {
    pub y: f64,
    pub norm: f64,
    pub is_bad: bool,
}

/// Inputs of [`cartan_probe`].
#[derive(Debug, Clone)]
pub struct CartanProbe {
    pub region: Region,
    pub sub_region: Region,
    pub operator: DualOperator,
    /// Zero-based coordinate that is varied.
    pub j: usize,
    pub energy: f64,
    pub n_tilde: usize,
    pub n1: usize,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CartanEstimate {
    pub interval_length: f64,
    pub samples: usize,
    pub bad: usize,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `e^{−Ñ^{1/3}}`.
    pub threshold: f64,
    /// Threshold lies at or above the lower confidence limit.
    pub within_bound: bool,
    pub sub_region_contained: bool,
    pub sub_region_diam_ok: bool,
    pub records: Vec<ProbeSample>,
}

/// Monte-Carlo measure of `Y_Θ = {y : |y − Θ_j| ≤ e^{−10ρN1}, ‖G_Λ(E;(y,Θ_j^¬))‖ ≥ e^{√Ñ}}`.
pub fn cartan_probe(probe: &CartanProbe, exec: &Executor) -> Result<CartanEstimate> {
    let op = &probe.operator;
    let d = op.block_structure().d();
    if probe.j >= d {
        return Err(Error::Structure(format!("coordinate {} out of range for d = {d}", probe.j)));
    }
    if probe.region.is_empty() {
        return Err(Error::Structure("Cartan probe on an empty region".into()));
    }
    let rho = op.potential().rho();
    let half = (-10.0 * rho * probe.n1 as f64).exp();
    let center = op.theta()[probe.j];
    let cutoff = (probe.n_tilde as f64).sqrt().exp();
    let records = exec.map(probe.samples, |i| {
        let mut rng = task_rng(probe.seed, i as u64);
        let u: f64 = rand::Rng::gen(&mut rng);
        let y = center - half + 2.0 * half * u;
        let mut theta = op.theta().to_vec();
        theta[probe.j] = y;
        let norm = op.with_theta(theta).resolvent_norm(&probe.region, probe.energy);
        ProbeSample { y, norm, is_bad: !(norm < cutoff) }
    });
    let bad = records.iter().filter(|r| r.is_bad).count();
    let length = 2.0 * half;
    let fraction = if probe.samples == 0 { 0.0 } else { bad as f64 / probe.samples as f64 };
    let (lo, hi) = wilson_interval(bad, probe.samples, 1.96);
    let threshold = (-(probe.n_tilde as f64).powf(1.0 / 3.0)).exp();
    let b = op.block_structure().b() as f64;
    Ok(CartanEstimate {
        interval_length: length,
        samples: probe.samples,
        bad,
        estimate: fraction * length,
        ci_low: lo * length,
        ci_high: hi * length,
        threshold,
        within_bound: lo * length <= threshold,
        sub_region_contained: probe.sub_region.is_subset_of(&probe.region),
        sub_region_diam_ok: probe.sub_region.diam() as f64 <= 4.0 * (probe.n_tilde as f64).powf(1.0 / (10.0 * b)),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{enumerate_region, RegionDescriptor};
    use crate::oracle;
    use crate::potential::{ModelParams, PotentialModel};
    use proptest::prelude::*;
    use rand::Rng;

    fn bs(blocks: &[usize]) -> BlockStructure {
        BlockStructure::new(blocks.to_vec()).unwrap()
    }

    fn freq(w: &[f64]) -> Frequency {
        Frequency::new(w.to_vec()).unwrap()
    }

    #[test]
    fn interval_merge() {
        let s = IntervalSet::from_intervals(vec![(2.0, 3.0), (0.0, 1.0), (0.5, 1.5), (1.5, 2.0), (4.0, 4.0)]);
        assert_eq!(s.intervals(), &[(0.0, 1.5), (1.5, 2.0), (2.0, 3.0)]);
        assert!((s.measure() - 3.0).abs() < 1e-15);
        assert!(s.contains(1.0) && !s.contains(1.5) && !s.contains(3.0) && s.contains(2.5));
    }

    #[test]
    fn in_resonance_examples() {
        let spec = ResonanceSpec::new(0, 0.01, 1.0, freq(&[0.3, 0.7]), bs(&[2])).unwrap();
        assert_eq!(in_resonance(&[1.0], &spec), Some(MultiIndex::zero(2)));
        assert_eq!(in_resonance(&[2.0], &spec), None);
    }

    #[test]
    fn in_resonance_matches_brute_force() {
        let b = bs(&[2]);
        let w = [0.61, 1.37];
        let spec = ResonanceSpec::new(6, 0.05, 2.0, freq(&w), b.clone()).unwrap();
        let mut rng = task_rng(3, 0);
        for _ in 0..1000 {
            let t = [rng.gen::<f64>() * 8.0 - 4.0];
            let fast = in_resonance(&t, &spec).map(|k| k.entries().to_vec());
            assert_eq!(fast, oracle::brute_force_resonance(&b, &t, &w, 2.0, 0.05, 6));
        }
    }

    #[test]
    fn section_measure_examples() {
        let spec = ResonanceSpec::new(0, 0.01, 1.0, freq(&[0.3, 0.7]), bs(&[2])).unwrap();
        let m = section_measure(0, &[], &spec).unwrap();
        let expect = 2.0 * (1.01f64.sqrt() - 0.99f64.sqrt());
        assert!((m - expect).abs() < 1e-15);
        assert!((m - 0.02000025).abs() < 1e-7);

        let spec = ResonanceSpec::new(3, 0.01, -5.0, freq(&[0.3, 0.7]), bs(&[2])).unwrap();
        assert_eq!(section_measure(0, &[], &spec).unwrap(), 0.0);
    }

    #[test]
    fn section_engine_agrees_with_membership() {
        let b = bs(&[1, 1]);
        let spec = ResonanceSpec::new(3, 0.08, 1.3, freq(&[0.41, 0.77]), b).unwrap();
        let mut rng = task_rng(11, 0);
        for _ in 0..1000 {
            let rest = [rng.gen::<f64>() * 2.0 - 1.0];
            let set = section_intervals(0, &rest, &spec).unwrap();
            let x = rng.gen::<f64>() * 6.0 - 3.0;
            assert_eq!(set.contains(x), in_resonance(&[x, rest[0]], &spec).is_some());
        }
    }

    #[test]
    fn section_matches_monte_carlo() {
        let b = bs(&[1, 1]);
        let w = [0.41, 0.77];
        let spec = ResonanceSpec::new(2, 0.05, 1.0, freq(&w), b.clone()).unwrap();
        let exact = section_measure(1, &[0.2], &spec).unwrap();
        let (est, se) =
            oracle::monte_carlo_section_measure(&b, 1, &[0.2, 0.0], &w, 1.0, 0.05, 2, (-4.0, 4.0), 200_000, 5);
        assert!((exact - est).abs() <= 3.0 * se.max(1e-12), "exact {exact} mc {est} ± {se}");
    }

    #[test]
    fn first_step_delta_values() {
        let d = first_step_delta(5, 0.2, 2, 4.0).unwrap();
        let by_hand = 1.0 / 16.0 / 14641.0 * (-2.0 * 5f64.powf(0.2)).exp();
        assert!((d - by_hand).abs() <= 1e-15 * by_hand);
        assert!((d - 2.7036e-7).abs() < 1e-10);
        for n in 1..30 {
            assert!(first_step_delta(n + 1, 0.2, 2, 4.0).unwrap() < first_step_delta(n, 0.2, 2, 4.0).unwrap());
        }
        assert!(first_step_delta(5, 0.2, 3, 4.0).unwrap() < d);
        assert!(first_step_delta(0, 0.2, 2, 4.0).is_err());
        assert!(first_step_delta(5, 0.3, 2, 4.0).is_err());
    }

    #[test]
    fn schedule_defaults() {
        let s = ScaleSchedule::default();
        let flags = s.validate().unwrap();
        assert!(flags.iter().any(|f| f.contains("c3/10")));
        assert_eq!(s.n1_unclamped(4), 27);
        for n in s.n0..200 {
            assert!(s.n1(n) < n && s.n1(n) >= 1);
        }
        assert!(ScaleSchedule { c1: 0.3, ..s.clone() }.validate().is_err());
        assert!(ScaleSchedule { c3: 0.95, ..s.clone() }.validate().is_err());
        assert!(ScaleSchedule { clamp_n1: false, ..s.clone() }.validate().is_err());
        assert_eq!(s.annulus_range(4).unwrap(), (1, 34));
        assert!((s.energy_halfwidth() - 6.907755f64.powf(2.5)).abs() < 1e-3);
    }

    #[test]
    fn scan_with_tiny_delta_takes_first_candidate() {
        let s = ScaleSchedule::default();
        let out = double_resonance_scan(&[0.3], 0.5, &freq(&[0.61, 1.37]), &bs(&[2]), 8, &s, Some(1e-300)).unwrap();
        assert_eq!(out.found, Some(out.m_range.0 + 1));
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn scan_degenerate_frequency_never_succeeds() {
        let b = bs(&[2, 1]);
        let w = freq(&[0.0, 0.0, 0.9]);
        let energy = 0.49;
        let theta = [0.7, 0.0];
        let s = ScaleSchedule::default();
        let out = double_resonance_scan(&theta, energy, &w, &b, 3, &s, Some(1e-9)).unwrap();
        assert_eq!(out.found, None);
        assert_eq!(out.records.len(), out.m_range.1 - out.m_range.0);
        for rec in out.records.iter().take(4) {
            let hand = oracle::annulus_failures(&b, &theta, w.entries(), energy, 1e-9, out.n1, rec.m, annulus_inner_radius(rec.m, 3));
            assert_eq!(hand.len(), rec.failures);
            assert_eq!(rec.first_failure.as_ref().map(|k| k.entries().to_vec()), hand.first().cloned());
        }
    }

    #[test]
    fn scan_result_reverifies() {
        let b = bs(&[2]);
        let s = ScaleSchedule::default();
        let mut rng = task_rng(17, 0);
        let mut hits = 0;
        for _ in 0..30 {
            let w = [rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0];
            let out = double_resonance_scan(&[0.25], 1.0, &freq(&w), &b, 6, &s, Some(1e-3)).unwrap();
            if let Some(m) = out.found {
                hits += 1;
                let fails = oracle::annulus_failures(&b, &[0.25], &w, 1.0, out.delta, out.n1, m, annulus_inner_radius(m, 2));
                assert!(fails.is_empty());
            }
        }
        assert!(hits > 0);
    }

    #[test]
    fn scan_rejects_bad_inputs() {
        let s = ScaleSchedule::default();
        let b = bs(&[2]);
        let w = freq(&[0.5, 0.7]);
        assert!(matches!(double_resonance_scan(&[0.0], 1e6, &w, &b, 6, &s, None), Err(Error::Precondition(_))));
        assert!(matches!(double_resonance_scan(&[1e6], 0.0, &w, &b, 6, &s, None), Err(Error::Precondition(_))));
        assert!(matches!(double_resonance_scan(&[0.0], 0.0, &w, &b, 0, &s, None), Err(Error::Config(_))));
    }

    #[test]
    fn far_field_examples() {
        let b = bs(&[1, 1]);
        let w = freq(&[0.5, 0.9]);
        let n = 2;
        assert!(matches!(
            no_resonance_far_field(&[0.0, 0.0], 0.0, &w, &b, n, &[0.0, 0.0], n),
            FarField::NotApplicable { .. }
        ));
        let big = 300.0 * 2.0 * 4.0;
        assert!(matches!(
            no_resonance_far_field(&[0.0, 0.0], 0.0, &w, &b, n, &[big, 0.0], 0),
            FarField::Holds { .. }
        ));
        let mut rng = task_rng(9, 0);
        for _ in 0..100 {
            let dir: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
            let r = 200.0 * 2.0 * 4.0 * (1.0 + rng.gen::<f64>());
            let y = [r * dir.cos(), r * dir.sin()];
            let theta = [rng.gen::<f64>() * 10.0 - 5.0, rng.gen::<f64>() * 10.0 - 5.0];
            let res = no_resonance_far_field(&theta, 1.5, &w, &b, n, &y, 4);
            assert!(matches!(res, FarField::Holds { .. }), "{res:?}");
        }
    }

    #[test]
    fn cartan_probe_bounded_case() {
        let b = bs(&[2]);
        let v = PotentialModel::from_named_model("separable-cosine", &b, &ModelParams::new(0.5)).unwrap();
        let op = DualOperator::new(vec![0.3], freq(&[0.7, 0.5]), 0.0, v).unwrap();
        let region = enumerate_region(&RegionDescriptor::cube(MultiIndex::zero(2), 2));
        let sub = Region::from_points(vec![MultiIndex::zero(2)]).unwrap();
        let probe = CartanProbe {
            region,
            sub_region: sub,
            operator: op,
            j: 0,
            energy: -1.0,
            n_tilde: 4,
            n1: 1,
            samples: 64,
            seed: 1,
        };
        let est = cartan_probe(&probe, &Executor::Sequential).unwrap();
        assert_eq!(est.estimate, 0.0);
        assert!(est.ci_high <= est.interval_length && est.ci_low >= 0.0);
        assert!(est.within_bound && est.sub_region_contained);
        let par = cartan_probe(&probe, &Executor::Parallel(3)).unwrap();
        assert_eq!(par, est);
    }

    proptest! {
        #[test]
        fn section_measure_bounded_and_monotone(
            n in 0usize..4,
            delta in 1e-6f64..0.5,
            energy in -1.0f64..6.0,
            w0 in 0.0f64..3.0,
            w1 in 0.0f64..3.0,
            rest in -2.0f64..2.0,
        ) {
            let b = bs(&[1, 1]);
            let spec = ResonanceSpec::new(n, delta, energy, freq(&[w0, w1]), b.clone()).unwrap();
            let m = section_measure(0, &[rest], &spec).unwrap();
            prop_assert!(m <= spec.measure_bound());
            let wider = ResonanceSpec { delta: delta * 1.5, ..spec.clone() };
            prop_assert!(section_measure(0, &[rest], &wider).unwrap() >= m);
            let larger = ResonanceSpec { n: n + 1, ..spec.clone() };
            prop_assert!(section_measure(0, &[rest], &larger).unwrap() >= m);
        }

        #[test]
        fn wilson_interval_contains_proportion(k in 0usize..50, extra in 0usize..50) {
            let n = k + extra;
            let (lo, hi) = wilson_interval(k, n.max(1), 1.96);
            let p = if n == 0 { 0.0 } else { k as f64 / n as f64 };
            prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
        }
    }
}
