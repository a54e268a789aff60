use rand::Rng;
use serde_json::{json, Map};

use crate::dual_green::{DualOperator, GreenOptions};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::format::g17;
use crate::lattice::{enumerate_region, BlockStructure, Frequency, MultiIndex, RegionDescriptor};
use crate::linalg;
use crate::msa::{
    duality_residual, physical_matrix, poisson_residual, BlochSample, LatticeVector, PoissonOptions, RescaleMap,
};
use crate::oracle;
use crate::potential::{ModelParams, PotentialModel};
use crate::resonance::{
    annulus_inner_radius, double_resonance_scan, first_step_delta, first_step_epsilon, in_resonance, section_measure,
    ResonanceSpec, ScaleSchedule,
};
use crate::rng::task_rng;

use super::{Provenance, Row, Subcommand, SweepResult, Table};

const SEED: u64 = 0x5e1f;

/// Result of one oracle suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub pass: bool,
    pub detail: String,
}

type Suite = (&'static str, fn() -> Result<(usize, bool, String)>);

const SUITES: [Suite; 9] = [
    ("green-oracle", green_oracle),
    ("resonance-brute-force", resonance_brute_force),
    ("section-measure", section_measure_suite),
    ("first-step-ldt", first_step_ldt),
    ("double-resonance", double_resonance_suite),
    ("poisson-identity", poisson_identity),
    ("duality-rescale", duality_rescale),
    ("format-g17", format_g17),
    ("executor-determinism", executor_determinism),
];

/// Runs every oracle suite; suites are independent and run through `exec`.
pub fn run_selftest(exec: &Executor) -> Vec<SuiteOutcome> {
    exec.map(SUITES.len(), |i| {
        let (name, suite) = SUITES[i];
        match suite() {
            Ok((cases, pass, detail)) => SuiteOutcome { name, cases, pass, detail },
            Err(e) => SuiteOutcome { name, cases: 0, pass: false, detail: e.to_string() },
        }
    })
}

pub(super) fn selftest_result(provenance: Provenance, exec: &Executor) -> SweepResult {
    let outcomes = run_selftest(exec);
    let mut table = Table::new("", &["suite", "cases", "pass", "detail", "status"]);
    for o in &outcomes {
        table.rows.push(
            Row::new()
                .with("suite", o.name)
                .with("cases", o.cases)
                .with("pass", o.pass)
                .with("detail", o.detail.as_str())
                .with("status", if o.pass { "" } else { "error: suite failed" }),
        );
    }
    let mut summary = Map::new();
    summary.insert("suites".into(), json!(outcomes.len()));
    summary.insert("passed".into(), json!(outcomes.iter().filter(|o| o.pass).count()));
    SweepResult { subcommand: Subcommand::Selftest, provenance, tables: vec![table], summary, files: Vec::new() }
}

fn bs(blocks: &[usize]) -> BlockStructure {
    BlockStructure::new(blocks.to_vec()).expect("valid blocks")
}

fn cosine(b: &BlockStructure, rho: f64) -> PotentialModel {
    PotentialModel::from_named_model("separable-cosine", b, &ModelParams::new(rho)).expect("named model")
}

fn green_oracle() -> Result<(usize, bool, String)> {
    let b = bs(&[1, 1]);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for i in 0..20u64 {
        let mut rng = task_rng(SEED, i);
        let params = ModelParams { rho: 0.4, k_cut: 2, seed: Some(SEED + i) };
        let v = PotentialModel::from_named_model("random-analytic", &b, &params)?;
        let w = Frequency::new(vec![0.3 + rng.gen::<f64>(), 0.3 + rng.gen::<f64>()])?;
        let theta = vec![rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0];
        let op = DualOperator::new(theta, w, 0.05 + 0.5 * rng.gen::<f64>(), v)?;
        let n = rng.gen_range(2..=6);
        let region = enumerate_region(&RegionDescriptor::cube(MultiIndex::zero(2), n));
        let energy = rng.gen::<f64>() * 4.0 - 1.0;
        let g = match op.green(&region, energy, &GreenOptions::new(n, 0.4)) {
            Ok(g) => g,
            Err(Error::NearSingular { .. }) => continue,
            Err(e) => return Err(e),
        };
        let reference = oracle::gauss_jordan_inverse(&op.assemble(&region).shifted(energy))
            .ok_or_else(|| Error::Invariant("oracle elimination hit a zero pivot".into()))?;
        let err = linalg::max_abs(&(&g.inverse - &reference)) / linalg::max_abs(&reference);
        worst = worst.max(err);
        cases += 1;
    }
    Ok((cases, cases >= 15 && worst <= 1e-9, format!("max relative error {}", g17(worst))))
}

fn resonance_brute_force() -> Result<(usize, bool, String)> {
    let b = bs(&[2]);
    let mut rng = task_rng(SEED, 100);
    let mut mismatches = 0;
    let mut resonant = 0;
    let cases = 400;
    for _ in 0..cases {
        let w = [rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0];
        let n = rng.gen_range(1..=5);
        let delta = 10f64.powf(-3.0 * rng.gen::<f64>());
        let energy = rng.gen::<f64>() * 5.0;
        let spec = ResonanceSpec::new(n, delta, energy, Frequency::new(w.to_vec())?, b.clone())?;
        let theta = [rng.gen::<f64>() * 6.0 - 3.0];
        let fast = in_resonance(&theta, &spec).map(|k| k.entries().to_vec());
        resonant += usize::from(fast.is_some());
        if fast != oracle::brute_force_resonance(&b, &theta, &w, energy, delta, n) {
            mismatches += 1;
        }
    }
    Ok((cases, mismatches == 0 && resonant > 0, format!("{mismatches} mismatches, {resonant} resonant")))
}

fn section_measure_suite() -> Result<(usize, bool, String)> {
    let b = bs(&[1, 1]);
    let mut rng = task_rng(SEED, 200);
    let mut violations = 0;
    let mut mc_misses = 0;
    let cases = 60;
    for i in 0..cases {
        let w = [0.2 + rng.gen::<f64>(), 0.2 + rng.gen::<f64>()];
        let n = rng.gen_range(1..=4);
        let delta = 10f64.powf(-1.0 - 3.0 * rng.gen::<f64>());
        let energy = rng.gen::<f64>() * 3.0;
        let rest = [rng.gen::<f64>() * 2.0 - 1.0];
        let spec = ResonanceSpec::new(n, delta, energy, Frequency::new(w.to_vec())?, b.clone())?;
        let m = section_measure(0, &rest, &spec)?;
        if m > spec.measure_bound() {
            violations += 1;
        }
        if i < 3 {
            let reach = (energy + delta).sqrt() + n as f64 * w[0] + 1.0;
            let (est, se) = oracle::monte_carlo_section_measure(
                &b,
                0,
                &[0.0, rest[0]],
                &w,
                energy,
                delta,
                n,
                (-reach, reach),
                100_000,
                SEED + i as u64,
            );
            if (est - m).abs() > 4.0 * se.max(1e-12) {
                mc_misses += 1;
            }
        }
    }
    Ok((cases, violations == 0 && mc_misses == 0, format!("{violations} bound violations, {mc_misses} MC misses")))
}

fn first_step_ldt() -> Result<(usize, bool, String)> {
    let b = bs(&[2]);
    let v = cosine(&b, 0.5);
    let n = 4;
    let delta = first_step_delta(n, 0.2, 2, 4.0)?;
    let eps = first_step_epsilon(delta, n, 2);
    let w = Frequency::new(vec![1.0, 0.618_033_988_749_895])?;
    let region = enumerate_region(&RegionDescriptor::cube(MultiIndex::zero(2), n));
    let spec = ResonanceSpec::new(n, delta, 1.3, w.clone(), b.clone())?;
    let mut rng = task_rng(SEED, 300);
    let (mut cases, mut fails) = (0, 0);
    while cases < 20 {
        let theta = vec![rng.gen::<f64>() * 4.0 - 2.0];
        if in_resonance(&theta, &spec).is_some() {
            continue;
        }
        let op = DualOperator::new(theta, w.clone(), eps, v.clone())?;
        let rep = op.green_report(&region, 1.3, &GreenOptions::new(n, 0.5))?;
        cases += 1;
        fails += usize::from(!rep.first_step_bounds_hold(delta, 0.5));
    }
    Ok((cases, fails == 0, format!("{fails} failures outside the resonant set")))
}

fn double_resonance_suite() -> Result<(usize, bool, String)> {
    let b = bs(&[2]);
    let s = ScaleSchedule::default();
    let mut rng = task_rng(SEED, 400);
    let mut mismatches = 0;
    let mut checked = 0;
    for _ in 0..10 {
        let w = [rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0];
        let out = double_resonance_scan(&[0.25], 1.0, &Frequency::new(w.to_vec())?, &b, 6, &s, Some(1e-2))?;
        for rec in &out.records {
            let hand = oracle::annulus_failures(&b, &[0.25], &w, 1.0, out.delta, out.n1, rec.m, annulus_inner_radius(rec.m, 2));
            checked += 1;
            if hand.len() != rec.failures || rec.first_failure.as_ref().map(|k| k.entries().to_vec()) != hand.first().cloned() {
                mismatches += 1;
            }
        }
    }
    Ok((checked, mismatches == 0 && checked > 0, format!("{mismatches} annulus mismatches")))
}

fn poisson_identity() -> Result<(usize, bool, String)> {
    let b = bs(&[2]);
    let op = DualOperator::new(vec![0.3], Frequency::new(vec![1.0, 0.618])?, 0.2, cosine(&b, 0.5))?;
    let big = enumerate_region(&RegionDescriptor::cube(MultiIndex::zero(2), 5));
    let region = enumerate_region(&RegionDescriptor::cube(MultiIndex::zero(2), 3));
    let (vals, vecs) = linalg::hermitian_eigen(&op.assemble(&big).matrix);
    let mut worst = 0.0f64;
    let picks = [0, 5, 17, 40, 60];
    for &i in &picks {
        let col: Vec<_> = vecs.column(i).iter().copied().collect();
        let z = LatticeVector::from_region(&big, &col);
        let res = poisson_residual(&op, &region, vals[i], &z, &PoissonOptions::default())?;
        worst = worst.max(res / z.sup_norm());
    }
    Ok((picks.len(), worst <= 1e-9, format!("max residual/‖Z‖ {}", g17(worst))))
}

fn duality_rescale() -> Result<(usize, bool, String)> {
    let b = bs(&[2]);
    let v = cosine(&b, 0.5);
    let w = Frequency::new(vec![1.0, 0.618])?;
    let op = DualOperator::new(vec![0.2], w.clone(), 0.05, v.clone())?;
    let region = enumerate_region(&RegionDescriptor::cube(MultiIndex::zero(2), 4));
    let (vals, vecs) = linalg::hermitian_eigen(&op.assemble(&region).matrix);
    let x_grid: Vec<Vec<f64>> = (0..25).map(|i| vec![-6.0 + 0.5 * i as f64]).collect();
    let mut over = 0;
    for i in [0, 3, 10] {
        let col: Vec<_> = vecs.column(i).iter().copied().collect();
        let sample = BlochSample {
            theta: vec![0.2],
            phase: vec![0.4, 1.1],
            energy: vals[i],
            coefficients: LatticeVector::from_region(&region, &col),
            support: region.clone(),
            x_grid: x_grid.clone(),
        };
        over += usize::from(!duality_residual(&sample, &w, 0.05, &v)?.within_budget);
    }
    let small = enumerate_region(&RegionDescriptor::cube(MultiIndex::zero(2), 3));
    let map = RescaleMap::new(0.7, 3.0)?;
    let phys = linalg::hermitian_eigenvalues(&physical_matrix(&small, &map, &[1.3], &w, &v));
    let (eps, _, tt) = map.forward(0.0, &[1.3]);
    let scaled = DualOperator::new(tt, w, eps, v)?.assemble(&small).eigenvalues();
    let worst = phys
        .iter()
        .zip(&scaled)
        .map(|(p, s)| (p - 9.0 * s).abs() / p.abs().max(1.0))
        .fold(0.0, f64::max);
    Ok((4, over == 0 && worst <= 1e-10, format!("{over} over budget, conjugation error {}", g17(worst))))
}

fn format_g17() -> Result<(usize, bool, String)> {
    let cases = [(0.1, "0.10000000000000001"), (1e-5, "1.0000000000000001e-05"), (1e17, "1e+17"), (-2.5, "-2.5")];
    let bad: Vec<String> = cases.iter().filter(|(x, s)| g17(*x) != *s).map(|(x, _)| g17(*x)).collect();
    Ok((cases.len(), bad.is_empty(), if bad.is_empty() { "ok".into() } else { bad.join(" ") }))
}

fn executor_determinism() -> Result<(usize, bool, String)> {
    let b = bs(&[2]);
    let op = DualOperator::new(vec![0.1], Frequency::new(vec![1.0, 0.7])?, 0.1, cosine(&b, 0.5))?;
    let region = enumerate_region(&RegionDescriptor::cube(MultiIndex::zero(2), 3));
    let job = |i: usize| {
        op.with_theta(vec![0.05 * i as f64]).resolvent_norm(&region, 0.9).to_bits()
    };
    let seq = Executor::Sequential.map(16, job);
    let par = Executor::Parallel(4).map(16, job);
    Ok((16, seq == par, if seq == par { "identical".into() } else { "results differ".into() }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        for o in run_selftest(&Executor::Sequential) {
            assert!(o.pass, "{}: {}", o.name, o.detail);
        }
    }
}
