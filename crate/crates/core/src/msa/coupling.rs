use std::collections::{BTreeMap, HashMap};

use crate::dual_green::{DualOperator, GreenOptions};
use crate::error::{Error, Result};
use crate::lattice::{elementary_regions_at_scale, enumerate_region, BlockStructure, MultiIndex, Region, RegionDescriptor};
use crate::linalg::{self, CMatrix};

use super::{digest_operator, CheckReport, InputsDigest};

/// Assignment `n ↦ W(n)` of an elementary region to every point to be covered.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Covering {
    patches: BTreeMap<MultiIndex, RegionDescriptor>,
}

impl Covering {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, n: MultiIndex, w: RegionDescriptor) {
        self.patches.insert(n, w);
    }

    pub fn get(&self, n: &MultiIndex) -> Option<&RegionDescriptor> {
        self.patches.get(n)
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Distinct patches in a fixed order.
    pub fn distinct(&self) -> Vec<RegionDescriptor> {
        let mut seen = std::collections::HashSet::new();
        self.patches.values().filter(|w| seen.insert((*w).clone())).cloned().collect()
    }
}

/// Covering of the cube `center + [−N,N]^b` by cubes of size `M`, each
/// centered at the point clamped into `center + [−(N−M), N−M]^b`. Every point
/// is at distance at least `M` from the rest of the cube outside its patch.
pub fn cube_covering(center: &MultiIndex, n: usize, m: usize) -> Result<Covering> {
    if m > n {
        return Err(Error::Structure(format!("patch size {m} exceeds cube size {n}")));
    }
    let reach = (n - m) as i64;
    let cube = enumerate_region(&RegionDescriptor::cube(center.clone(), n));
    let mut cov = Covering::new();
    for p in cube.points() {
        let c: Vec<i64> = p
            .entries()
            .iter()
            .zip(center.entries())
            .map(|(&x, &c0)| x.clamp(c0 - reach, c0 + reach))
            .collect();
        cov.insert(p.clone(), RegionDescriptor::cube(MultiIndex::new(c), m));
    }
    Ok(cov)
}

fn separation(n: &MultiIndex, allowed: &Region, w: &RegionDescriptor) -> u64 {
    allowed
        .points()
        .iter()
        .filter(|p| !w.contains(p))
        .map(|p| p.distance(n))
        .min()
        .unwrap_or(u64::MAX)
}

/// For each target point, the elementary region of size `M` inside `allowed`
/// that contains it and maximizes its distance to `allowed ∖ W`. Fails when
/// that distance falls below `M/2` for some point.
pub fn search_covering(targets: &Region, allowed: &Region, bs: &BlockStructure, m: usize) -> Result<Covering> {
    let patterns = elementary_regions_at_scale(m, bs);
    let offsets = crate::lattice::cube_points(bs.b(), m as i64);
    let mut fits: HashMap<RegionDescriptor, bool> = HashMap::new();
    let mut cov = Covering::new();
    let mut offenders = Vec::new();
    for n in targets.points() {
        let mut best: Option<(u64, RegionDescriptor)> = None;
        for o in &offsets {
            let c = n.add(o);
            for pat in &patterns {
                let w = pat.translated(&c);
                if !w.contains(n) {
                    continue;
                }
                let inside = *fits
                    .entry(w.clone())
                    .or_insert_with(|| enumerate_region(&w).is_subset_of(allowed));
                if !inside {
                    continue;
                }
                let sep = separation(n, allowed, &w);
                if best.as_ref().is_none_or(|(s, _)| sep > *s) {
                    best = Some((sep, w));
                }
            }
        }
        match best {
            Some((sep, w)) if sep.saturating_mul(2) >= m as u64 => cov.insert(n.clone(), w),
            _ => offenders.push(n.to_string()),
        }
    }
    if offenders.is_empty() {
        Ok(cov)
    } else {
        Err(Error::Structure(format!("no admissible size-{m} patch for {}", offenders.join(", "))))
    }
}

/// `min_{|n−n'| ≥ window} (log_bound(|n−n'|) − ln|g(n,n')|)`, `+∞` if vacuous.
fn decay_margin(g: &CMatrix, region: &Region, window: f64, log_bound: impl Fn(f64) -> f64) -> f64 {
    let pts = region.points();
    let mut worst = f64::INFINITY;
    for (i, p) in pts.iter().enumerate() {
        for (j, q) in pts.iter().enumerate() {
            let r = p.distance(q) as f64;
            if r < window {
                continue;
            }
            let a = g[(i, j)].norm();
            if a > 0.0 {
                worst = worst.min(log_bound(r) - a.ln());
            }
        }
    }
    worst
}

fn log_ratio(bound: f64, value: f64) -> f64 {
    if value == 0.0 {
        f64::INFINITY
    } else {
        bound.ln() - value.ln()
    }
}

/// Perturbation lemma: with `‖A^{-1}‖ ≤ e^{√N}`, `|A^{-1}(n,n')| ≤ e^{−ρ̄|n−n'|}`
/// for `|n−n'| ≥ N/10` and `|(B−A)(n,n')| ≤ e^{−3ρ̄N−ρ̄|n−n'|}`, asserts
/// `‖B^{-1}‖ ≤ 2‖A^{-1}‖` and `|B^{-1}(n,n')| ≤ |A^{-1}(n,n')| + e^{−ρ̄|n−n'|}`.
pub fn verify_perturbation_lemma(a: &CMatrix, b: &CMatrix, region: &Region, rho_bar: f64, n: usize) -> Result<CheckReport> {
    let size = region.len();
    if a.shape() != (size, size) || b.shape() != (size, size) {
        return Err(Error::Structure(format!("operators must be {size}×{size} on the region")));
    }
    let mut dg = InputsDigest::default();
    dg.text("perturbation_lemma").matrix(a).matrix(b).real(rho_bar).integers(&[n as i64]);
    for p in region.points() {
        dg.integers(p.entries());
    }
    let mut report = CheckReport::new("perturbation_lemma", dg.finish());

    let a_inv = linalg::invert(a).ok_or(Error::NearSingular { sigma_min: 0.0 })?;
    let a_norm = linalg::spectral_norm(&a_inv);
    let nf = n as f64;
    let pts = region.points();

    let h_norm = nf.sqrt() - a_norm.ln();
    let h_decay = decay_margin(&a_inv, region, nf / 10.0, |r| -rho_bar * r);
    let mut h_pert = f64::INFINITY;
    for (i, p) in pts.iter().enumerate() {
        for (j, q) in pts.iter().enumerate() {
            let diff = (b[(i, j)] - a[(i, j)]).norm();
            if diff > 0.0 {
                let r = p.distance(q) as f64;
                h_pert = h_pert.min(-3.0 * rho_bar * nf - rho_bar * r - diff.ln());
            }
        }
    }
    report.margins.insert("hyp.inverse_norm".into(), h_norm);
    report.margins.insert("hyp.inverse_decay".into(), h_decay);
    report.margins.insert("hyp.perturbation".into(), h_pert);
    report.budget.insert("inverse_norm_a".into(), a_norm);
    report.hypotheses_hold = rho_bar > 0.0 && h_norm >= 0.0 && h_decay >= 0.0 && h_pert >= 0.0;
    if !report.hypotheses_hold {
        return Ok(report);
    }

    let Some(b_inv) = linalg::invert(b) else {
        report.conclusions_hold = Some(false);
        return Ok(report);
    };
    let b_norm = linalg::spectral_norm(&b_inv);
    let norm_margin = 2.0 * a_norm - b_norm;
    let mut entry_margin = f64::INFINITY;
    let mut entry_rel = f64::INFINITY;
    for (i, p) in pts.iter().enumerate() {
        for (j, q) in pts.iter().enumerate() {
            let r = p.distance(q) as f64;
            let cap = a_inv[(i, j)].norm() + (-rho_bar * r).exp();
            let slack = cap - b_inv[(i, j)].norm();
            entry_margin = entry_margin.min(slack);
            entry_rel = entry_rel.min(slack / cap);
        }
    }
    report.budget.insert("inverse_norm_b".into(), b_norm);
    report.margins.insert("concl.norm".into(), norm_margin);
    report.margins.insert("concl.entry".into(), entry_margin);
    report.margins.insert("concl.entry_relative".into(), entry_rel);
    report.conclusions_hold = Some(norm_margin >= 0.0 && entry_margin >= 0.0);
    Ok(report)
}

struct PatchGreen {
    norm: f64,
    inverse: CMatrix,
    region: Region,
}

fn patch_green(op: &DualOperator, w: &RegionDescriptor, energy: f64) -> Result<Option<PatchGreen>> {
    let region = enumerate_region(w);
    match op.green(&region, energy, &GreenOptions::new(w.size, op.potential().rho())) {
        Ok(g) => Ok(Some(PatchGreen { norm: g.report.op_norm, inverse: g.inverse, region })),
        Err(Error::NearSingular { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Checks `n ∈ W(n) ⊆ allowed` and `dist(n, allowed ∖ W(n)) ≥ M/2` with `M` in range.
fn check_geometry(targets: &Region, allowed: &Region, covering: &Covering, m_lo: usize, m_hi: usize) -> Result<()> {
    let mut offenders = Vec::new();
    for n in targets.points() {
        let Some(w) = covering.get(n) else {
            offenders.push(format!("{n}: no patch"));
            continue;
        };
        if w.size < m_lo || w.size > m_hi {
            offenders.push(format!("{n}: patch size {} outside [{m_lo}, {m_hi}]", w.size));
        } else if !w.contains(n) {
            offenders.push(format!("{n}: not in its patch"));
        } else if !enumerate_region(w).is_subset_of(allowed) {
            offenders.push(format!("{n}: patch leaves the region"));
        } else if separation(n, allowed, w).saturating_mul(2) < w.size as u64 {
            offenders.push(format!("{n}: patch boundary closer than M/2"));
        }
    }
    if offenders.is_empty() {
        Ok(())
    } else {
        Err(Error::Structure(format!("covering violates the geometric preconditions: {}", offenders.join("; "))))
    }
}

/// Global norm bound from a covering by good patches: with every `W(n)`
/// satisfying `‖G_W‖ ≤ 2e^{√M}` and `|G_W(n,n')| ≤ 2e^{−ρ̄|n−n'|}` for
/// `|n−n'| ≥ M/10`, asserts `‖G_Λ‖ ≤ 4(2M1+1)^b e^{√M1}`.
#[allow(clippy::too_many_arguments)]
pub fn verify_coupling_norm(
    op: &DualOperator,
    region: &Region,
    energy: f64,
    covering: &Covering,
    m0: usize,
    m1: usize,
    n: usize,
    rho_bar: f64,
) -> Result<CheckReport> {
    if m1 > n || m0 > m1 {
        return Err(Error::Structure(format!("patch scales need M0 ≤ M1 ≤ N, got {m0}, {m1}, {n}")));
    }
    if region.diam() > 2 * n as u64 + 1 {
        return Err(Error::Structure(format!("diam(Λ) = {} exceeds 2N+1", region.diam())));
    }
    check_geometry(region, region, covering, m0, m1)?;

    let mut dg = InputsDigest::default();
    dg.text("coupling_norm");
    digest_operator(&mut dg, op);
    dg.real(energy).real(rho_bar).integers(&[m0 as i64, m1 as i64, n as i64]);
    for p in region.points() {
        dg.integers(p.entries());
        let w = covering.get(p).expect("checked");
        dg.integers(w.center.entries()).integers(&[w.size as i64]);
    }
    let mut report = CheckReport::new("coupling_norm", dg.finish());

    let mut w_norm = f64::INFINITY;
    let mut w_decay = f64::INFINITY;
    let mut singular = 0usize;
    for w in covering.distinct() {
        let mf = w.size as f64;
        match patch_green(op, &w, energy)? {
            Some(pg) => {
                w_norm = w_norm.min(log_ratio(2.0 * mf.sqrt().exp(), pg.norm));
                w_decay = w_decay.min(decay_margin(&pg.inverse, &pg.region, mf / 10.0, |r| 2f64.ln() - rho_bar * r));
            }
            None => singular += 1,
        }
    }
    report.margins.insert("hyp.patch_norm".into(), w_norm);
    report.margins.insert("hyp.patch_decay".into(), w_decay);
    report.budget.insert("singular_patches".into(), singular as f64);
    let rho_ok = rho_bar > 0.0 && rho_bar <= op.potential().rho();
    report.hypotheses_hold = rho_ok && singular == 0 && w_norm >= 0.0 && w_decay >= 0.0;
    if !report.hypotheses_hold {
        return Ok(report);
    }

    let b = op.block_structure().b() as i32;
    let bound = 4.0 * ((2 * m1 + 1) as f64).powi(b) * (m1 as f64).sqrt().exp();
    let global = op.resolvent_norm(region, energy);
    report.budget.insert("bound".into(), bound);
    report.budget.insert("green_norm".into(), global);
    let margin = log_ratio(bound, global);
    report.margins.insert("concl.norm".into(), margin);
    report.conclusions_hold = Some(margin >= 0.0);
    Ok(report)
}

/// Inputs of [`verify_coupling_decay`].
#[derive(Debug, Clone)]
pub struct DecayCheckInput<'a> {
    pub operator: &'a DualOperator,
    pub region: &'a Region,
    /// The uncovered core `Λ₁ ⊂ Λ`.
    pub core: &'a Region,
    pub energy: f64,
    pub covering: &'a Covering,
    pub m0: usize,
    pub n: usize,
    pub rho_bar: f64,
    /// Constant `C` to assert; `None` runs calibration only.
    pub constant: Option<f64>,
}

/// Decay from a covering of `Λ ∖ Λ₁` by good patches plus `‖G_Λ‖ ≤ e^{√N}`:
/// `|G_Λ(n,n')| ≤ e^{−(ρ̄ − C/√M0)|n−n'|}` for `|n−n'| ≥ N/10`. The smallest
/// admissible `C` is always reported as `c_min`.
pub fn verify_coupling_decay(input: &DecayCheckInput<'_>) -> Result<CheckReport> {
    let DecayCheckInput { operator: op, region, core, energy, covering, m0, n, rho_bar, constant } = input.clone();
    let nf = n as f64;
    let b = op.block_structure().b() as f64;
    if region.diam() > 2 * n as u64 + 1 {
        return Err(Error::Structure(format!("diam(Λ) = {} exceeds 2N+1", region.diam())));
    }
    if !core.is_subset_of(region) {
        return Err(Error::Structure("Λ₁ is not contained in Λ".into()));
    }
    if core.diam() as f64 > nf.powf(1.0 / (3.0 * b)) {
        return Err(Error::Structure(format!("diam(Λ₁) = {} exceeds N^(1/(3b))", core.diam())));
    }
    if (m0 as f64) < nf.ln().powi(2) {
        return Err(Error::Structure(format!("M0 = {m0} is below (ln N)²")));
    }
    let outer = region.difference(core);
    check_geometry(&outer, &outer, covering, m0, usize::MAX)?;

    let mut dg = InputsDigest::default();
    dg.text("coupling_decay");
    digest_operator(&mut dg, op);
    dg.real(energy).real(rho_bar).real(constant.unwrap_or(f64::NAN)).integers(&[m0 as i64, n as i64]);
    for p in region.points() {
        dg.integers(p.entries()).text(if core.contains(p) { "core" } else { "" });
        if let Some(w) = covering.get(p) {
            dg.integers(w.center.entries()).integers(&[w.size as i64]);
        }
    }
    let mut report = CheckReport::new("coupling_decay", dg.finish());

    let mut w_norm = f64::INFINITY;
    let mut w_decay = f64::INFINITY;
    let mut singular = 0usize;
    for w in covering.distinct() {
        let mf = w.size as f64;
        match patch_green(op, &w, energy)? {
            Some(pg) => {
                w_norm = w_norm.min(log_ratio(mf.sqrt().exp(), pg.norm));
                w_decay = w_decay.min(decay_margin(&pg.inverse, &pg.region, mf / 10.0, |r| -rho_bar * r));
            }
            None => singular += 1,
        }
    }
    let rho = op.potential().rho();
    let rho_ok = rho_bar >= rho / 2.0 && rho_bar <= rho;
    let green = match op.green(region, energy, &GreenOptions::new(n, rho)) {
        Ok(g) => Some(g),
        Err(Error::NearSingular { .. }) => None,
        Err(e) => return Err(e),
    };
    let g_norm = green.as_ref().map_or(f64::INFINITY, |g| g.report.op_norm);
    let global = log_ratio(nf.sqrt().exp(), g_norm);
    report.margins.insert("hyp.patch_norm".into(), w_norm);
    report.margins.insert("hyp.patch_decay".into(), w_decay);
    report.margins.insert("hyp.global_norm".into(), global);
    report.budget.insert("singular_patches".into(), singular as f64);
    report.budget.insert("green_norm".into(), g_norm);
    report.hypotheses_hold = rho_ok && singular == 0 && w_norm >= 0.0 && w_decay >= 0.0 && global >= 0.0;
    if !report.hypotheses_hold {
        return Ok(report);
    }
    let g = green.expect("norm hypothesis implies invertible");

    // Effective rate min (−ln|G|/r) over the window; C_min = √M0 (ρ̄ − rate)₊.
    let sqrt_m0 = (m0 as f64).sqrt();
    let pts = region.points();
    let mut rate = f64::INFINITY;
    for (i, p) in pts.iter().enumerate() {
        for (j, q) in pts.iter().enumerate() {
            let r = p.distance(q) as f64;
            let a = g.inverse[(i, j)].norm();
            if r > 0.0 && r >= nf / 10.0 && a > 0.0 {
                rate = rate.min(-a.ln() / r);
            }
        }
    }
    let c_min = (sqrt_m0 * (rho_bar - rate)).max(0.0);
    report.budget.insert("effective_rate".into(), rate);
    report.budget.insert("c_min".into(), c_min);
    if let Some(c) = constant {
        let exponent = rho_bar - c / sqrt_m0;
        let margin = decay_margin(&g.inverse, region, nf / 10.0, |r| -exponent * r);
        report.budget.insert("c_asserted".into(), c);
        report.margins.insert("concl.decay".into(), margin);
        report.conclusions_hold = Some(margin >= 0.0);
    } else {
        report.conclusions_hold = Some(true);
    }
    Ok(report)
}
