use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::dual_green::{ldt_check, DualOperator, GreenOptions};
use crate::error::{Error, Result};
use crate::lattice::{enumerate_region, MultiIndex, Region, RegionDescriptor};
use crate::resonance::{in_resonance, ResonanceSpec};

/// `|Z_k| ≤ C(1+|k|)^degree`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolyBound {
    pub c: f64,
    pub degree: f64,
}

impl PolyBound {
    /// `C = 1`, degree `5b`.
    pub fn standard(b: usize) -> Self {
        Self { c: 1.0, degree: 5.0 * b as f64 }
    }

    pub fn at(&self, k: &MultiIndex) -> f64 {
        self.c * (1.0 + k.sup_norm() as f64).powf(self.degree)
    }
}

/// Finitely supported lattice vector, optionally with a polynomial envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeVector {
    values: BTreeMap<MultiIndex, Complex64>,
    poly_bound: Option<PolyBound>,
}

impl LatticeVector {
    pub fn new(values: BTreeMap<MultiIndex, Complex64>, poly_bound: Option<PolyBound>) -> Result<Self> {
        if let Some(pb) = poly_bound {
            if let Some((k, z)) = values.iter().find(|(k, z)| z.norm() > pb.at(k)) {
                return Err(Error::Invariant(format!("|Z_{k}| = {} exceeds the polynomial bound", z.norm())));
            }
        }
        Ok(Self { values, poly_bound })
    }

    /// Vector with entries `values[i]` at `region.points()[i]`.
    pub fn from_region(region: &Region, values: &[Complex64]) -> Self {
        let values = region.points().iter().cloned().zip(values.iter().copied()).collect();
        Self { values, poly_bound: None }
    }

    pub fn get(&self, k: &MultiIndex) -> Complex64 {
        self.values.get(k).copied().unwrap_or_default()
    }

    pub fn values(&self) -> &BTreeMap<MultiIndex, Complex64> {
        &self.values
    }

    pub fn poly_bound(&self) -> Option<PolyBound> {
        self.poly_bound
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.values().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.values().map(|z| z.norm()).sum()
    }

    /// Restriction to the points of `region`.
    pub fn restrict(&self, region: &Region) -> Self {
        let values = self.values.iter().filter(|(k, _)| region.contains(k)).map(|(k, v)| (k.clone(), *v)).collect();
        Self { values, poly_bound: self.poly_bound }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonOptions {
    /// Relative tolerance on `max_Λ |(h − E)Z|` versus `‖Z‖ · (1 + |E| + max diag + ε‖V̂‖₁)`.
    pub equation_tol: f64,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        Self { equation_tol: 1e-9 }
    }
}

/// `max_{n∈Λ} |Z_n + ε Σ_{n'∈Λ} G_Λ(n,n') Σ_{n''∉Λ} V̂_{n'−n''} Z_{n''}|`.
/// Refuses unless `h(Θ)Z = EZ` holds on `Λ` to tolerance.
pub fn poisson_residual(
    op: &DualOperator,
    region: &Region,
    energy: f64,
    z: &LatticeVector,
    opts: &PoissonOptions,
) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::Structure("Poisson identity on an empty region".into()));
    }
    let eps = op.epsilon();
    let scale_diag = region.points().iter().map(|k| op.diagonal(k)).fold(0.0, f64::max);
    let scale = z.sup_norm() * (1.0 + energy.abs() + scale_diag + eps * op.potential().l1_norm());
    let eq = region
        .points()
        .iter()
        .map(|n| (op.apply_at(n, |k| z.get(k)) - z.get(n) * energy).norm())
        .fold(0.0, f64::max);
    if eq > opts.equation_tol * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Precondition(format!(
            "Z does not solve h(Θ)Z = EZ on Λ: residual {eq:e} against scale {scale:e}"
        )));
    }
    let green = op.green(region, energy, &GreenOptions::new(0, op.potential().rho()))?;
    let pts = region.points();
    let boundary: Vec<Complex64> = pts
        .iter()
        .map(|np| {
            let mut acc = Complex64::default();
            for (shift, v) in op.potential().coefficients() {
                let npp = np.sub(shift);
                if !region.contains(&npp) {
                    acc += v * z.get(&npp);
                }
            }
            acc
        })
        .collect();
    let mut worst = 0.0f64;
    for (i, n) in pts.iter().enumerate() {
        let rhs: Complex64 = boundary.iter().enumerate().map(|(j, bj)| green.inverse[(i, j)] * bj).sum::<Complex64>() * -eps;
        worst = worst.max((z.get(n) - rhs).norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub n: usize,
    pub epsilon: f64,
    pub rhs_bound: f64,
    /// `e^{−ρN/20}`.
    pub threshold: f64,
    pub pass: bool,
    pub green_norm: f64,
}

/// `ε Σ_{|n|≤N, |n'|>N} |G(0,n)| |V̂_{n−n'}| C(1+|n'|)^degree` on the cube
/// `[−N,N]^b`, compared with `e^{−ρN/20}`. Refuses when `Θ ∈ X_N` at width
/// `delta` or when the cube fails the LDT predicate.
pub fn absence_witness(
    op: &DualOperator,
    n: usize,
    energy: f64,
    delta: f64,
    poly: PolyBound,
) -> Result<WitnessReport> {
    let bs = op.block_structure().clone();
    let rho = op.potential().rho();
    let spec = ResonanceSpec::new(n, delta, energy, op.omega().clone(), bs.clone())?;
    if let Some(k) = in_resonance(op.theta(), &spec) {
        return Err(Error::Precondition(format!("Θ is resonant at k = {k} (width {delta:e})")));
    }
    let threshold = (-rho * n as f64 / 20.0).exp();
    let eps = op.epsilon();
    if eps == 0.0 {
        return Ok(WitnessReport { n, epsilon: eps, rhs_bound: 0.0, threshold, pass: true, green_norm: f64::NAN });
    }
    let cube = enumerate_region(&RegionDescriptor::cube(MultiIndex::zero(bs.b()), n));
    let green = op.green(&cube, energy, &GreenOptions::new(n, rho)).map_err(|e| match e {
        Error::NearSingular { sigma_min } => {
            Error::Precondition(format!("cube Green's function is singular (σ_min = {sigma_min:e})"))
        }
        other => other,
    })?;
    if !ldt_check(&green.report, n, rho) {
        return Err(Error::Precondition(format!(
            "cube fails the LDT predicate (‖G‖ = {:e})",
            green.report.op_norm
        )));
    }
    let origin = cube.index_of(&MultiIndex::zero(bs.b())).expect("cube contains the origin");
    let mut total = 0.0;
    for (j, nn) in cube.points().iter().enumerate() {
        let g = green.inverse[(origin, j)].norm();
        if g == 0.0 {
            continue;
        }
        for (shift, v) in op.potential().coefficients() {
            let np = nn.sub(shift);
            if np.sup_norm() as usize > n {
                total += g * v.norm() * poly.at(&np);
            }
        }
    }
    let rhs_bound = eps * total;
    Ok(WitnessReport { n, epsilon: eps, rhs_bound, threshold, pass: rhs_bound <= threshold, green_norm: green.report.op_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{BlockStructure, Frequency};
    use crate::linalg;
    use crate::potential::{ModelParams, PotentialModel};

    fn op(eps: f64) -> DualOperator {
        let b = BlockStructure::new(vec![2]).unwrap();
        let v = PotentialModel::from_named_model("separable-cosine", &b, &ModelParams::new(0.5)).unwrap();
        DualOperator::new(vec![0.3], Frequency::new(vec![1.0, 0.618]).unwrap(), eps, v).unwrap()
    }

    fn cube(n: usize) -> Region {
        enumerate_region(&RegionDescriptor::cube(MultiIndex::zero(2), n))
    }

    #[test]
    fn poisson_decoupled_case() {
        let o = op(0.0);
        let region = cube(2);
        let far = MultiIndex::new(vec![9, 9]);
        let energy = o.diagonal(&far);
        let mut v = BTreeMap::new();
        v.insert(far, Complex64::new(1.0, 0.0));
        let z = LatticeVector::new(v, None).unwrap();
        assert_eq!(poisson_residual(&o, &region, energy, &z, &PoissonOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn poisson_exact_eigenvector() {
        let o = op(0.2);
        let big = cube(5);
        let region = cube(3);
        let (vals, vecs) = linalg::hermitian_eigen(&o.assemble(&big).matrix);
        for idx in [0, 7, 40] {
            let col: Vec<Complex64> = vecs.column(idx).iter().copied().collect();
            let z = LatticeVector::from_region(&big, &col);
            let res = poisson_residual(&o, &region, vals[idx], &z, &PoissonOptions::default()).unwrap();
            assert!(res <= 1e-9 * z.sup_norm(), "residual {res}");
        }
    }

    #[test]
    fn poisson_refuses_non_solution() {
        let o = op(0.2);
        let region = cube(2);
        let big = cube(3);
        let vals: Vec<Complex64> = (0..big.len()).map(|i| Complex64::new((i as f64).sin(), 0.0)).collect();
        let z = LatticeVector::from_region(&big, &vals);
        assert!(matches!(
            poisson_residual(&o, &region, 0.7, &z, &PoissonOptions::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn witness_zero_coupling_and_resonant_refusal() {
        let r = absence_witness(&op(0.0), 4, -0.5, 1e-3, PolyBound::standard(2)).unwrap();
        assert_eq!(r.rhs_bound, 0.0);
        assert!(r.pass);
        let o = op(1e-6);
        let e = o.diagonal(&MultiIndex::new(vec![1, -1]));
        assert!(matches!(absence_witness(&o, 4, e, 1e-3, PolyBound::standard(2)), Err(Error::Precondition(_))));
    }

    #[test]
    fn witness_monotone_in_coupling() {
        let mut last = f64::INFINITY;
        for eps in [1e-3, 1e-4, 1e-5, 1e-6] {
            let r = absence_witness(&op(eps), 6, -0.5, 1e-3, PolyBound::standard(2)).unwrap();
            assert!(r.pass && r.rhs_bound <= last);
            last = r.rhs_bound;
        }
    }

    #[test]
    fn poly_bound_is_enforced() {
        let mut v = BTreeMap::new();
        v.insert(MultiIndex::new(vec![1, 0]), Complex64::new(1e3, 0.0));
        assert!(LatticeVector::new(v.clone(), Some(PolyBound::standard(1))).is_err());
        assert!(LatticeVector::new(v, Some(PolyBound::standard(2))).is_ok());
    }
}
