use num_complex::Complex64;
use serde::Serialize;

use crate::dual_green::{assemble_matrix, DualOperator};
use crate::error::{Error, Result};
use crate::lattice::{BlockStructure, Frequency, Region};
use crate::linalg::CMatrix;
use crate::potential::PotentialModel;

use super::poisson::LatticeVector;

/// Floquet-Bloch data `Ψ(x) = e^{iΘ·x} Σ_k Ψ_k e^{ik·(θ + xω)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochSample {
    pub theta: Vec<f64>,
    /// Phase `θ` on the torus `T^b`.
    pub phase: Vec<f64>,
    pub energy: f64,
    pub coefficients: LatticeVector,
    pub support: Region,
    pub x_grid: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    /// `max_x |(−Δ + εV(θ+xω) − E)Ψ(x)|`.
    pub max_residual: f64,
    /// `max_x |Ψ(x)|`.
    pub max_psi: f64,
    /// Interior points of `Λ` satisfy `h(Θ)Z = EZ` to tolerance.
    pub lattice_equation_holds: bool,
    pub interior: f64,
    pub boundary: f64,
    pub tail: f64,
    pub roundoff: f64,
    pub budget: f64,
    pub within_budget: bool,
}

/// Evaluates the continuum residual of a Bloch sum on its grid and compares
/// it with a triangle-inequality budget: lattice residual on `Λ`, leakage
/// into the collar outside `Λ`, the potential's truncated tail and
/// floating-point round-off.
pub fn duality_residual(
    sample: &BlochSample,
    omega: &Frequency,
    epsilon: f64,
    potential: &PotentialModel,
) -> Result<DualityReport> {
    let bs = potential.block_structure().clone();
    if sample.phase.len() != bs.b() || sample.x_grid.iter().any(|x| x.len() != bs.d()) {
        return Err(Error::Structure("phase or grid point does not match the block structure".into()));
    }
    if sample.coefficients.values().keys().any(|k| !sample.support.contains(k)) {
        return Err(Error::Structure("Bloch coefficients leave their support".into()));
    }
    let op = DualOperator::new(sample.theta.clone(), omega.clone(), epsilon, potential.clone())?;
    let z = &sample.coefficients;
    let energy = sample.energy;
    let region = &sample.support;
    let l1 = potential.l1_norm();
    let z_l1 = z.l1_norm();

    let lattice = |n| op.apply_at(n, |k| z.get(k)) - z.get(n) * energy;
    let interior: f64 = region.points().iter().map(|n| lattice(n).norm()).sum();
    let collar = region.collar(potential.k_cut());
    let boundary: f64 = collar.points().iter().map(|n| lattice(n).norm()).sum();

    let strictly_inside = region.points().iter().filter(|n| {
        potential.coefficients().keys().all(|s| region.contains(&n.sub(s)))
    });
    let scale_diag = region.points().iter().map(|k| op.diagonal(k)).fold(0.0, f64::max);
    let scale = z.sup_norm() * (1.0 + energy.abs() + scale_diag + epsilon * l1);
    let eq = strictly_inside.map(|n| lattice(n).norm()).fold(0.0, f64::max);
    let lattice_equation_holds = eq <= 1e-8 * scale;

    let tail = epsilon * potential.tail_bound() * z_l1;
    let weighted: f64 = z.values().iter().map(|(k, v)| (op.diagonal(k) + energy.abs()) * v.norm()).sum();
    let terms = (region.len() + potential.coefficients().len() + 16) as f64;
    let roundoff = terms * f64::EPSILON * (weighted + epsilon * l1 * z_l1);

    let mut max_residual = 0.0f64;
    let mut max_psi = 0.0f64;
    for x in &sample.x_grid {
        let mut psi = Complex64::default();
        let mut free = Complex64::default();
        for (k, v) in z.values() {
            let ke = k.entries();
            let mut phase: f64 = ke.iter().zip(&sample.phase).map(|(&kk, &t)| kk as f64 * t).sum();
            let mut norm2 = 0.0;
            for i in 0..bs.d() {
                let u = sample.theta[i] + bs.block_range(i).map(|c| ke[c] as f64 * omega.entries()[c]).sum::<f64>();
                phase += x[i] * u;
                norm2 += u * u;
            }
            let term = v * Complex64::from_polar(1.0, phase);
            psi += term;
            free += term * (norm2 - energy);
        }
        let arg = torus_point(&bs, &sample.phase, omega.entries(), x);
        let residual = free + psi * (epsilon * potential.evaluate_complex(&arg).re);
        max_residual = max_residual.max(residual.norm());
        max_psi = max_psi.max(psi.norm());
    }
    let budget = interior + boundary + tail + roundoff;
    Ok(DualityReport {
        max_residual,
        max_psi,
        lattice_equation_holds,
        interior,
        boundary,
        tail,
        roundoff,
        budget,
        within_budget: max_residual <= budget,
    })
}

/// `θ + xω` with `x_i` acting on block `i`.
fn torus_point(bs: &BlockStructure, phase: &[f64], omega: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = phase.to_vec();
    for i in 0..bs.d() {
        for c in bs.block_range(i) {
            out[c] += x[i] * omega[c];
        }
    }
    out
}

/// `(λ, K)` ↦ `ε = λ/K²`, `Θ̃ = Θ/K`, `Ẽ = E/K²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RescaleMap {
    pub lambda: f64,
    pub k: f64,
}

impl RescaleMap {
    pub fn new(lambda: f64, k: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::Config(format!("rescaling needs K > 0, got {k}")));
        }
        if !(lambda > 0.0) {
            return Err(Error::Config(format!("rescaling needs λ > 0, got {lambda}")));
        }
        Ok(Self { lambda, k })
    }

    pub fn epsilon(&self) -> f64 {
        self.lambda / (self.k * self.k)
    }

    /// `(ε, Ẽ, Θ̃)`.
    pub fn forward(&self, energy: f64, theta: &[f64]) -> (f64, f64, Vec<f64>) {
        (self.epsilon(), energy / (self.k * self.k), theta.iter().map(|t| t / self.k).collect())
    }

    /// `(E, Θ)` from `(Ẽ, Θ̃)`.
    pub fn inverse(&self, energy: f64, theta: &[f64]) -> (f64, Vec<f64>) {
        (energy * self.k * self.k, theta.iter().map(|t| t * self.k).collect())
    }
}

/// Lattice operator before rescaling: diagonal `Σ_i (Θ_i + K k_i·ω_i)²`,
/// hopping `λ V̂_{n−n'}`.
pub fn physical_matrix(
    region: &Region,
    map: &RescaleMap,
    theta: &[f64],
    omega: &Frequency,
    potential: &PotentialModel,
) -> CMatrix {
    let bs = potential.block_structure();
    let w = omega.entries();
    assemble_matrix(
        region,
        |k| {
            (0..bs.d())
                .map(|i| {
                    let u = theta[i] + map.k * bs.block_range(i).map(|c| k.entries()[c] as f64 * w[c]).sum::<f64>();
                    u * u
                })
                .sum()
        },
        map.lambda,
        potential,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{enumerate_region, MultiIndex, RegionDescriptor};
    use crate::linalg;
    use crate::msa::{rescale, unrescale};
    use crate::potential::ModelParams;
    use std::collections::BTreeMap;

    fn setup() -> (BlockStructure, Frequency, PotentialModel) {
        let b = BlockStructure::new(vec![2]).unwrap();
        let v = PotentialModel::from_named_model("separable-cosine", &b, &ModelParams::new(0.5)).unwrap();
        (b, Frequency::new(vec![1.0, 0.618]).unwrap(), v)
    }

    fn grid() -> Vec<Vec<f64>> {
        (0..25).map(|i| vec![-6.0 + 0.5 * i as f64]).collect()
    }

    #[test]
    fn plane_wave_is_exact() {
        let (_, w, v) = setup();
        let mut c = BTreeMap::new();
        c.insert(MultiIndex::zero(2), Complex64::new(1.0, 0.0));
        let support = Region::from_points(vec![MultiIndex::zero(2)]).unwrap();
        let sample = BlochSample {
            theta: vec![0.7],
            phase: vec![0.1, 0.2],
            energy: 0.49,
            coefficients: LatticeVector::new(c, None).unwrap(),
            support,
            x_grid: grid(),
        };
        let r = duality_residual(&sample, &w, 0.0, &v).unwrap();
        assert!(r.max_residual <= 1e-15);
        assert!(r.within_budget && r.lattice_equation_holds);
    }

    fn eigen_sample(shift: f64) -> (DualityReport, f64) {
        let (_, w, v) = setup();
        let op = DualOperator::new(vec![0.2], w.clone(), 0.05, v.clone()).unwrap();
        let region = enumerate_region(&RegionDescriptor::cube(MultiIndex::zero(2), 4));
        let (vals, vecs) = linalg::hermitian_eigen(&op.assemble(&region).matrix);
        let col: Vec<Complex64> = vecs.column(3).iter().copied().collect();
        let sample = BlochSample {
            theta: vec![0.2],
            phase: vec![0.4, 1.1],
            energy: vals[3] + shift,
            coefficients: LatticeVector::from_region(&region, &col),
            support: region,
            x_grid: grid(),
        };
        (duality_residual(&sample, &w, 0.05, &v).unwrap(), vals[3])
    }

    #[test]
    fn eigenvector_within_budget() {
        let (r, _) = eigen_sample(0.0);
        assert!(r.within_budget, "{r:?}");
        assert!(r.lattice_equation_holds);
    }

    #[test]
    fn shifted_energy_gives_linear_response() {
        let (r, _) = eigen_sample(0.1);
        assert!(!r.lattice_equation_holds);
        let expect = 0.1 * r.max_psi;
        assert!(r.max_residual <= 2.0 * expect && r.max_residual >= 0.5 * expect, "{r:?}");
    }

    #[test]
    fn rescale_examples() {
        let (e, et, tt) = rescale(1.0, 1.0, 3.0, &[0.5]).unwrap();
        assert_eq!((e, et, tt), (1.0, 3.0, vec![0.5]));
        let (e, et, tt) = rescale(2.0, 10.0, 50.0, &[5.0]).unwrap();
        assert!((e - 0.02).abs() < 1e-17 && (et - 0.5).abs() < 1e-16 && (tt[0] - 0.5).abs() < 1e-16);
        let (eb, tb) = unrescale(2.0, 10.0, et, &tt).unwrap();
        assert!((eb - 50.0).abs() <= 1e-15 * 50.0 && (tb[0] - 5.0).abs() <= 1e-15 * 5.0);
        assert!(rescale(1.0, 0.0, 1.0, &[0.0]).is_err());
    }

    #[test]
    fn rescale_conjugation() {
        let (_, w, v) = setup();
        let region = enumerate_region(&RegionDescriptor::cube(MultiIndex::zero(2), 3));
        let map = RescaleMap::new(0.7, 3.0).unwrap();
        let theta = [1.3];
        let phys = linalg::hermitian_eigenvalues(&physical_matrix(&region, &map, &theta, &w, &v));
        let (eps, _, tt) = map.forward(0.0, &theta);
        let op = DualOperator::new(tt, w, eps, v).unwrap();
        let scaled = op.assemble(&region).eigenvalues();
        for (p, s) in phys.iter().zip(&scaled) {
            assert!((p - 9.0 * s).abs() <= 1e-10 * p.abs().max(1.0));
        }
    }
}
