//! The Aubry-dual operator `h_Λ(Θ)` on finite regions and its Green's function
//! `G_Λ(E;Θ) = (h_Λ(Θ) − E)^{-1}`.
//!
//! Inverses are exact real/complex dense inversions guarded by a
//! near-singularity test on the smallest singular value; no imaginary
//! regularization is added. For a Hermitian `h_Λ` the singular values of
//! `h_Λ − E` are `|μ − E|` over its eigenvalues `μ`, so the spectral norm of
//! `G` is `1 / min |μ − E|`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::g17;
use crate::lattice::{BlockStructure, Frequency, MultiIndex, Region};
use crate::linalg::{self, CMatrix};
use crate::potential::PotentialModel;

/// `Σ_i (Θ_i + k_i·ω_i)²`.
pub fn diagonal_symbol(bs: &BlockStructure, theta: &[f64], k: &MultiIndex, omega: &Frequency) -> f64 {
    diagonal_symbol_raw(bs, theta, k.entries(), omega.entries())
}

pub(crate) fn diagonal_symbol_raw(bs: &BlockStructure, theta: &[f64], k: &[i64], omega: &[f64]) -> f64 {
    (0..bs.d())
        .map(|i| {
            let shift: f64 = bs.block_range(i).map(|c| k[c] as f64 * omega[c]).sum();
            let u = theta[i] + shift;
            u * u
        })
        .sum()
}

/// Builds the matrix `diag(n) δ_{nn'} + coupling · V̂_{n−n'}` on `region`.
pub(crate) fn assemble_matrix(
    region: &Region,
    diag: impl Fn(&MultiIndex) -> f64,
    coupling: f64,
    potential: &PotentialModel,
) -> CMatrix {
    let size = region.len();
    let mut m = CMatrix::zeros(size, size);
    for (row, n) in region.points().iter().enumerate() {
        m[(row, row)] = Complex64::new(diag(n), 0.0);
        if coupling == 0.0 {
            continue;
        }
        for (shift, v) in potential.coefficients() {
            // n − n' = shift
            let np = n.sub(shift);
            if let Some(col) = region.index_of(&np) {
                m[(row, col)] += v * coupling;
            }
        }
    }
    m
}

/// Parameters `(Θ, ω, ε, V)` of the dual operator `h(Θ)`.
#[derive(Debug, Clone)]
pub struct DualOperator {
    bs: BlockStructure,
    theta: Vec<f64>,
    omega: Frequency,
    epsilon: f64,
    potential: PotentialModel,
}

impl DualOperator {
    pub fn new(theta: Vec<f64>, omega: Frequency, epsilon: f64, potential: PotentialModel) -> Result<Self> {
        let bs = potential.block_structure().clone();
        if theta.len() != bs.d() {
            return Err(Error::Structure(format!("Θ has {} components, d = {}", theta.len(), bs.d())));
        }
        if omega.len() != bs.b() {
            return Err(Error::Structure(format!("ω has {} entries, b = {}", omega.len(), bs.b())));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::Config(format!("coupling ε must be non-negative, got {epsilon}")));
        }
        Ok(Self { bs, theta, omega, epsilon, potential })
    }

    pub fn block_structure(&self) -> &BlockStructure {
        &self.bs
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn omega(&self) -> &Frequency {
        &self.omega
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn potential(&self) -> &PotentialModel {
        &self.potential
    }

    /// Same operator at a different momentum.
    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        assert_eq!(theta.len(), self.bs.d());
        Self { theta, ..self.clone() }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..self.clone() }
    }

    pub fn diagonal(&self, k: &MultiIndex) -> f64 {
        diagonal_symbol_raw(&self.bs, &self.theta, k.entries(), self.omega.entries())
    }

    /// `h_Λ(Θ) = R_Λ h(Θ) R_Λ`.
    pub fn assemble(&self, region: &Region) -> DualMatrix {
        let matrix = assemble_matrix(region, |k| self.diagonal(k), self.epsilon, &self.potential);
        DualMatrix { region: region.clone(), matrix }
    }

    /// `(h(Θ)Z)_n` for `n` anywhere, with `Z` given on a finite support.
    pub fn apply_at(&self, n: &MultiIndex, z: impl Fn(&MultiIndex) -> Complex64) -> Complex64 {
        let mut acc = z(n) * self.diagonal(n);
        if self.epsilon != 0.0 {
            for (shift, v) in self.potential.coefficients() {
                acc += v * self.epsilon * z(&n.sub(shift));
            }
        }
        acc
    }

    /// `‖G_Λ(E;Θ)‖`, or `∞` when `E` is an eigenvalue to working precision.
    pub fn resolvent_norm(&self, region: &Region, energy: f64) -> f64 {
        let eig = self.assemble(region).eigenvalues();
        let (smin, smax) = singular_extremes(&eig, energy);
        if smin <= DEFAULT_SING_TOL * smax {
            f64::INFINITY
        } else {
            1.0 / smin
        }
    }

    /// Green's function with its diagnostic report.
    pub fn green(&self, region: &Region, energy: f64, opts: &GreenOptions) -> Result<Green> {
        if region.is_empty() {
            return Err(Error::Structure("Green's function of an empty region".into()));
        }
        let h = self.assemble(region);
        let eig = h.eigenvalues();
        let (sigma_min, sigma_max) = singular_extremes(&eig, energy);
        if sigma_min <= opts.sing_tol * sigma_max {
            return Err(Error::NearSingular { sigma_min });
        }
        let shifted = h.shifted(energy);
        let inverse = linalg::invert(&shifted).ok_or(Error::NearSingular { sigma_min })?;
        let report = GreenReport::from_inverse(region, &inverse, energy, 1.0 / sigma_min, sigma_min, opts);
        Ok(Green { report, inverse })
    }

    /// Like [`Self::green`] but folds a near-singular outcome into the report.
    pub fn green_report(&self, region: &Region, energy: f64, opts: &GreenOptions) -> Result<GreenReport> {
        match self.green(region, energy, opts) {
            Ok(g) => Ok(g.report),
            Err(Error::NearSingular { sigma_min }) => Ok(GreenReport::near_singular(energy, sigma_min, opts)),
            Err(e) => Err(e),
        }
    }
}

const DEFAULT_SING_TOL: f64 = 1e-12;

fn singular_extremes(eigenvalues: &[f64], energy: f64) -> (f64, f64) {
    eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), mu| {
        let s = (mu - energy).abs();
        (lo.min(s), hi.max(s))
    })
}

/// `h_Λ(Θ)` together with its row/column index map (the region's order).
#[derive(Debug, Clone)]
pub struct DualMatrix {
    pub region: Region,
    pub matrix: CMatrix,
}

impl DualMatrix {
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(&self.matrix)
    }

    /// `h_Λ − E`.
    pub fn shifted(&self, energy: f64) -> CMatrix {
        let mut m = self.matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] -= Complex64::new(energy, 0.0);
        }
        m
    }

    pub fn is_hermitian(&self) -> bool {
        self.matrix == self.matrix.adjoint()
    }
}

/// Row-major text dump: one line per row, `re im` per entry, `%.17g` reals.
pub fn matrix_to_text(m: &CMatrix) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(' ');
            }
            let z = m[(r, c)];
            let _ = write!(out, "{} {}", g17(z.re), g17(z.im));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenOptions {
    /// Scale `N` of the region; fixes the decay window `|n − n'| ≥ N/10`.
    pub scale: usize,
    /// Decay law `ρ` of the potential; LDT decay uses `ρ/10`.
    pub rho: f64,
    /// Relative singularity tolerance on `σ_min / σ_max`.
    pub sing_tol: f64,
}

impl GreenOptions {
    pub fn new(scale: usize, rho: f64) -> Self {
        Self { scale, rho, sing_tol: DEFAULT_SING_TOL }
    }
}

/// Least-squares fit `log|G(n,n')| ≈ intercept − rate·|n − n'|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenReport {
    pub energy: f64,
    pub scale: usize,
    pub rho: f64,
    /// `‖G‖`, infinite when near-singular.
    pub op_norm: f64,
    pub sigma_min: f64,
    pub near_singular: bool,
    pub decay_fit: Option<DecayFit>,
    /// `profile[r] = max_{|n−n'| = r} |G(n,n')|`.
    pub profile: Vec<f64>,
    pub ldt_pass: bool,
}

impl GreenReport {
    fn from_inverse(
        region: &Region,
        g: &CMatrix,
        energy: f64,
        op_norm: f64,
        sigma_min: f64,
        opts: &GreenOptions,
    ) -> Self {
        let pts = region.points();
        let diam = region.diam() as usize;
        let mut profile = vec![0.0f64; diam + 1];
        let window = opts.scale as f64 / 10.0;
        let (mut sx, mut sy, mut sxx, mut sxy, mut count) = (0.0, 0.0, 0.0, 0.0, 0usize);
        let mut fit_pts = Vec::new();
        for (i, n) in pts.iter().enumerate() {
            for (j, np) in pts.iter().enumerate() {
                let r = n.distance(np) as usize;
                let a = g[(i, j)].norm();
                if a > profile[r] {
                    profile[r] = a;
                }
                if r as f64 >= window && a > 1e-300 {
                    let (x, y) = (r as f64, a.ln());
                    sx += x;
                    sy += y;
                    sxx += x * x;
                    sxy += x * y;
                    count += 1;
                    fit_pts.push((x, y));
                }
            }
        }
        let decay_fit = if count >= 2 {
            let nf = count as f64;
            let denom = nf * sxx - sx * sx;
            if denom.abs() > 0.0 {
                let slope = (nf * sxy - sx * sy) / denom;
                let intercept = (sy - slope * sx) / nf;
                let ss: f64 = fit_pts.iter().map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
                Some(DecayFit { rate: -slope, intercept, residual: (ss / nf).sqrt(), samples: count })
            } else {
                None
            }
        } else {
            None
        };
        let ldt_pass = ldt_predicate(op_norm, &profile, opts.scale, opts.rho);
        Self {
            energy,
            scale: opts.scale,
            rho: opts.rho,
            op_norm,
            sigma_min,
            near_singular: false,
            decay_fit,
            profile,
            ldt_pass,
        }
    }

    pub fn near_singular(energy: f64, sigma_min: f64, opts: &GreenOptions) -> Self {
        Self {
            energy,
            scale: opts.scale,
            rho: opts.rho,
            op_norm: f64::INFINITY,
            sigma_min,
            near_singular: true,
            decay_fit: None,
            profile: Vec::new(),
            ldt_pass: false,
        }
    }

    /// `‖G‖ ≤ 2/δ` and `|G(n,n')| ≤ (2/δ) e^{−ρ|n−n'|}`: the Neumann-series
    /// bounds valid off the resonant set when `ε ≤ δ / (2(2N+1)^b)`.
    pub fn first_step_bounds_hold(&self, delta: f64, rho: f64) -> bool {
        if self.near_singular {
            return false;
        }
        let cap = 2.0 / delta;
        self.op_norm <= cap
            && self
                .profile
                .iter()
                .enumerate()
                .all(|(r, &a)| a <= cap * (-rho * r as f64).exp())
    }
}

fn ldt_predicate(op_norm: f64, profile: &[f64], n: usize, rho: f64) -> bool {
    if !op_norm.is_finite() || op_norm > (n as f64).sqrt().exp() {
        return false;
    }
    let window = n as f64 / 10.0;
    profile
        .iter()
        .enumerate()
        .filter(|(r, _)| *r as f64 >= window)
        .all(|(r, &a)| a <= (-(rho / 10.0) * r as f64).exp())
}

/// The large-deviation predicate: `‖G‖ ≤ e^{√N}` and
/// `|G(n,n')| ≤ e^{−(ρ/10)|n−n'|}` whenever `|n − n'| ≥ N/10`.
pub fn ldt_check(report: &GreenReport, n: usize, rho: f64) -> bool {
    !report.near_singular && ldt_predicate(report.op_norm, &report.profile, n, rho)
}

/// A computed Green's function.
#[derive(Debug, Clone)]
pub struct Green {
    pub report: GreenReport,
    pub inverse: CMatrix,
}

impl Green {
    /// `max |(h_Λ − E)G − I|`.
    pub fn solve_residual(&self, h: &DualMatrix) -> f64 {
        let prod = h.shifted(self.report.energy) * &self.inverse;
        let id = DMatrix::<Complex64>::identity(prod.nrows(), prod.ncols());
        linalg::max_abs(&(prod - id))
    }
}
