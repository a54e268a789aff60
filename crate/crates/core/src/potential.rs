//! Analytic quasi-periodic potentials as finitely supported Fourier series.
//!
//! A [`PotentialModel`] stores `V̂_k` for `0 < |k| ≤ K_cut`. The stored
//! coefficients always satisfy
//!
//! * `V̂_0 = 0` (zero mean),
//! * `V̂_{−k} = conj(V̂_k)` (real-valued `V`),
//! * `|V̂_k| ≤ e^{−ρ|k|}`.
//!
//! Truncation at `K_cut` is certified by [`PotentialModel::tail_bound`].

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::g17;
use crate::lattice::{cube_points, BlockStructure, MultiIndex};
use crate::rng::task_rng;

/// Parameters for [`PotentialModel::from_named_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub rho: f64,
    #[serde(default = "default_k_cut")]
    pub k_cut: u64,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_k_cut() -> u64 {
    1
}

impl ModelParams {
    pub fn new(rho: f64) -> Self {
        Self { rho, k_cut: 1, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialModel {
    bs: BlockStructure,
    coefficients: BTreeMap<MultiIndex, Complex64>,
    rho: f64,
    k_cut: u64,
}

/// Outcome of [`PotentialModel::verify_decay`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCheck {
    pub holds: bool,
    /// Index maximizing `|V̂_k| e^{ρ|k|}` together with that ratio.
    pub worst: Option<(MultiIndex, f64)>,
}

impl PotentialModel {
    /// Validates and wraps explicit coefficients. Zero entries are dropped.
    pub fn new(
        bs: BlockStructure,
        coefficients: BTreeMap<MultiIndex, Complex64>,
        rho: f64,
        k_cut: u64,
    ) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Config(format!("decay rate ρ must lie in (0, 1), got {rho}")));
        }
        if k_cut == 0 {
            return Err(Error::Config("K_cut must be positive".into()));
        }
        let coefficients: BTreeMap<_, _> =
            coefficients.into_iter().filter(|(_, v)| *v != Complex64::new(0.0, 0.0)).collect();
        let model = Self { bs, coefficients, rho, k_cut };
        model.validate()?;
        Ok(model)
    }

    /// The `ε = 0` case: no coefficients.
    pub fn zero(bs: BlockStructure, rho: f64) -> Result<Self> {
        Self::new(bs, BTreeMap::new(), rho, 1)
    }

    fn validate(&self) -> Result<()> {
        let b = self.bs.b();
        for (k, v) in &self.coefficients {
            if k.len() != b {
                return Err(Error::Structure(format!("coefficient index {k} is not {b}-dimensional")));
            }
            if k.is_zero() {
                return Err(Error::Invariant("V̂_0 must vanish (zero mean)".into()));
            }
            if k.sup_norm() > self.k_cut {
                return Err(Error::Invariant(format!("V̂_{k} lies beyond K_cut = {}", self.k_cut)));
            }
            let mirror = self.coefficient(&k.neg());
            let scale = v.norm().max(1e-300);
            if (mirror - v.conj()).norm() > 1e-14 * scale {
                return Err(Error::Invariant(format!("V̂_{{-k}} ≠ conj(V̂_k) at k = {k}")));
            }
        }
        let check = self.verify_decay(self.rho);
        if !check.holds {
            let (k, ratio) = check.worst.expect("a failing check has an offender");
            return Err(Error::Invariant(format!(
                "|V̂_k| e^(ρ|k|) = {ratio} > 1 at k = {k} for ρ = {}",
                self.rho
            )));
        }
        Ok(())
    }

    /// Builds one of the named models: `separable-cosine`
    /// (`Σ_j cos θ_j`), `two-cosine-surace` (`cos θ_1 + cos θ_2`, b = 2) or
    /// `random-analytic` (seeded coefficients uniform in the disk of radius
    /// `e^{−ρ|k|}`).
    pub fn from_named_model(name: &str, bs: &BlockStructure, params: &ModelParams) -> Result<Self> {
        let b = bs.b();
        match name {
            "separable-cosine" | "two-cosine-surace" => {
                if name == "two-cosine-surace" && b != 2 {
                    return Err(Error::Config(format!("two-cosine-surace needs b = 2, got b = {b}")));
                }
                let mut coefficients = BTreeMap::new();
                for j in 0..b {
                    coefficients.insert(MultiIndex::unit(b, j, 1), Complex64::new(0.5, 0.0));
                    coefficients.insert(MultiIndex::unit(b, j, -1), Complex64::new(0.5, 0.0));
                }
                Self::new(bs.clone(), coefficients, params.rho, 1)
            }
            "random-analytic" => {
                let seed = params.seed.ok_or_else(|| {
                    Error::Config("random-analytic needs a seed".into())
                })?;
                let mut rng = task_rng(seed, 0);
                let mut coefficients = BTreeMap::new();
                for k in cube_points(b, params.k_cut as i64) {
                    // Draw once per ± pair, from the lexicographically larger member.
                    if k.is_zero() || k < k.neg() {
                        continue;
                    }
                    let radius = (-params.rho * k.sup_norm() as f64).exp();
                    let r = radius * rng.gen::<f64>().sqrt();
                    let phi = TAU * rng.gen::<f64>();
                    let z = Complex64::from_polar(r, phi);
                    coefficients.insert(k.neg(), z.conj());
                    coefficients.insert(k, z);
                }
                Self::new(bs.clone(), coefficients, params.rho, params.k_cut)
            }
            other => Err(Error::Config(format!("unknown potential model `{other}`"))),
        }
    }

    pub fn block_structure(&self) -> &BlockStructure {
        &self.bs
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn k_cut(&self) -> u64 {
        self.k_cut
    }

    pub fn coefficients(&self) -> &BTreeMap<MultiIndex, Complex64> {
        &self.coefficients
    }

    pub fn coefficient(&self, k: &MultiIndex) -> Complex64 {
        self.coefficients.get(k).copied().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// True when every coefficient is real, so `h_Λ` is real symmetric.
    pub fn is_real(&self) -> bool {
        self.coefficients.values().all(|v| v.im == 0.0)
    }

    /// `V(θ) = Σ V̂_k e^{ik·θ}`, real part of the finite sum.
    pub fn evaluate(&self, theta: &[f64]) -> f64 {
        let z = self.evaluate_complex(theta);
        debug_assert!(
            z.im.abs() <= 1e-12 * self.coefficients.len().max(1) as f64,
            "imaginary part {} exceeds round-off",
            z.im
        );
        z.re
    }

    /// The raw complex Fourier sum; its imaginary part is round-off.
    pub fn evaluate_complex(&self, theta: &[f64]) -> Complex64 {
        self.coefficients
            .iter()
            .map(|(k, v)| {
                let phase: f64 = k.entries().iter().zip(theta).map(|(&kk, &t)| kk as f64 * t).sum();
                v * Complex64::from_polar(1.0, phase)
            })
            .sum()
    }

    /// Checks `|V̂_k| ≤ e^{−ρ|k|}` for every stored coefficient.
    pub fn verify_decay(&self, rho: f64) -> DecayCheck {
        let worst = self
            .coefficients
            .iter()
            .map(|(k, v)| (k, v.norm() * (rho * k.sup_norm() as f64).exp()))
            .fold(None::<(&MultiIndex, f64)>, |acc, (k, r)| match acc {
                Some((_, best)) if best >= r => acc,
                _ => Some((k, r)),
            });
        let holds = worst.map_or(true, |(_, r)| r <= 1.0);
        DecayCheck { holds, worst: worst.map(|(k, r)| (k.clone(), r)) }
    }

    /// `Σ |V̂_k|`, the certified upper bound used for `|V|_max`.
    pub fn l1_norm(&self) -> f64 {
        self.coefficients.values().map(|v| v.norm()).sum()
    }

    /// Bound on the discarded tail `Σ_{|k| > K_cut} e^{−ρ|k|}`.
    pub fn tail_bound(&self) -> f64 {
        let b = self.bs.b() as i32;
        let mut total = 0.0;
        let mut m = self.k_cut + 1;
        loop {
            let shell = (2.0 * m as f64 + 1.0).powi(b) - (2.0 * m as f64 - 1.0).powi(b);
            let term = shell * (-self.rho * m as f64).exp();
            total += term;
            if term < 1e-18 * total.max(1e-300) || m > self.k_cut + 1_000_000 {
                break;
            }
            m += 1;
        }
        total
    }

    /// One line per coefficient: `k_1 … k_b re im`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.coefficients {
            for x in k.entries() {
                out.push_str(&x.to_string());
                out.push(' ');
            }
            out.push_str(&g17(v.re));
            out.push(' ');
            out.push_str(&g17(v.im));
            out.push('\n');
        }
        out
    }

    /// Parses [`Self::to_table`] output and re-validates every invariant.
    /// `K_cut` is the largest stored `|k|`.
    pub fn from_table(text: &str, bs: &BlockStructure, rho: f64) -> Result<Self> {
        let b = bs.b();
        let mut coefficients = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != b + 2 {
                return Err(Error::Config(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 1,
                    b + 2,
                    fields.len()
                )));
            }
            let bad = |what: &str| Error::Config(format!("line {}: malformed {what}", lineno + 1));
            let k = fields[..b]
                .iter()
                .map(|s| s.parse::<i64>().map_err(|_| bad("index")))
                .collect::<Result<Vec<_>>>()?;
            let re: f64 = fields[b].parse().map_err(|_| bad("real part"))?;
            let im: f64 = fields[b + 1].parse().map_err(|_| bad("imaginary part"))?;
            coefficients.insert(MultiIndex::new(k), Complex64::new(re, im));
        }
        let k_cut = coefficients.keys().map(|k| k.sup_norm()).max().unwrap_or(1).max(1);
        Self::new(bs.clone(), coefficients, rho, k_cut)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn bs2() -> BlockStructure {
        BlockStructure::new(vec![2]).unwrap()
    }

    #[test]
    fn separable_cosine_coefficients() {
        let v = PotentialModel::from_named_model("separable-cosine", &bs2(), &ModelParams::new(0.5)).unwrap();
        assert_eq!(v.coefficients().len(), 4);
        for k in [[1, 0], [0, 1], [-1, 0], [0, -1]] {
            assert_eq!(v.coefficient(&MultiIndex::new(k.to_vec())), Complex64::new(0.5, 0.0));
        }
        assert_eq!(v.coefficient(&MultiIndex::new(vec![1, 1])), Complex64::default());
        assert_eq!(v.l1_norm(), 2.0);
    }

    #[test]
    fn separable_cosine_rejects_fast_decay() {
        // e^{-0.8} ≈ 0.449 < 0.5
        let err = PotentialModel::from_named_model("separable-cosine", &bs2(), &ModelParams::new(0.8));
        assert!(matches!(err, Err(Error::Invariant(_))));
    }

    #[test]
    fn unknown_model_is_a_config_error() {
        let err = PotentialModel::from_named_model("mathieu", &bs2(), &ModelParams::new(0.5));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn random_model_is_deterministic() {
        let p = ModelParams { rho: 0.4, k_cut: 3, seed: Some(11) };
        let a = PotentialModel::from_named_model("random-analytic", &bs2(), &p).unwrap();
        let b = PotentialModel::from_named_model("random-analytic", &bs2(), &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.coefficients().len(), 7 * 7 - 1);
        assert!(a.verify_decay(0.4).holds);
    }

    #[test]
    fn evaluate_examples() {
        let v = PotentialModel::from_named_model("separable-cosine", &bs2(), &ModelParams::new(0.5)).unwrap();
        assert!((v.evaluate(&[0.0, 0.0]) - 2.0).abs() < 1e-15);
        assert!((v.evaluate(&[PI, PI / 2.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn grid_mean_vanishes() {
        let p = ModelParams { rho: 0.3, k_cut: 2, seed: Some(5) };
        let v = PotentialModel::from_named_model("random-analytic", &bs2(), &p).unwrap();
        let m = 4 * v.k_cut() as usize;
        let mut sum = 0.0;
        for i in 0..m {
            for j in 0..m {
                sum += v.evaluate(&[TAU * i as f64 / m as f64, TAU * j as f64 / m as f64]);
            }
        }
        assert!((sum / (m * m) as f64).abs() < 1e-10);
    }

    #[test]
    fn evaluate_matches_trigonometric_oracle() {
        // V = Σ_{pairs} 2 Re(V̂_k e^{ik·θ}) = Σ 2(a cos φ − b sin φ)
        let p = ModelParams { rho: 0.5, k_cut: 2, seed: Some(3) };
        let v = PotentialModel::from_named_model("random-analytic", &bs2(), &p).unwrap();
        let mut rng = task_rng(77, 0);
        for _ in 0..100 {
            let theta = [rng.gen::<f64>() * TAU, rng.gen::<f64>() * TAU];
            let mut oracle = 0.0;
            for (k, c) in v.coefficients() {
                if k < &k.neg() {
                    continue;
                }
                let phi = k.entries()[0] as f64 * theta[0] + k.entries()[1] as f64 * theta[1];
                oracle += 2.0 * (c.re * phi.cos() - c.im * phi.sin());
            }
            assert!((v.evaluate(&theta) - oracle).abs() < 1e-10);
            let z = v.evaluate_complex(&theta);
            assert!(z.im.abs() <= 1e-12 * v.coefficients().len() as f64);
            assert!(z.re.abs() <= v.l1_norm() + 1e-12);
        }
    }

    #[test]
    fn verify_decay_examples() {
        let v = PotentialModel::from_named_model("separable-cosine", &bs2(), &ModelParams::new(0.5)).unwrap();
        assert!(v.verify_decay(0.5).holds);
        let c = v.verify_decay(0.7);
        assert!(!c.holds);
        let (k, ratio) = c.worst.unwrap();
        assert_eq!(k.sup_norm(), 1);
        assert!((ratio - 0.5 * 0.7f64.exp()).abs() < 1e-15);

        let empty = PotentialModel::zero(bs2(), 0.5).unwrap();
        assert!(empty.verify_decay(0.9).holds);
        assert!(empty.verify_decay(0.9).worst.is_none());
    }

    #[test]
    fn asymmetric_coefficients_are_rejected() {
        let mut c = BTreeMap::new();
        c.insert(MultiIndex::new(vec![1, 0]), Complex64::new(0.1, 0.2));
        c.insert(MultiIndex::new(vec![-1, 0]), Complex64::new(0.1, 0.2));
        assert!(matches!(PotentialModel::new(bs2(), c, 0.5, 1), Err(Error::Invariant(_))));
    }

    #[test]
    fn table_round_trip_revalidates() {
        let p = ModelParams { rho: 0.5, k_cut: 2, seed: Some(8) };
        let v = PotentialModel::from_named_model("random-analytic", &bs2(), &p).unwrap();
        let back = PotentialModel::from_table(&v.to_table(), &bs2(), 0.5).unwrap();
        assert_eq!(v, back);

        let broken = "1 0 0.9 0\n-1 0 0.9 0\n";
        assert!(matches!(PotentialModel::from_table(broken, &bs2(), 0.5), Err(Error::Invariant(_))));
        assert!(matches!(PotentialModel::from_table("1 0 x 0\n", &bs2(), 0.5), Err(Error::Config(_))));
    }

    #[test]
    fn tail_bound_matches_direct_sum() {
        let v = PotentialModel::from_named_model("separable-cosine", &bs2(), &ModelParams::new(0.5)).unwrap();
        let mut direct = 0.0;
        for k in cube_points(2, 120) {
            if k.sup_norm() > 1 {
                direct += (-0.5 * k.sup_norm() as f64).exp();
            }
        }
        assert!((v.tail_bound() - direct).abs() < 1e-9 * direct);
    }
}
