//! Executable versions of the estimates the multi-scale argument rests on.
//!
//! Every `verify_*` routine is a gated implication: hypotheses are evaluated
//! first and the conclusions are only asserted when all of them hold. The
//! outcome is a [`CheckReport`] with log-space or absolute margins.

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::linalg::CMatrix;

mod coupling;
mod duality;
mod poisson;
mod window;

pub use coupling::{
    cube_covering, search_covering, verify_coupling_decay, verify_coupling_norm, verify_perturbation_lemma,
    Covering, DecayCheckInput,
};
pub use duality::{duality_residual, physical_matrix, BlochSample, DualityReport, RescaleMap};
pub use poisson::{absence_witness, poisson_residual, LatticeVector, PolyBound, PoissonOptions, WitnessReport};
pub use window::{sphere_box_grid, spectral_window_check, WindowReport};

/// Uniform report of a gated check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check_name: String,
    pub hypotheses_hold: bool,
    /// `None` when the hypotheses failed and nothing was asserted.
    pub conclusions_hold: Option<bool>,
    pub margins: BTreeMap<String, f64>,
    pub budget: BTreeMap<String, f64>,
    pub inputs_digest: String,
}

impl CheckReport {
    fn new(name: &str, digest: String) -> Self {
        Self {
            check_name: name.to_string(),
            hypotheses_hold: false,
            conclusions_hold: None,
            margins: BTreeMap::new(),
            budget: BTreeMap::new(),
            inputs_digest: digest,
        }
    }

    /// Conclusions were asserted and held.
    pub fn passed(&self) -> bool {
        self.conclusions_hold == Some(true)
    }

    /// Smallest recorded margin whose key starts with `prefix`.
    pub fn worst_margin(&self, prefix: &str) -> Option<f64> {
        self.margins
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| *v)
            .reduce(f64::min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// SHA-256 over a canonical byte encoding of check inputs.
#[derive(Default)]
pub(crate) struct InputsDigest(Sha256);

impl InputsDigest {
    pub(crate) fn text(&mut self, s: &str) -> &mut Self {
        self.0.update((s.len() as u64).to_le_bytes());
        self.0.update(s.as_bytes());
        self
    }

    pub(crate) fn real(&mut self, x: f64) -> &mut Self {
        self.0.update(x.to_bits().to_le_bytes());
        self
    }

    pub(crate) fn reals(&mut self, xs: &[f64]) -> &mut Self {
        self.0.update((xs.len() as u64).to_le_bytes());
        for x in xs {
            self.real(*x);
        }
        self
    }

    pub(crate) fn integers(&mut self, xs: &[i64]) -> &mut Self {
        self.0.update((xs.len() as u64).to_le_bytes());
        for x in xs {
            self.0.update(x.to_le_bytes());
        }
        self
    }

    pub(crate) fn matrix(&mut self, m: &CMatrix) -> &mut Self {
        self.0.update((m.nrows() as u64).to_le_bytes());
        self.0.update((m.ncols() as u64).to_le_bytes());
        for z in m.iter() {
            self.real(z.re).real(z.im);
        }
        self
    }

    pub(crate) fn finish(&mut self) -> String {
        let bytes = std::mem::take(&mut self.0).finalize();
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `(Θ, ω, ε, V)` of an operator, hashed.
pub(crate) fn digest_operator(d: &mut InputsDigest, op: &crate::dual_green::DualOperator) {
    d.reals(op.theta()).reals(op.omega().entries()).real(op.epsilon());
    d.real(op.potential().rho());
    for (k, v) in op.potential().coefficients() {
        d.integers(k.entries()).real(v.re).real(v.im);
    }
}

/// `rescale(λ, K, E, Θ) = (λ/K², E/K², Θ/K)`; see [`RescaleMap`].
pub fn rescale(lambda: f64, k: f64, energy: f64, theta: &[f64]) -> crate::Result<(f64, f64, Vec<f64>)> {
    RescaleMap::new(lambda, k).map(|m| m.forward(energy, theta))
}

/// Inverse of [`rescale`].
pub fn unrescale(lambda: f64, k: f64, energy: f64, theta: &[f64]) -> crate::Result<(f64, Vec<f64>)> {
    RescaleMap::new(lambda, k).map(|m| m.inverse(energy, theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = InputsDigest::default().text("x").real(1.0).finish();
        let b = InputsDigest::default().text("x").real(1.0).finish();
        let c = InputsDigest::default().text("x").real(1.0 + f64::EPSILON).finish();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn report_json_has_stable_keys() {
        let mut r = CheckReport::new("demo", "00".into());
        r.margins.insert("z".into(), 1.0);
        r.margins.insert("a".into(), 2.0);
        let json = r.to_json();
        let keys = ["check_name", "hypotheses_hold", "conclusions_hold", "margins", "budget", "inputs_digest"];
        let pos: Vec<usize> = keys.iter().map(|k| json.find(&format!("\"{k}\"")).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(json.find("\"a\"").unwrap() < json.find("\"z\"").unwrap());
        assert!(json.contains("\"conclusions_hold\": null"));
    }
}
