//! Momentum-space laboratory for analytic quasi-periodic Schrödinger operators.
//!
//! The continuum operator `−Δ + εV(θ + xω)` on `R^d` is studied through its
//! Aubry-dual lattice operator on `Z^b`,
//!
//! ```text
//! (h(Θ)Z)_k = Σ_{k'} ε V̂_{k−k'} Z_{k'} + Σ_i (Θ_i + k_i·ω_i)² Z_k,
//! ```
//!
//! restricted to finite regions. The crate assembles those finite-volume
//! matrices, computes their Green's functions, and checks the quantitative
//! estimates of a momentum-space multi-scale analysis on concrete instances.

pub mod dual_green;
pub mod error;
pub mod exec;
pub mod format;
pub mod lattice;
pub mod linalg;
pub mod msa;
pub mod oracle;
pub mod potential;
pub mod resonance;
pub mod rng;
pub mod sweep;

pub use error::{Error, Result};
pub use exec::Executor;
