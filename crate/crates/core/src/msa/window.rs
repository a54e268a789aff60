use num_complex::Complex64;
use serde::Serialize;

use crate::dual_green::DualOperator;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::lattice::{Frequency, Region};
use crate::linalg;
use crate::potential::PotentialModel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowReport {
    pub energy: f64,
    /// `min_Θ dist(E, σ(h_Λ(Θ)))` over the grid.
    pub min_dist: f64,
    pub argmin_theta: Vec<f64>,
    /// `|V|_max` proxy `Σ|V̂_k|`.
    pub v_max: f64,
    /// `ε·|V|_max`.
    pub bound: f64,
    /// `min_Θ min_k |diag(Θ,k) − E|` over the grid.
    pub grid_term: f64,
    /// `min_{Θ,(μ,Z)} (|μ − E| + ‖(h − μ)Z‖) − min_dist`: the eigenpair leakage
    /// out of `Λ` turns a finite-volume eigenvalue into a point of the
    /// infinite-lattice spectrum, so `dist(E, σ(h)) ≤ min_dist + truncation_term`.
    pub truncation_term: f64,
    pub slack: f64,
    pub pass: bool,
    pub grid_points: usize,
}

/// Grid of step `step` anchored at the origin, restricted to the shell
/// `|‖Θ‖ − √E| ≤ halo`.
pub fn sphere_box_grid(energy: f64, d: usize, step: f64, halo: f64) -> Vec<Vec<f64>> {
    let r = energy.max(0.0).sqrt();
    let reach = ((r + halo) / step).ceil() as i64;
    let side: Vec<f64> = (-reach..=reach).map(|m| m as f64 * step).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let p: Vec<f64> = idx.iter().map(|&i| side[i]).collect();
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - r).abs() <= halo + 1e-12 {
            out.push(p);
        }
        let mut axis = d;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < side.len() {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Distance from `E ≥ 0` to the finite-volume spectrum, minimized over a
/// momentum grid, against `ε|V|_max + grid_term + truncation_term`.
pub fn spectral_window_check(
    energy: f64,
    region: &Region,
    omega: &Frequency,
    epsilon: f64,
    potential: &PotentialModel,
    theta_grid: &[Vec<f64>],
    exec: &Executor,
) -> Result<WindowReport> {
    if !(energy >= 0.0) {
        return Err(Error::Precondition(format!("spectral window needs E ≥ 0, got {energy}")));
    }
    if theta_grid.is_empty() || region.is_empty() {
        return Err(Error::Structure("spectral window needs a non-empty grid and region".into()));
    }
    let base = DualOperator::new(theta_grid[0].clone(), omega.clone(), epsilon, potential.clone())?;
    let collar = region.collar(potential.k_cut());
    // Collar point `n` couples to Λ through `V̂_{n−m}` at the points `m`.
    let couplings: Vec<Vec<(usize, Complex64)>> = collar
        .points()
        .iter()
        .map(|n| {
            potential
                .coefficients()
                .iter()
                .filter_map(|(shift, v)| region.index_of(&n.sub(shift)).map(|idx| (idx, v * epsilon)))
                .collect()
        })
        .collect();
    let per_point = exec.map(theta_grid.len(), |i| {
        let op = base.with_theta(theta_grid[i].clone());
        let (vals, vecs) = linalg::hermitian_eigen(&op.assemble(region).matrix);
        let dist = vals.iter().map(|mu| (mu - energy).abs()).fold(f64::INFINITY, f64::min);
        let free = region.points().iter().map(|k| (op.diagonal(k) - energy).abs()).fold(f64::INFINITY, f64::min);
        let mut certified = f64::INFINITY;
        for (j, mu) in vals.iter().enumerate() {
            let gap = (mu - energy).abs();
            if gap >= certified {
                continue;
            }
            let col = vecs.column(j);
            let leak2: f64 = couplings
                .iter()
                .map(|row| row.iter().map(|(idx, c)| c * col[*idx]).sum::<Complex64>().norm_sqr())
                .sum();
            certified = certified.min(gap + leak2.sqrt());
        }
        (dist, free, certified)
    });
    let (best, &(min_dist, _, _)) = per_point
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .expect("non-empty grid");
    let grid_term = per_point.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let certified = per_point.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    let truncation_term = (certified - min_dist).max(0.0);
    let v_max = potential.l1_norm();
    let bound = epsilon * v_max;
    let slack = grid_term + truncation_term;
    Ok(WindowReport {
        energy,
        min_dist,
        argmin_theta: theta_grid[best].clone(),
        v_max,
        bound,
        grid_term,
        truncation_term,
        slack,
        pass: min_dist <= bound + slack,
        grid_points: theta_grid.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{enumerate_region, BlockStructure, MultiIndex, RegionDescriptor};
    use crate::potential::ModelParams;

    #[test]
    fn grid_shell() {
        let g = sphere_box_grid(0.0, 1, 0.05, 0.5);
        assert_eq!(g.len(), 21);
        let g = sphere_box_grid(1.0, 1, 0.05, 0.5);
        assert!(g.iter().all(|p| (p[0].abs() - 1.0).abs() <= 0.5 + 1e-12));
        assert!(g.iter().any(|p| (p[0] - 1.0).abs() < 1e-12));
        let g2 = sphere_box_grid(1.0, 2, 0.25, 0.25);
        assert!(g2.iter().all(|p| ((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs() <= 0.25 + 1e-12));
    }

    #[test]
    fn free_case_hits_exactly() {
        let b = BlockStructure::new(vec![2]).unwrap();
        let v = PotentialModel::from_named_model("separable-cosine", &b, &ModelParams::new(0.5)).unwrap();
        let w = Frequency::new(vec![1.0, 0.618]).unwrap();
        let region = enumerate_region(&RegionDescriptor::cube(MultiIndex::zero(2), 2));
        let grid = sphere_box_grid(1.0, 1, 0.05, 0.5);
        let r = spectral_window_check(1.0, &region, &w, 0.0, &v, &grid, &Executor::Sequential).unwrap();
        assert!(r.min_dist < 1e-12 && r.pass);
        assert_eq!(r.truncation_term, 0.0);
        assert!(spectral_window_check(-1.0, &region, &w, 0.0, &v, &grid, &Executor::Sequential).is_err());
    }
}
