//! Independent reference computations: naive loops and elimination with no
//! shared code paths beyond the diagonal formula. Used by `selftest` and the
//! test suites to cross-check the optimized kernels.

use num_complex::Complex64;
use rand::Rng;

use crate::lattice::{cube_points, BlockStructure};
use crate::linalg::CMatrix;
use crate::rng::task_rng;

/// Gauss-Jordan inversion with full-row partial pivoting.
pub fn gauss_jordan_inverse(m: &CMatrix) -> Option<CMatrix> {
    let n = m.nrows();
    if n != m.ncols() {
        return None;
    }
    let mut a: Vec<Vec<Complex64>> = (0..n)
        .map(|r| {
            let mut row: Vec<Complex64> = (0..n).map(|c| m[(r, c)]).collect();
            row.extend((0..n).map(|c| if c == r { Complex64::new(1.0, 0.0) } else { Complex64::default() }));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm()))?;
        if a[pivot][col].norm() == 0.0 {
            return None;
        }
        a.swap(col, pivot);
        let inv = a[col][col].inv();
        for v in a[col].iter_mut() {
            *v *= inv;
        }
        let prow = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r == col {
                continue;
            }
            let f = row[col];
            if f == Complex64::default() {
                continue;
            }
            for (v, p) in row.iter_mut().zip(&prow) {
                *v -= f * p;
            }
        }
    }
    Some(CMatrix::from_fn(n, n, |r, c| a[r][n + c]))
}

fn naive_diagonal(bs: &BlockStructure, theta: &[f64], k: &[i64], omega: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut offset = 0;
    for (i, &len) in bs.blocks().iter().enumerate() {
        let mut u = theta[i];
        for c in offset..offset + len {
            u += k[c] as f64 * omega[c];
        }
        total += u * u;
        offset += len;
    }
    total
}

/// First `k` in the cube `[−N,N]^b` (lexicographic) with `|diag − E| < δ`.
pub fn brute_force_resonance(
    bs: &BlockStructure,
    theta: &[f64],
    omega: &[f64],
    energy: f64,
    delta: f64,
    n: usize,
) -> Option<Vec<i64>> {
    cube_points(bs.b(), n as i64)
        .into_iter()
        .find(|k| (naive_diagonal(bs, theta, k.entries(), omega) - energy).abs() < delta)
        .map(|k| k.entries().to_vec())
}

/// Monte-Carlo estimate of the measure of `{Θ_j ∈ [lo, hi] : Θ ∈ X_N}` with
/// its standard error.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_section_measure(
    bs: &BlockStructure,
    j: usize,
    theta: &[f64],
    omega: &[f64],
    energy: f64,
    delta: f64,
    n: usize,
    window: (f64, f64),
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = task_rng(seed, 0);
    let mut th = theta.to_vec();
    let pts = cube_points(bs.b(), n as i64);
    let (lo, hi) = window;
    let len = hi - lo;
    let mut hits = 0usize;
    for _ in 0..samples {
        th[j] = lo + len * rng.gen::<f64>();
        if pts
            .iter()
            .any(|k| (naive_diagonal(bs, &th, k.entries(), omega) - energy).abs() < delta)
        {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    (p * len, len * (p * (1.0 - p) / samples as f64).sqrt())
}

/// Annulus `[−M,M]^b ∖ [−r,r]^b` points whose shifted momentum `Θ + kω`
/// lies in `X_{N1}`.
#[allow(clippy::too_many_arguments)]
pub fn annulus_failures(
    bs: &BlockStructure,
    theta: &[f64],
    omega: &[f64],
    energy: f64,
    delta: f64,
    n1: usize,
    m: usize,
    inner: f64,
) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for k in cube_points(bs.b(), m as i64) {
        if k.sup_norm() as f64 <= inner {
            continue;
        }
        let shifted: Vec<f64> = (0..bs.d())
            .map(|i| theta[i] + bs.block_range(i).map(|c| k.entries()[c] as f64 * omega[c]).sum::<f64>())
            .collect();
        if brute_force_resonance(bs, &shifted, omega, energy, delta, n1).is_some() {
            out.push(k.entries().to_vec());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_jordan_inverts() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(0.0, 1.0), Complex64::new(2.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(3.0, 0.0)],
        );
        let inv = gauss_jordan_inverse(&m).unwrap();
        let id = &m * &inv;
        for r in 0..2 {
            for c in 0..2 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((id[(r, c)] - Complex64::new(expect, 0.0)).norm() < 1e-14);
            }
        }
        assert!(gauss_jordan_inverse(&CMatrix::zeros(3, 3)).is_none());
    }
}
