//! Dense kernels over `nalgebra`, with a real fast path when a Hermitian
//! matrix happens to be real symmetric.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub fn is_real(m: &CMatrix) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

fn real_part(m: &CMatrix) -> DMatrix<f64> {
    m.map(|z| z.re)
}

fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut vals: Vec<f64> = if is_real(m) {
        real_part(m).symmetric_eigenvalues().iter().copied().collect()
    } else {
        m.symmetric_eigenvalues().iter().copied().collect()
    };
    vals.sort_by(f64::total_cmp);
    vals
}

/// Eigenpairs of a Hermitian matrix, ascending; eigenvectors are the columns.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let (vals, vecs): (Vec<f64>, CMatrix) = if is_real(m) {
        let e = real_part(m).symmetric_eigen();
        (e.eigenvalues.iter().copied().collect(), complexify(&e.eigenvectors))
    } else {
        let e = m.clone().symmetric_eigen();
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
    };
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let sorted_vals = order.iter().map(|&i| vals[i]).collect();
    let sorted_vecs = CMatrix::from_fn(vecs.nrows(), vecs.ncols(), |r, c| vecs[(r, order[c])]);
    (sorted_vals, sorted_vecs)
}

/// LU inverse with partial pivoting; `None` when a pivot vanishes.
pub fn invert(m: &CMatrix) -> Option<CMatrix> {
    if is_real(m) {
        real_part(m).lu().try_inverse().map(|inv| complexify(&inv))
    } else {
        m.clone().lu().try_inverse()
    }
}

/// Largest singular value of an arbitrary square matrix.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if is_real(m) {
        real_part(m).singular_values().max()
    } else {
        m.singular_values().max()
    }
}

/// `max_{ij} |m_ij|`.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_hermitian_paths_agree_with_real() {
        let real = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let c = complexify(&real);
        let vals = hermitian_eigenvalues(&c);
        // Force the complex route with a zero-imaginary perturbation pattern.
        let mut forced = c.clone();
        forced[(0, 1)] = Complex64::new(1.0, 1e-300);
        forced[(1, 0)] = Complex64::new(1.0, -1e-300);
        let vals_c = hermitian_eigenvalues(&forced);
        for (a, b) in vals.iter().zip(&vals_c) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((vals.iter().sum::<f64>() - 9.0).abs() < 1e-12);

        let (ev, vecs) = hermitian_eigen(&forced);
        for (j, lam) in ev.iter().enumerate() {
            let v = vecs.column(j);
            let r = &forced * v - v * Complex64::new(*lam, 0.0);
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn inverse_and_norm() {
        let m = complexify(&DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, -0.5]));
        let inv = invert(&m).unwrap();
        assert!((inv[(1, 1)].re + 2.0).abs() < 1e-15);
        assert!((spectral_norm(&inv) - 2.0).abs() < 1e-12);
        assert!(invert(&CMatrix::zeros(2, 2)).is_none());
    }
}
