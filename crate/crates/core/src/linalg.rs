//! Dense linear-algebra helpers not provided directly by nalgebra:
//! eigenvectors of real non-symmetric matrices with real spectra, null
//! spaces, and controllable-subspace bases.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("complex eigenvalue {re} ± {im}i")]
    ComplexEigenvalue { re: f64, im: f64 },
    #[error("matrix is defective near eigenvalue {0}")]
    Defective(f64),
    #[error("eigenvector basis is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error("singular matrix")]
    Singular,
    #[error("eigenvalue computation did not converge")]
    NoConvergence,
}

/// Tolerance on imaginary parts accepted as real.
pub const IMAG_TOL: f64 = 1e-9;
/// Eigenvalues closer than this are treated as one repeated eigenvalue.
pub const CLUSTER_TOL: f64 = 1e-6;

/// Eigenvalues of a square real matrix, sorted by real part then imaginary part.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<(f64, f64)>, LinalgError> {
    let schur = a.clone().try_schur(1e-15, 100_000).ok_or(LinalgError::NoConvergence)?;
    let mut ev: Vec<(f64, f64)> = schur.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect();
    ev.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    Ok(ev)
}

/// Real eigenvalues, erroring on any imaginary part above [`IMAG_TOL`].
pub fn real_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>, LinalgError> {
    let ev = eigenvalues(a)?;
    if let Some(&(re, im)) = ev.iter().find(|e| e.1.abs() > IMAG_TOL) {
        return Err(LinalgError::ComplexEigenvalue { re, im });
    }
    Ok(ev.into_iter().map(|e| e.0).collect())
}

/// Full SVD with singular values in decreasing order.
/// Returns `(U, σ, V)` with `A = U·diag(σ)·Vᵀ`; for non-square input the
/// matrix is zero-padded to square first so that `V` is complete.
pub fn full_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (r, c) = a.shape();
    // Wide matrices are padded with zero rows so that V is complete; for
    // tall ones U is returned thin (r × c).
    let rows = r.max(c);
    let mut sq = DMatrix::zeros(rows, c);
    sq.view_mut((0, 0), (r, c)).copy_from(a);
    let svd = sq.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
    let sigma = DVector::from_fn(k, |i, _| svd.singular_values[order[i]]);
    let u_sorted = DMatrix::from_fn(r, k, |i, j| u[(i, order[j])]);
    let v_sorted = DMatrix::from_fn(c, k, |i, j| vt[(order[j], i)]);
    (u_sorted, sigma, v_sorted)
}

/// Orthonormal basis (columns) for the `dim` right singular vectors with
/// smallest singular values, plus the largest singular value among them.
pub fn smallest_right_vectors(a: &DMatrix<f64>, dim: usize) -> (DMatrix<f64>, f64) {
    let c = a.ncols();
    let (_, sigma, v) = full_svd(a);
    let start = c - dim;
    let worst = if dim == 0 { 0.0 } else { sigma[start] };
    (v.columns(start, dim).into_owned(), worst)
}

/// Numerical rank with relative tolerance.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let (_, sigma, _) = full_svd(a);
    let top = sigma.iter().copied().fold(0.0, f64::max);
    sigma.iter().filter(|&&s| s > rel_tol * top.max(f64::MIN_POSITIVE)).count()
}

/// 2-norm condition number via SVD.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let (_, sigma, _) = full_svd(a);
    let lo = sigma[sigma.len() - 1];
    if lo == 0.0 {
        f64::INFINITY
    } else {
        sigma[0] / lo
    }
}

/// Right eigenvectors of a diagonalizable matrix with real spectrum.
///
/// Eigenvalues within [`CLUSTER_TOL`] are grouped; each group's eigenspace
/// is the null space of `A − λ̄I`, so repeated semisimple eigenvalues get a
/// full basis. Returns eigenvalues (sorted ascending) and `V` with the
/// matching eigenvectors as columns.
pub fn real_eigen_decomposition(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), LinalgError> {
    let n = a.nrows();
    let ev = real_eigenvalues(a)?;
    let scale = a.amax().max(1.0);
    let mut values = Vec::with_capacity(n);
    let mut v = DMatrix::zeros(n, n);
    let mut col = 0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && (ev[j] - ev[j - 1]).abs() <= CLUSTER_TOL * ev[j].abs().max(1.0) {
            j += 1;
        }
        let k = j - i;
        let lam = ev[i..j].iter().sum::<f64>() / k as f64;
        let shifted = a - DMatrix::identity(n, n) * lam;
        let (basis, worst) = smallest_right_vectors(&shifted, k);
        if worst > 1e-6 * scale {
            return Err(LinalgError::Defective(lam));
        }
        for c in 0..k {
            let mut vec = basis.column(c).into_owned();
            canonical_sign(&mut vec);
            v.set_column(col, &vec);
            values.push(lam);
            col += 1;
        }
        i = j;
    }
    Ok((values, v))
}

/// Flip a vector so that its largest-magnitude entry is positive.
fn canonical_sign(v: &mut DVector<f64>) {
    let idx = v.iamax();
    if v[idx] < 0.0 {
        v.neg_mut();
    }
}

/// Orthonormal bases `(U₁, U₂)` of the controllable subspace of `(A, B)`
/// and its orthogonal complement.
pub fn controllable_subspace(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut blk = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&blk);
        blk = a * blk;
    }
    // Thin SVD of the wide controllability matrix keeps U square (n × n).
    let svd = ctrb.svd(true, false);
    let u_raw = svd.u.expect("u requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
    let sigma = DVector::from_fn(n, |i, _| svd.singular_values[order[i]]);
    let u = DMatrix::from_fn(n, n, |i, j| u_raw[(i, order[j])]);
    let top = sigma[0];
    let r = if top == 0.0 { 0 } else { sigma.iter().take(n).filter(|&&s| s > rel_tol * top).count() };
    (u.columns(0, r).into_owned(), u.columns(r, n - r).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_semisimple_eigenvalue() {
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.0, 0.0, 0.0, 0.5, 0.0, 1.0, 0.0, 0.2]);
        let (vals, v) = real_eigen_decomposition(&a).unwrap();
        for (k, &l) in vals.iter().enumerate() {
            let col = v.column(k).into_owned();
            assert!((&a * &col - col * l).amax() < 1e-12);
        }
        assert!(condition_number(&v) < 1e3);
    }

    #[test]
    fn jordan_block_is_defective() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]);
        assert!(real_eigen_decomposition(&a).is_err());
    }

    #[test]
    fn rotation_is_complex() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(matches!(real_eigenvalues(&a), Err(LinalgError::ComplexEigenvalue { .. })));
    }

    #[test]
    fn controllable_subspace_of_decoupled_pair() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let (u1, u2) = controllable_subspace(&a, &b, 1e-9);
        assert_eq!((u1.ncols(), u2.ncols()), (1, 1));
        assert!((u1[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn svd_of_wide_matrix_gives_null_space() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let (ns, worst) = smallest_right_vectors(&a, 2);
        assert!(worst < 1e-12);
        assert!((&a * ns).amax() < 1e-12);
    }
}
