//! Thin wrappers around the LAPACK-backed dense routines used by the solvers.

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64};
use ndarray::{Array1, Array2};
use ndarray_linalg::{Cholesky, Eig, Eigh, Inverse, SVD, UPLO};

/// General complex eigendecomposition: eigenvalues and right eigenvectors
/// (columns), unsorted and unnormalized beyond LAPACK's convention.
pub(crate) fn eig(m: &ComplexMatrix) -> Result<(Array1<C64>, Array2<C64>)> {
    m.as_array()
        .eig()
        .map_err(|e| Error::Backend(format!("eig: {e}")))
}

/// Hermitian eigendecomposition, eigenvalues ascending, eigenvectors as
/// columns. The caller is responsible for Hermiticity of the input.
///
/// The backend solves the row-major (transposed) problem, so its vectors come
/// back conjugated; undo that here so `m v_k = lambda_k v_k` holds.
pub(crate) fn eigh(m: &ComplexMatrix) -> Result<(Vec<f64>, Array2<C64>)> {
    let (vals, vecs) = m
        .as_array()
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Backend(format!("eigh: {e}")))?;
    Ok((vals.to_vec(), vecs.mapv(|v| v.conj())))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub(crate) fn eigh_values(m: &ComplexMatrix) -> Result<Vec<f64>> {
    Ok(eigh(m)?.0)
}

pub(crate) fn inverse(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let inv = m
        .as_array()
        .inv()
        .map_err(|e| Error::Backend(format!("inverse: {e}")))?;
    ComplexMatrix::new(inv)
}

/// Upper-triangular factor `U` with positive real diagonal and `A = U† U`.
pub(crate) fn cholesky_upper(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let u = m.as_array().cholesky(UPLO::Upper).map_err(|_| {
        // zpotrf fails precisely when a leading minor is not positive.
        Error::NotPositiveDefinite {
            min_eigenvalue: f64::NAN,
        }
    })?;
    ComplexMatrix::new(u)
}

/// Orthonormal basis of the numerical nullspace of a real matrix.
///
/// Right singular vectors whose singular value is at most `tol` times the
/// largest one count as nullspace directions. A zero matrix yields the full
/// space. Each returned vector has its largest-magnitude component positive
/// so the basis is reproducible.
pub(crate) fn real_nullspace(m: &Array2<f64>, tol: f64) -> Result<Vec<Array1<f64>>> {
    let ncols = m.ncols();
    let (_, s, vt) = m
        .svd(false, true)
        .map_err(|e| Error::Backend(format!("svd: {e}")))?;
    let vt = vt.expect("requested V^T");
    let smax = s.iter().cloned().fold(0.0_f64, f64::max);
    let mut basis = Vec::new();
    for k in 0..ncols {
        let sk = if k < s.len() { s[k] } else { 0.0 };
        if smax == 0.0 || sk <= tol * smax {
            let mut v = vt.row(k).to_owned();
            let lead = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                .map(|(i, _)| i)
                .unwrap_or(0);
            if v[lead] < 0.0 {
                v.mapv_inplace(|x| -x);
            }
            basis.push(v);
        }
    }
    Ok(basis)
}
