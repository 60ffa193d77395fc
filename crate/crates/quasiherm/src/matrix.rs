//! Dense complex matrices and kets, the carrier types for all operators.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use num_complex::Complex64;

pub type C64 = Complex64;

/// A ket: dense complex column vector.
pub type CVector = Array1<C64>;

/// Square dense complex matrix with finite entries.
///
/// Construction validates that the matrix is square with `dim >= 1` and that
/// no entry is NaN or infinite, so downstream code can rely on both.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    data: Array2<C64>,
}

impl ComplexMatrix {
    pub fn new(data: Array2<C64>) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows != cols {
            return Err(Error::DimensionMismatch(format!(
                "matrix must be square, got {rows}x{cols}"
            )));
        }
        if rows == 0 {
            return Err(Error::Domain("matrix dimension must be at least 1".into()));
        }
        for ((i, j), v) in data.indexed_iter() {
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::Domain(format!("non-finite entry {v} at ({i}, {j})")));
            }
        }
        Ok(Self { data })
    }

    /// Builds a `dim` x `dim` matrix from row-major entries.
    pub fn from_rows(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        let data = Array2::from_shape_vec((dim, dim), entries.to_vec())
            .expect("shape checked above");
        Self::new(data)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            data: Array2::eye(dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: Array2::zeros((dim, dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_array(&self) -> &Array2<C64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<C64> {
        self.data
    }

    /// Wraps an array that is already known to be square and finite.
    pub(crate) fn from_array_unchecked(data: Array2<C64>) -> Self {
        Self { data }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[(i, j)]
    }

    /// Hermitian conjugate (conjugate transpose).
    pub fn dagger(&self) -> Self {
        Self {
            data: self.data.t().mapv(|v| v.conj()),
        }
    }

    /// max |A - A†|, the Hermiticity deviation in the max-abs norm.
    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim();
        let mut dev = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let d = (self.data[(i, j)] - self.data[(j, i)].conj()).norm();
                dev = dev.max(d);
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.norm()))
    }

    /// max |A_ij - B_ij|; panics on dimension mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "max_abs_diff: dimension mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()))
    }

    pub fn trace(&self) -> C64 {
        self.data.diag().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Real Frobenius inner product `Re tr(A† B)`.
    pub fn frobenius_inner(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "frobenius_inner: dimension mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "matmul: dimension mismatch");
        Self {
            data: self.data.dot(&other.data),
        }
    }

    pub fn mul_vec(&self, v: &CVector) -> CVector {
        assert_eq!(self.dim(), v.len(), "mul_vec: dimension mismatch");
        self.data.dot(v)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "add: dimension mismatch");
        Self {
            data: &self.data + &other.data,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "sub: dimension mismatch");
        Self {
            data: &self.data - &other.data,
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            data: self.data.mapv(|v| v * c),
        }
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }
}

impl std::fmt::Display for ComplexMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = self.dim();
        for i in 0..n {
            let row: Vec<String> = (0..n)
                .map(|j| {
                    let v = self.data[(i, j)];
                    format!("{:+.9e}{:+.9e}i", v.re, v.im)
                })
                .collect();
            writeln!(f, "[ {} ]", row.join("  "))?;
        }
        Ok(())
    }
}

impl std::ops::Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl std::ops::Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::add(self, rhs)
    }
}

impl std::ops::Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::sub(self, rhs)
    }
}

/// max |v_i - w_i| over ket entries.
pub fn vec_max_abs_diff(a: &CVector, b: &CVector) -> f64 {
    assert_eq!(a.len(), b.len(), "vec_max_abs_diff: dimension mismatch");
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).norm()))
}

/// Dirac inner product `a† b`.
pub fn inner(a: &CVector, b: &CVector) -> C64 {
    assert_eq!(a.len(), b.len(), "inner: dimension mismatch");
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn rejects_non_square() {
        let data = Array2::<C64>::zeros((2, 3));
        assert!(matches!(
            ComplexMatrix::new(data),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn rejects_non_finite_entries() {
        let mut data = Array2::<C64>::zeros((2, 2));
        data[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(ComplexMatrix::new(data), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_empty() {
        let data = Array2::<C64>::zeros((0, 0));
        assert!(matches!(ComplexMatrix::new(data), Err(Error::Domain(_))));
    }

    #[test]
    fn hermiticity_deviation_is_zero_for_hermitian() {
        let m =
            ComplexMatrix::from_rows(2, &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)])
                .unwrap();
        assert_eq!(m.hermiticity_deviation(), 0.0);
        assert!(m.is_hermitian(1e-14));
    }

    #[test]
    fn hermiticity_deviation_detects_asymmetry() {
        let m =
            ComplexMatrix::from_rows(2, &[c(0.0, 0.0), c(2.0, 0.0), c(0.5, 0.0), c(0.0, 0.0)])
                .unwrap();
        assert!((m.hermiticity_deviation() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn dagger_and_products() {
        let m = ComplexMatrix::from_rows(2, &[c(0.0, 0.0), c(0.0, 2.0), c(0.0, -0.5), c(0.0, 0.0)])
            .unwrap();
        let md = m.dagger();
        assert_eq!(md.get(0, 1), c(0.0, 0.5));
        assert_eq!(md.get(1, 0), c(0.0, -2.0));
        let id = ComplexMatrix::identity(2);
        assert_eq!((&m * &id), m);
    }

    #[test]
    fn frobenius_inner_is_real_symmetric_on_hermitian_pairs() {
        let a =
            ComplexMatrix::from_rows(2, &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(3.0, 0.0)])
                .unwrap();
        let b =
            ComplexMatrix::from_rows(2, &[c(2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
                .unwrap();
        assert!((a.frobenius_inner(&b) - b.frobenius_inner(&a)).abs() < 1e-14);
    }
}
