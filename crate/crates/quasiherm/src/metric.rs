//! Metric operators: solving the intertwining relation `H† Theta = Theta H`
//! over Hermitian matrices and certifying positivity.

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::{ComplexMatrix, C64};
use ndarray::Array2;

/// How a metric candidate was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// Closed-form family of the two-level model.
    ClosedForm,
    /// Linear combination drawn from a solver nullspace.
    Nullspace,
    /// Assembled from biorthogonal ketkets and `mu` weights.
    MuSeries,
    /// Supplied directly by the caller and certified as-is.
    Direct,
}

/// A Hermitian matrix together with its full spectrum, so positivity and
/// conditioning are known to every consumer.
#[derive(Clone, Debug)]
pub struct MetricCandidate {
    theta: ComplexMatrix,
    eigenvalues: Vec<f64>,
    provenance: Provenance,
}

impl MetricCandidate {
    /// Certifies a Hermitian matrix: checks the Hermiticity deviation against
    /// `herm_tol` and computes the eigenvalue set.
    pub(crate) fn certify(
        theta: ComplexMatrix,
        provenance: Provenance,
        herm_tol: f64,
    ) -> Result<Self> {
        let deviation = theta.hermiticity_deviation();
        if deviation > herm_tol {
            return Err(Error::NotHermitian {
                deviation,
                tol: herm_tol,
            });
        }
        let eigenvalues = linalg::eigh_values(&theta)?;
        Ok(Self {
            theta,
            eigenvalues,
            provenance,
        })
    }

    pub fn theta(&self) -> &ComplexMatrix {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Positive definite up to a relative floor of `1e-12` times the spectral
    /// radius, so exactly singular closed forms are rejected.
    pub fn is_positive_definite(&self) -> bool {
        let scale = self
            .eigenvalues
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        self.min_eigenvalue() > 1e-12 * scale && self.min_eigenvalue() > 0.0
    }

    /// Spectral condition number; infinite when the smallest eigenvalue
    /// magnitude vanishes.
    pub fn condition_number(&self) -> f64 {
        let max = self
            .eigenvalues
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let min = self
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

/// Certifies a caller-supplied Hermitian matrix (tolerance `1e-10`).
pub fn positivity_certificate(theta: &ComplexMatrix) -> Result<MetricCandidate> {
    MetricCandidate::certify(theta.clone(), Provenance::Direct, 1e-10)
}

/// Orthonormal basis of the real solution space of the intertwining relation.
#[derive(Clone, Debug)]
pub struct MetricFamily {
    dim: usize,
    basis: Vec<ComplexMatrix>,
}

impl MetricFamily {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of independent Hermitian solutions.
    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[ComplexMatrix] {
        &self.basis
    }

    /// Coefficients of the Frobenius-orthogonal projection of `m` onto the
    /// family span, and the Frobenius norm of what is left over.
    pub fn project(&self, m: &ComplexMatrix) -> (Vec<f64>, f64) {
        let coeffs: Vec<f64> = self.basis.iter().map(|b| b.frobenius_inner(m)).collect();
        let mut residual = m.clone();
        for (c, b) in coeffs.iter().zip(&self.basis) {
            residual = residual.sub(&b.scale_re(*c));
        }
        (coeffs, residual.frobenius_norm())
    }

    pub fn projection_residual(&self, m: &ComplexMatrix) -> f64 {
        self.project(m).1
    }

    /// Forms the linear combination `sum_k coeffs[k] basis[k]`.
    pub fn combination(&self, coeffs: &[f64]) -> Result<ComplexMatrix> {
        if coeffs.len() != self.basis.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coefficients, got {}",
                self.basis.len(),
                coeffs.len()
            )));
        }
        let mut acc = ComplexMatrix::zeros(self.dim);
        for (c, b) in coeffs.iter().zip(&self.basis) {
            acc = acc.add(&b.scale_re(*c));
        }
        Ok(acc)
    }
}

/// Orthonormal (real Frobenius) basis of Hermitian matrices in a fixed order:
/// the `n` diagonal units, then for each upper-triangle position (row-major)
/// the symmetric and the imaginary antisymmetric unit.
pub(crate) fn hermitian_basis(dim: usize) -> Vec<ComplexMatrix> {
    let mut basis = Vec::with_capacity(dim * dim);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for k in 0..dim {
        let mut m = Array2::<C64>::zeros((dim, dim));
        m[(k, k)] = C64::new(1.0, 0.0);
        basis.push(ComplexMatrix::from_array_unchecked(m));
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            let mut re = Array2::<C64>::zeros((dim, dim));
            re[(i, j)] = C64::new(inv_sqrt2, 0.0);
            re[(j, i)] = C64::new(inv_sqrt2, 0.0);
            basis.push(ComplexMatrix::from_array_unchecked(re));
            let mut im = Array2::<C64>::zeros((dim, dim));
            im[(i, j)] = C64::new(0.0, inv_sqrt2);
            im[(j, i)] = C64::new(0.0, -inv_sqrt2);
            basis.push(ComplexMatrix::from_array_unchecked(im));
        }
    }
    basis
}

/// Real-linear rows of the vectorized relation `H† B - B H = 0` applied to the
/// Hermitian basis: a `2 dim^2 x dim^2` matrix whose nullspace coordinates are
/// Hermitian solutions.
pub(crate) fn intertwining_system(h: &ComplexMatrix) -> Array2<f64> {
    let dim = h.dim();
    let basis = hermitian_basis(dim);
    let n2 = dim * dim;
    let mut system = Array2::<f64>::zeros((2 * n2, n2));
    let hd = h.dagger();
    for (k, b) in basis.iter().enumerate() {
        let residual = (&hd * b).sub(&(b * h));
        for i in 0..dim {
            for j in 0..dim {
                let v = residual.get(i, j);
                system[(i * dim + j, k)] = v.re;
                system[(n2 + i * dim + j, k)] = v.im;
            }
        }
    }
    system
}

/// Solves `H† Theta = Theta H` over Hermitian `Theta`, returning an
/// orthonormal basis of the real solution space. Singular values below
/// `tol` times the largest one count as zero.
pub fn solve_intertwining(h: &ComplexMatrix, tol: f64) -> Result<MetricFamily> {
    if tol <= 0.0 {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let dim = h.dim();
    let system = intertwining_system(h);
    let null = linalg::real_nullspace(&system, tol)?;
    let basis_mats = hermitian_basis(dim);
    let basis = null
        .iter()
        .map(|x| {
            let mut acc = ComplexMatrix::zeros(dim);
            for (c, b) in x.iter().zip(&basis_mats) {
                acc = acc.add(&b.scale_re(*c));
            }
            acc
        })
        .collect();
    Ok(MetricFamily { dim, basis })
}

/// Forms the combination, certifies it, and rejects anything on or outside
/// the boundary of the positive cone.
pub fn select_positive(family: &MetricFamily, coeffs: &[f64]) -> Result<MetricCandidate> {
    let theta = family.combination(coeffs)?;
    let candidate = MetricCandidate::certify(theta, Provenance::Nullspace, 1e-10)?;
    if !candidate.is_positive_definite() {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: candidate.min_eigenvalue(),
        });
    }
    Ok(candidate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{am_hamiltonian, am_metric, AMModelParams};
    use std::f64::consts::{FRAC_PI_3, PI};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn hermitian_basis_is_orthonormal() {
        for dim in [1, 2, 3] {
            let basis = hermitian_basis(dim);
            assert_eq!(basis.len(), dim * dim);
            for (i, a) in basis.iter().enumerate() {
                assert!(a.hermiticity_deviation() < 1e-15);
                for (j, b) in basis.iter().enumerate() {
                    let inner = a.frobenius_inner(b);
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((inner - expected).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn diagonal_hermitian_h_yields_diagonal_family() {
        // Frozen oracle: for diag(1, 2) the 8x8 real system has the
        // two-dimensional diagonal solution family.
        let h = ComplexMatrix::from_rows(
            2,
            &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)],
        )
        .unwrap();
        let family = solve_intertwining(&h, 1e-10).unwrap();
        assert_eq!(family.dimension(), 2);
        for b in family.basis() {
            assert!(b.get(0, 1).norm() < 1e-12);
            assert!(b.get(1, 0).norm() < 1e-12);
            assert!(b.get(0, 0).im.abs() < 1e-12);
            assert!(b.get(1, 1).im.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_hamiltonian_gives_full_hermitian_space() {
        let h = ComplexMatrix::zeros(2);
        let family = solve_intertwining(&h, 1e-10).unwrap();
        assert_eq!(family.dimension(), 4);
    }

    #[test]
    fn model_family_dimension_and_least_squares_fit() {
        for r in [0.5, 1.0, 2.0] {
            for beta in [0.0, 0.7, PI] {
                let p = AMModelParams::new(r, beta, 1.0, 1.0).unwrap();
                let h = am_hamiltonian(&p);
                let family = solve_intertwining(&h, 1e-10).unwrap();
                assert_eq!(family.dimension(), 2, "r={r} beta={beta}");
                // Each basis element must be f * Theta_Z for some (f, g):
                // entries [[f, g e^{ib}], [g e^{-ib}, f r^2]]. Solve the
                // two-parameter least squares fit explicitly and check the
                // residual.
                let e = c(0.0, beta).exp();
                for b in family.basis() {
                    let b00 = b.get(0, 0);
                    let b11 = b.get(1, 1);
                    let b01 = b.get(0, 1) * e.conj();
                    // fit f from the diagonal, g from the off-diagonal
                    let f = (b00.re + r * r * b11.re) / (1.0 + r.powi(4));
                    let g = b01.re;
                    let fit = ComplexMatrix::from_rows(
                        2,
                        &[
                            c(f, 0.0),
                            e * g,
                            e.conj() * g,
                            c(f * r * r, 0.0),
                        ],
                    )
                    .unwrap();
                    assert!(
                        b.max_abs_diff(&fit) < 1e-10,
                        "family element escapes the closed-form family"
                    );
                }
            }
        }
    }

    #[test]
    fn family_elements_satisfy_relation_and_are_orthonormal() {
        let p = AMModelParams::new(2.0, 0.7, 1.0, 1.0).unwrap();
        let h = am_hamiltonian(&p);
        let tol = 1e-10;
        let family = solve_intertwining(&h, tol).unwrap();
        let hd = h.dagger();
        for (i, a) in family.basis().iter().enumerate() {
            let res = (&hd * a).sub(&(a * &h));
            assert!(res.max_abs() < 10.0 * tol);
            assert!(a.hermiticity_deviation() < 1e-12);
            for (j, b) in family.basis().iter().enumerate() {
                let inner = a.frobenius_inner(b);
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((inner - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn closed_form_metric_lies_in_solver_span() {
        for r in [0.5, 1.0, 2.0] {
            for beta in [0.0, 0.7, PI] {
                for z in [0.4, FRAC_PI_3, 2.2] {
                    let p = AMModelParams::new(r, beta, z, 1.3).unwrap();
                    let h = am_hamiltonian(&p);
                    let family = solve_intertwining(&h, 1e-10).unwrap();
                    let theta = am_metric(&p).unwrap();
                    let rel = family.projection_residual(theta.theta())
                        / theta.theta().frobenius_norm();
                    assert!(rel < 1e-10, "residual {rel} at r={r} beta={beta} z={z}");
                }
            }
        }
    }

    #[test]
    fn certificate_of_identity() {
        let cand = positivity_certificate(&ComplexMatrix::identity(3)).unwrap();
        assert!((cand.min_eigenvalue() - 1.0).abs() < 1e-12);
        assert!(cand.is_positive_definite());
        assert_eq!(cand.provenance(), Provenance::Direct);
        assert!((cand.condition_number() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn certificate_of_closed_form_metric() {
        let p = AMModelParams::new(1.0, 0.0, FRAC_PI_3, 1.0).unwrap();
        let cand = am_metric(&p).unwrap();
        // eigenvalues 1 +- cos Z for r = 1
        assert!((cand.min_eigenvalue() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn certificate_flags_indefinite_matrix() {
        let m = ComplexMatrix::from_rows(
            2,
            &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)],
        )
        .unwrap();
        let cand = positivity_certificate(&m).unwrap();
        assert!((cand.min_eigenvalue() + 1.0).abs() < 1e-12);
        assert!(!cand.is_positive_definite());
    }

    #[test]
    fn certificate_rejects_non_hermitian() {
        let m = ComplexMatrix::from_rows(
            2,
            &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        assert!(matches!(
            positivity_certificate(&m),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn select_positive_rejects_zero_and_negated() {
        let p = AMModelParams::new(1.0, 0.3, 1.0, 1.0).unwrap();
        let h = am_hamiltonian(&p);
        let family = solve_intertwining(&h, 1e-10).unwrap();
        assert!(matches!(
            select_positive(&family, &[0.0, 0.0]),
            Err(Error::NotPositiveDefinite { .. })
        ));
        // project the closed-form metric to get valid coefficients
        let theta = am_metric(&p).unwrap();
        let (coeffs, _) = family.project(theta.theta());
        let cand = select_positive(&family, &coeffs).unwrap();
        assert!(cand.is_positive_definite());
        assert_eq!(cand.provenance(), Provenance::Nullspace);
        let negated: Vec<f64> = coeffs.iter().map(|x| -x).collect();
        assert!(matches!(
            select_positive(&family, &negated),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn positivity_is_cone_invariant() {
        let p = AMModelParams::new(2.0, 0.5, 0.9, 1.0).unwrap();
        let theta = am_metric(&p).unwrap();
        for c_scale in [0.5, 1.0, 7.0] {
            let scaled = positivity_certificate(&theta.theta().scale_re(c_scale)).unwrap();
            assert_eq!(
                scaled.is_positive_definite(),
                theta.is_positive_definite()
            );
        }
    }

    #[test]
    fn combination_length_mismatch_is_an_error() {
        let h = ComplexMatrix::zeros(2);
        let family = solve_intertwining(&h, 1e-10).unwrap();
        assert!(matches!(
            select_positive(&family, &[1.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
