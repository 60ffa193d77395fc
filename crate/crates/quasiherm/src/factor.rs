//! Factorizations `Theta = Omega† Omega` and the maps they induce between
//! the representation spaces.

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::{ComplexMatrix, CVector, C64};
use crate::metric::MetricCandidate;
use ndarray::Array2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    /// Upper triangular with positive real diagonal (Cholesky gauge).
    Triangular,
    /// Hermitian positive square root `Theta^{1/2}`.
    HermitianRoot,
    /// Assembled from a biorthogonal system and `mu` weights.
    MuSeries,
}

/// An invertible map with its precomputed inverse. The inverse is stored so
/// evolution hot loops never re-invert.
#[derive(Clone, Debug)]
pub struct MappingFactorization {
    omega: ComplexMatrix,
    omega_inverse: ComplexMatrix,
    kind: FactorKind,
}

impl MappingFactorization {
    pub(crate) fn from_parts(
        omega: ComplexMatrix,
        omega_inverse: ComplexMatrix,
        kind: FactorKind,
    ) -> Self {
        Self {
            omega,
            omega_inverse,
            kind,
        }
    }

    pub fn omega(&self) -> &ComplexMatrix {
        &self.omega
    }

    pub fn omega_inverse(&self) -> &ComplexMatrix {
        &self.omega_inverse
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.omega.dim()
    }

    /// `Omega |psi>`: the representative of the state in the textbook space.
    pub fn map_ket(&self, psi: &CVector) -> Result<CVector> {
        if psi.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "ket has length {}, map has dimension {}",
                psi.len(),
                self.dim()
            )));
        }
        Ok(self.omega.mul_vec(psi))
    }
}

fn require_positive(theta: &MetricCandidate) -> Result<()> {
    if !theta.is_positive_definite() {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: theta.min_eigenvalue(),
        });
    }
    Ok(())
}

/// Upper-triangular `Omega` with positive real diagonal and `Omega† Omega = Theta`.
pub fn cholesky_factor(theta: &MetricCandidate) -> Result<MappingFactorization> {
    require_positive(theta)?;
    let omega = linalg::cholesky_upper(theta.theta()).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::NotPositiveDefinite {
            min_eigenvalue: theta.min_eigenvalue(),
        },
        other => other,
    })?;
    let omega_inverse = linalg::inverse(&omega)?;
    Ok(MappingFactorization::from_parts(
        omega,
        omega_inverse,
        FactorKind::Triangular,
    ))
}

/// Hermitian positive `Omega = Theta^{1/2}` via eigendecomposition
/// (ascending eigenvalue order).
pub fn hermitian_root_factor(theta: &MetricCandidate) -> Result<MappingFactorization> {
    require_positive(theta)?;
    let (vals, vecs) = linalg::eigh(theta.theta())?;
    let dim = theta.dim();
    let mut root = Array2::<C64>::zeros((dim, dim));
    let mut root_inv = Array2::<C64>::zeros((dim, dim));
    for (k, lambda) in vals.iter().enumerate() {
        if *lambda <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: theta.min_eigenvalue(),
            });
        }
        let s = lambda.sqrt();
        let col = vecs.column(k);
        for i in 0..dim {
            for j in 0..dim {
                let proj = col[i] * col[j].conj();
                root[(i, j)] += proj * s;
                root_inv[(i, j)] += proj / s;
            }
        }
    }
    Ok(MappingFactorization::from_parts(
        ComplexMatrix::new(root)?,
        ComplexMatrix::new(root_inv)?,
        FactorKind::HermitianRoot,
    ))
}

fn require_same_dim(m: &ComplexMatrix, fac: &MappingFactorization) -> Result<()> {
    if m.dim() != fac.dim() {
        return Err(Error::DimensionMismatch(format!(
            "operator dimension {} does not match map dimension {}",
            m.dim(),
            fac.dim()
        )));
    }
    Ok(())
}

/// `Omega^{-1} h Omega`: carries a textbook-space operator back to the
/// friendly space.
pub fn pullback_hamiltonian(
    h_physical: &ComplexMatrix,
    fac: &MappingFactorization,
) -> Result<ComplexMatrix> {
    require_same_dim(h_physical, fac)?;
    Ok(fac.omega_inverse().matmul(&h_physical.matmul(fac.omega())))
}

/// `Omega H Omega^{-1}`: Hermitian whenever `H` is quasi-Hermitian with
/// respect to `Omega† Omega`.
pub fn pushforward_hamiltonian(
    h: &ComplexMatrix,
    fac: &MappingFactorization,
) -> Result<ComplexMatrix> {
    require_same_dim(h, fac)?;
    Ok(fac.omega().matmul(&h.matmul(fac.omega_inverse())))
}

/// Free-function form of [`MappingFactorization::map_ket`].
pub fn map_ket(psi: &CVector, fac: &MappingFactorization) -> Result<CVector> {
    fac.map_ket(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::inner;
    use crate::metric::positivity_certificate;
    use crate::model::{
        am_dyson_map, am_hamiltonian, am_metric, am_physical_hamiltonian, AMModelParams,
    };
    use ndarray::array;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn am(r: f64, beta: f64, z: f64, f: f64) -> AMModelParams {
        AMModelParams::new(r, beta, z, f).unwrap()
    }

    #[test]
    fn cholesky_of_identity_is_identity() {
        let theta = positivity_certificate(&ComplexMatrix::identity(3)).unwrap();
        let fac = cholesky_factor(&theta).unwrap();
        assert!(fac.omega().max_abs_diff(&ComplexMatrix::identity(3)) < 1e-14);
        assert_eq!(fac.kind(), FactorKind::Triangular);
    }

    #[test]
    fn cholesky_matches_published_triangular_map() {
        // For r sin Z > 0 the published triangular factor already has a
        // positive diagonal, so the Cholesky factor reproduces it exactly.
        for r in [0.5, 1.0, 2.0] {
            for beta in [0.0, 0.7, PI] {
                for z in [FRAC_PI_4, 1.2, 2.0] {
                    let p = am(r, beta, z, 1.0);
                    let theta = am_metric(&p).unwrap();
                    let fac = cholesky_factor(&theta).unwrap();
                    let published = am_dyson_map(&p).unwrap();
                    assert!(
                        fac.omega().max_abs_diff(published.omega()) < 1e-12,
                        "r={r} beta={beta} z={z}"
                    );
                    assert!(
                        fac.omega_inverse().max_abs_diff(published.omega_inverse()) < 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn cholesky_flipped_diagonal_is_left_unitary_gauge() {
        // r sin Z < 0 flips the published diagonal sign; the two factors then
        // differ by a unitary on the left.
        let p = am(1.5, 0.4, -0.9, 1.0);
        let theta = am_metric(&p).unwrap();
        let fac = cholesky_factor(&theta).unwrap();
        let published = am_dyson_map(&p).unwrap();
        let gauge = published.omega().matmul(fac.omega_inverse());
        let should_be_id = gauge.dagger().matmul(&gauge);
        assert!(should_be_id.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-11);
        // positive diagonal convention
        assert!(fac.omega().get(1, 1).re > 0.0);
        assert!(fac.omega().get(1, 1).im.abs() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite_candidate() {
        let m = ComplexMatrix::from_rows(
            2,
            &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)],
        )
        .unwrap();
        let cand = positivity_certificate(&m).unwrap();
        assert!(matches!(
            cholesky_factor(&cand),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn hermitian_root_of_diagonal() {
        let m = ComplexMatrix::from_rows(
            2,
            &[c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(9.0, 0.0)],
        )
        .unwrap();
        let cand = positivity_certificate(&m).unwrap();
        let fac = hermitian_root_factor(&cand).unwrap();
        let expected = ComplexMatrix::from_rows(
            2,
            &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(3.0, 0.0)],
        )
        .unwrap();
        assert!(fac.omega().max_abs_diff(&expected) < 1e-12);
        assert_eq!(fac.kind(), FactorKind::HermitianRoot);
    }

    #[test]
    fn hermitian_root_reconstructs_metric() {
        let p = am(2.0, 0.3, FRAC_PI_4, 1.0);
        let theta = am_metric(&p).unwrap();
        let fac = hermitian_root_factor(&theta).unwrap();
        let rebuilt = fac.omega().dagger().matmul(fac.omega());
        assert!(rebuilt.max_abs_diff(theta.theta()) < 1e-11);
        assert!(fac.omega().hermiticity_deviation() < 1e-11);
        let prod = fac.omega().matmul(fac.omega_inverse());
        assert!(prod.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-11);
    }

    #[test]
    fn pullback_recovers_model_hamiltonian() {
        let p = am(2.0, 0.7, 1.1, 1.0);
        let theta = am_metric(&p).unwrap();
        let fac = cholesky_factor(&theta).unwrap();
        let hz = am_physical_hamiltonian(&p).unwrap();
        let pulled = pullback_hamiltonian(&hz, &fac).unwrap();
        assert!(pulled.max_abs_diff(&am_hamiltonian(&p)) < 1e-11);
    }

    #[test]
    fn pullback_with_identity_map_is_identity() {
        let theta = positivity_certificate(&ComplexMatrix::identity(2)).unwrap();
        let fac = cholesky_factor(&theta).unwrap();
        let h = am_hamiltonian(&am(1.3, 0.2, 1.0, 1.0));
        assert!(pullback_hamiltonian(&h, &fac).unwrap().max_abs_diff(&h) < 1e-14);
    }

    #[test]
    fn pullback_then_pushforward_round_trips() {
        let p = am(0.7, 1.9, 0.5, 1.0);
        let theta = am_metric(&p).unwrap();
        let fac = hermitian_root_factor(&theta).unwrap();
        let h = am_physical_hamiltonian(&p).unwrap();
        let round = pushforward_hamiltonian(&pullback_hamiltonian(&h, &fac).unwrap(), &fac)
            .unwrap();
        assert!(round.max_abs_diff(&h) < 1e-11);
    }

    #[test]
    fn pushforward_produces_physical_hamiltonian() {
        let p = am(2.0, 0.7, 1.1, 1.0);
        let theta = am_metric(&p).unwrap();
        let fac = cholesky_factor(&theta).unwrap();
        let pushed = pushforward_hamiltonian(&am_hamiltonian(&p), &fac).unwrap();
        assert!(pushed.max_abs_diff(&am_physical_hamiltonian(&p).unwrap()) < 1e-11);
        assert!(pushed.hermiticity_deviation() < 1e-10);
    }

    #[test]
    fn pushforward_of_identity_is_identity() {
        let p = am(2.0, 0.7, 1.1, 1.0);
        let fac = cholesky_factor(&am_metric(&p).unwrap()).unwrap();
        let id = ComplexMatrix::identity(2);
        assert!(pushforward_hamiltonian(&id, &fac).unwrap().max_abs_diff(&id) < 1e-12);
    }

    #[test]
    fn factorization_kinds_give_isospectral_pushforwards() {
        let p = am(2.0, 0.4, 0.9, 1.0);
        let h = am_hamiltonian(&p);
        let theta = am_metric(&p).unwrap();
        let tri = cholesky_factor(&theta).unwrap();
        let herm = hermitian_root_factor(&theta).unwrap();
        let a = pushforward_hamiltonian(&h, &tri).unwrap();
        let b = pushforward_hamiltonian(&h, &herm).unwrap();
        // both are Hermitian; compare sorted spectra via the eigensolver
        let ea = crate::linalg::eigh_values(&a).unwrap();
        let eb = crate::linalg::eigh_values(&b).unwrap();
        for (x, y) in ea.iter().zip(eb.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn two_gauges_differ_by_left_unitary() {
        let p = am(2.0, 0.4, 0.9, 1.0);
        let theta = am_metric(&p).unwrap();
        let tri = cholesky_factor(&theta).unwrap();
        let herm = hermitian_root_factor(&theta).unwrap();
        let gauge = herm.omega().matmul(tri.omega_inverse());
        let product = gauge.dagger().matmul(&gauge);
        assert!(product.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-10);
    }

    #[test]
    fn map_ket_preserves_metric_inner_product() {
        let p = am(1.7, 0.9, 1.3, 1.0);
        let theta = am_metric(&p).unwrap();
        let fac = cholesky_factor(&theta).unwrap();
        let psi = array![c(0.3, -0.4), c(1.1, 0.2)];
        let phi = array![c(-0.5, 0.1), c(0.2, 0.9)];
        let mapped_psi = fac.map_ket(&psi).unwrap();
        let mapped_phi = fac.map_ket(&phi).unwrap();
        let lhs = inner(&mapped_phi, &mapped_psi);
        let rhs = inner(&phi, &theta.theta().mul_vec(&psi));
        assert!((lhs - rhs).norm() < 1e-12);
        // norm squared special case
        let norm_lhs = inner(&mapped_psi, &mapped_psi);
        let norm_rhs = inner(&psi, &theta.theta().mul_vec(&psi));
        assert!((norm_lhs - norm_rhs).norm() < 1e-12);
    }

    #[test]
    fn map_ket_identity_gauge_is_noop() {
        let theta = positivity_certificate(&ComplexMatrix::identity(2)).unwrap();
        let fac = cholesky_factor(&theta).unwrap();
        let psi = array![c(0.3, -0.4), c(1.1, 0.2)];
        let mapped = fac.map_ket(&psi).unwrap();
        assert!(crate::matrix::vec_max_abs_diff(&mapped, &psi) < 1e-14);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let theta = positivity_certificate(&ComplexMatrix::identity(2)).unwrap();
        let fac = cholesky_factor(&theta).unwrap();
        let h3 = ComplexMatrix::identity(3);
        assert!(matches!(
            pushforward_hamiltonian(&h3, &fac),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            pullback_hamiltonian(&h3, &fac),
            Err(Error::DimensionMismatch(_))
        ));
        let psi = array![c(1.0, 0.0)];
        assert!(matches!(
            fac.map_ket(&psi),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
