//! Biorthogonal eigenbases, ketket vectors, spectral resolutions and the
//! single-series parametrization of maps and metrics.

use crate::error::{Error, Result};
use crate::factor::{FactorKind, MappingFactorization};
use crate::linalg;
use crate::matrix::{ComplexMatrix, CVector, C64};
use crate::metric::{MetricCandidate, Provenance};
use ndarray::{Array1, Array2};

/// Right eigenkets of `H` paired with the ketkets `|n>> = Theta |n>` of its
/// conjugate, normalized so that `<<m|n> = delta_mn`.
#[derive(Clone, Debug)]
pub struct BiorthogonalSystem {
    dim: usize,
    energies: Vec<f64>,
    right_kets: Vec<CVector>,
    ketkets: Vec<CVector>,
}

impl BiorthogonalSystem {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn right_kets(&self) -> &[CVector] {
        &self.right_kets
    }

    pub fn ketkets(&self) -> &[CVector] {
        &self.ketkets
    }

    /// `<<n|psi>`: the expansion coefficient of `psi` along the n-th mode.
    pub fn coefficient(&self, n: usize, psi: &CVector) -> C64 {
        crate::matrix::inner(&self.ketkets[n], psi)
    }

    /// max over (m, n) of `|<<m|n> - delta_mn|`.
    pub fn biorthogonality_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for m in 0..self.dim {
            for n in 0..self.dim {
                let pairing = crate::matrix::inner(&self.ketkets[m], &self.right_kets[n]);
                let expected = if m == n {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                };
                worst = worst.max((pairing - expected).norm());
            }
        }
        worst
    }
}

/// Nonzero complex weights of the single-series parametrization.
#[derive(Clone, Debug)]
pub struct MuParameters {
    mu: Vec<C64>,
}

impl MuParameters {
    pub fn new(mu: Vec<C64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::Domain("mu list must not be empty".into()));
        }
        for (n, m) in mu.iter().enumerate() {
            if m.norm() == 0.0 || !m.re.is_finite() || !m.im.is_finite() {
                return Err(Error::Domain(format!(
                    "mu[{n}] must be finite and nonzero, got {m}"
                )));
            }
        }
        Ok(Self { mu })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            mu: vec![C64::new(1.0, 0.0); dim],
        }
    }

    pub fn values(&self) -> &[C64] {
        &self.mu
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// Diagonalizes `H`, verifies the spectrum is real within `reality_tol`,
/// sorts energies ascending, fixes phases (first nonzero component of each
/// right ket real positive) and biorthonormalizes against the conjugate
/// eigenbasis.
pub fn biorthogonal_decompose(
    h: &ComplexMatrix,
    reality_tol: f64,
) -> Result<BiorthogonalSystem> {
    let dim = h.dim();
    let (vals, vecs) = linalg::eig(h)?;

    let worst_imag = vals.iter().fold(0.0_f64, |m, v| m.max(v.im.abs()));
    if worst_imag > reality_tol {
        return Err(Error::ComplexSpectrum {
            imag: worst_imag,
            tol: reality_tol,
        });
    }

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| vals[a].re.partial_cmp(&vals[b].re).unwrap());
    let energies: Vec<f64> = order.iter().map(|&k| vals[k].re).collect();

    if dim > 1 {
        let diameter = energies[dim - 1] - energies[0];
        let gap_tol = 1e-8 * diameter;
        for w in energies.windows(2) {
            let gap = w[1] - w[0];
            if gap <= gap_tol {
                return Err(Error::DegenerateSpectrum { gap, tol: gap_tol });
            }
        }
    }

    // unit-norm right kets with the phase convention applied
    let mut v = Array2::<C64>::zeros((dim, dim));
    for (col, &k) in order.iter().enumerate() {
        let mut ket: Array1<C64> = vecs.column(k).to_owned();
        let norm = ket.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::DefectiveMatrix);
        }
        ket.mapv_inplace(|x| x / norm);
        let scale = ket.iter().fold(0.0_f64, |m, x| m.max(x.norm()));
        if let Some(lead) = ket.iter().find(|x| x.norm() > 1e-12 * scale) {
            let phase = lead / lead.norm();
            ket.mapv_inplace(|x| x / phase);
        }
        for i in 0..dim {
            v[(i, col)] = ket[i];
        }
    }

    let v = ComplexMatrix::new(v)?;
    let w0 = linalg::inverse(&v).map_err(|_| Error::DefectiveMatrix)?;
    // one Newton-Schulz sweep, W <- W (2I - V W), tightens the dual basis
    let correction = ComplexMatrix::identity(dim)
        .scale_re(2.0)
        .sub(&v.matmul(&w0));
    let w = w0.matmul(&correction);
    let residual = w.matmul(&v).max_abs_diff(&ComplexMatrix::identity(dim));
    if residual > 1e-10 {
        return Err(Error::DefectiveMatrix);
    }

    let mut right_kets = Vec::with_capacity(dim);
    let mut ketkets = Vec::with_capacity(dim);
    for n in 0..dim {
        right_kets.push(v.as_array().column(n).to_owned());
        let mut kk = Array1::<C64>::zeros(dim);
        for j in 0..dim {
            kk[j] = w.get(n, j).conj();
        }
        ketkets.push(kk);
    }

    Ok(BiorthogonalSystem {
        dim,
        energies,
        right_kets,
        ketkets,
    })
}

fn require_mu_len(sys: &BiorthogonalSystem, mu: &MuParameters) -> Result<()> {
    if mu.len() != sys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "mu has {} entries, system has dimension {}",
            mu.len(),
            sys.dim()
        )));
    }
    Ok(())
}

/// `Theta = sum_n |mu_n|^2 |n>><<n|`: Hermitian and positive definite for any
/// admissible `mu`.
pub fn metric_from_mu(sys: &BiorthogonalSystem, mu: &MuParameters) -> Result<MetricCandidate> {
    require_mu_len(sys, mu)?;
    let dim = sys.dim();
    let mut theta = Array2::<C64>::zeros((dim, dim));
    for (n, kk) in sys.ketkets().iter().enumerate() {
        let weight = mu.values()[n].norm_sqr();
        for i in 0..dim {
            for j in 0..dim {
                theta[(i, j)] += kk[i] * kk[j].conj() * weight;
            }
        }
    }
    MetricCandidate::certify(ComplexMatrix::new(theta)?, Provenance::MuSeries, 1e-10)
}

/// `Omega = sum_n |n-succ> mu_n <<n|` with the textbook basis fixed to the
/// standard coordinate basis, and the closed-form inverse
/// `Omega^{-1} = sum_n |n> mu_n^{-1} <n-prec|`.
pub fn omega_from_mu(sys: &BiorthogonalSystem, mu: &MuParameters) -> Result<MappingFactorization> {
    require_mu_len(sys, mu)?;
    let dim = sys.dim();
    let mut omega = Array2::<C64>::zeros((dim, dim));
    let mut omega_inv = Array2::<C64>::zeros((dim, dim));
    for n in 0..dim {
        let m = mu.values()[n];
        let kk = &sys.ketkets()[n];
        let ket = &sys.right_kets()[n];
        for j in 0..dim {
            omega[(n, j)] = m * kk[j].conj();
            omega_inv[(j, n)] = ket[j] / m;
        }
    }
    Ok(MappingFactorization::from_parts(
        ComplexMatrix::new(omega)?,
        ComplexMatrix::new(omega_inv)?,
        FactorKind::MuSeries,
    ))
}

/// Residual `max |H - sum_n |n> E_n <n| Theta|` of the explicitly
/// metric-dependent spectral form in the friendly space.
pub fn spectral_resolution_check(
    h: &ComplexMatrix,
    sys: &BiorthogonalSystem,
    theta: &ComplexMatrix,
) -> Result<f64> {
    let dim = h.dim();
    if sys.dim() != dim || theta.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "H is {}x{}, system has dimension {}, theta is {}x{}",
            dim,
            dim,
            sys.dim(),
            theta.dim(),
            theta.dim()
        )));
    }
    let mut sum = Array2::<C64>::zeros((dim, dim));
    for (n, ket) in sys.right_kets().iter().enumerate() {
        let e = sys.energies()[n];
        for i in 0..dim {
            for j in 0..dim {
                sum[(i, j)] += ket[i] * e * ket[j].conj();
            }
        }
    }
    let rebuilt = ComplexMatrix::new(sum)?.matmul(theta);
    Ok(h.max_abs_diff(&rebuilt))
}
