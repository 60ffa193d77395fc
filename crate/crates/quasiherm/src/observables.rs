//! Secondary observables: the compatibility relation `Theta Lambda = Lambda† Theta`,
//! the closed-form two-level family, and reconstruction of the metric angle
//! from a prescribed observable.

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::{ComplexMatrix, C64};
use crate::metric::MetricCandidate;
use ndarray::Array2;

/// Orthonormal basis of the real solution space of the compatibility relation
/// for a fixed metric.
#[derive(Clone, Debug)]
pub struct ObservableFamily {
    dim: usize,
    basis: Vec<ComplexMatrix>,
}

impl ObservableFamily {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[ComplexMatrix] {
        &self.basis
    }

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
}

/// Orthonormal (real Frobenius) basis of all complex matrices: for each entry
/// position, the real unit then the imaginary unit, row-major.
fn full_matrix_basis(dim: usize) -> Vec<ComplexMatrix> {
    let mut basis = Vec::with_capacity(2 * dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut re = Array2::<C64>::zeros((dim, dim));
            re[(i, j)] = C64::new(1.0, 0.0);
            basis.push(ComplexMatrix::from_array_unchecked(re));
            let mut im = Array2::<C64>::zeros((dim, dim));
            im[(i, j)] = C64::new(0.0, 1.0);
            basis.push(ComplexMatrix::from_array_unchecked(im));
        }
    }
    basis
}

/// Solves `Theta Lambda = Lambda† Theta` over all complex matrices by the same
/// vectorization route as the intertwining solver, now with `2 dim^2` real
/// unknowns. The solution space has real dimension `dim^2` for any positive
/// definite metric.
pub fn solve_compatibility(theta: &MetricCandidate, tol: f64) -> Result<ObservableFamily> {
    if tol <= 0.0 {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let dim = theta.dim();
    let th = theta.theta();
    let basis_mats = full_matrix_basis(dim);
    let n2 = dim * dim;
    let mut system = Array2::<f64>::zeros((2 * n2, 2 * n2));
    for (k, b) in basis_mats.iter().enumerate() {
        let residual = (th * b).sub(&(&b.dagger() * th));
        for i in 0..dim {
            for j in 0..dim {
                let v = residual.get(i, j);
                system[(i * dim + j, k)] = v.re;
                system[(n2 + i * dim + j, k)] = v.im;
            }
        }
    }
    let null = linalg::real_nullspace(&system, tol)?;
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
    Ok(ObservableFamily { dim, basis })
}

/// Real parameters of the closed-form observable family
/// `Lambda = [[a, p e^{i b}], [q e^{-i b}, d]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AMObservableParams {
    pub a: f64,
    pub p: f64,
    pub q: f64,
    pub d: f64,
    pub beta: f64,
}

impl AMObservableParams {
    pub fn new(a: f64, p: f64, q: f64, d: f64, beta: f64) -> Self {
        Self { a, p, q, d, beta }
    }

    /// Eigenvalues `(a+d)/2 ± sqrt((a-d)^2/4 + pq)` from the characteristic
    /// polynomial; complex when the discriminant is negative.
    pub fn eigenvalues(&self) -> [C64; 2] {
        let mean = C64::new((self.a + self.d) / 2.0, 0.0);
        let disc = C64::new((self.a - self.d).powi(2) / 4.0 + self.p * self.q, 0.0).sqrt();
        [mean + disc, mean - disc]
    }

    /// Reality of the eigenvalue pair: `(a-d)^2/4 + pq >= 0`.
    pub fn eigenvalues_real(&self) -> bool {
        (self.a - self.d).powi(2) / 4.0 + self.p * self.q >= 0.0
    }
}

/// `[[a, p e^{i b}], [q e^{-i b}, d]]`.
pub fn am_observable(params: &AMObservableParams) -> ComplexMatrix {
    let e = C64::new(0.0, params.beta).exp();
    ComplexMatrix::from_rows(
        2,
        &[
            C64::new(params.a, 0.0),
            e * params.p,
            e.conj() * params.q,
            C64::new(params.d, 0.0),
        ],
    )
    .expect("closed-form entries are finite")
}

/// `|p - q r^2 - (a - d) r cos Z|`: zero exactly when the observable is
/// compatible with the closed-form metric at angle `Z`.
pub fn am_constraint_residual(params: &AMObservableParams, r: f64, z: f64) -> Result<f64> {
    if r == 0.0 {
        return Err(Error::Domain("r must be nonzero".into()));
    }
    Ok((params.p - params.q * r * r - (params.a - params.d) * r * z.cos()).abs())
}

/// Inverts the compatibility constraint for the metric angle:
/// `Z = arccos((p - q r^2) / ((a - d) r))`, principal branch in `[0, pi]`.
pub fn reconstruct_z(params: &AMObservableParams, r: f64) -> Result<f64> {
    if r == 0.0 {
        return Err(Error::Domain("r must be nonzero".into()));
    }
    if params.a == params.d {
        return Err(Error::DegenerateObservable);
    }
    let arg = (params.p - params.q * r * r) / ((params.a - params.d) * r);
    if !(-1.0..=1.0).contains(&arg) {
        return Err(Error::OutOfRange(arg));
    }
    Ok(arg.acos())
}
