//! The exactly solvable two-level model and time-dependent operator values.
//!
//! Everything here is written in closed form, independent of the general
//! solvers, so these matrices double as oracles for the solver modules.

use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr, Func};
use crate::factor::{FactorKind, MappingFactorization};
use crate::matrix::{ComplexMatrix, C64};
use crate::metric::{MetricCandidate, Provenance};

/// Parameters of the two-level model: `H = [[0, r e^{i b}], [e^{-i b}/r, 0]]`
/// with metric family `Theta_Z = f [[1, r e^{i b} cos Z], [r e^{-i b} cos Z, r^2]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AMModelParams {
    r: f64,
    beta: f64,
    z: f64,
    f: f64,
}

impl AMModelParams {
    pub fn new(r: f64, beta: f64, z: f64, f: f64) -> Result<Self> {
        if r == 0.0 || !r.is_finite() {
            return Err(Error::Domain(format!("r must be finite and nonzero, got {r}")));
        }
        if f <= 0.0 || !f.is_finite() {
            return Err(Error::Domain(format!("f must be finite and positive, got {f}")));
        }
        if !beta.is_finite() || !z.is_finite() {
            return Err(Error::Domain("beta and Z must be finite".into()));
        }
        Ok(Self { r, beta, z, f })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn f(&self) -> f64 {
        self.f
    }
}

fn phase(beta: f64) -> C64 {
    C64::new(0.0, beta).exp()
}

/// `[[0, r e^{i b}], [e^{-i b}/r, 0]]`; eigenvalues are exactly +1 and -1.
pub fn am_hamiltonian(params: &AMModelParams) -> ComplexMatrix {
    let e = phase(params.beta);
    ComplexMatrix::from_rows(
        2,
        &[
            C64::new(0.0, 0.0),
            e * params.r,
            e.conj() / params.r,
            C64::new(0.0, 0.0),
        ],
    )
    .expect("closed-form entries are finite")
}

/// Raw metric matrix `f [[1, r e^{i b} cos Z], [r e^{-i b} cos Z, r^2]]`
/// without the positivity certificate.
pub(crate) fn am_metric_matrix(params: &AMModelParams) -> ComplexMatrix {
    let e = phase(params.beta);
    let g = params.r * params.z.cos();
    ComplexMatrix::from_rows(
        2,
        &[
            C64::new(1.0, 0.0),
            e * g,
            e.conj() * g,
            C64::new(params.r * params.r, 0.0),
        ],
    )
    .expect("closed-form entries are finite")
    .scale_re(params.f)
}

/// Certified metric of the closed-form family. Singular at `sin Z = 0`.
pub fn am_metric(params: &AMModelParams) -> Result<MetricCandidate> {
    let theta = am_metric_matrix(params);
    let candidate = MetricCandidate::certify(theta, Provenance::ClosedForm, 1e-10)?;
    if !candidate.is_positive_definite() {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: candidate.min_eigenvalue(),
        });
    }
    Ok(candidate)
}

/// The Hermitian image `[[cos Z, e^{i b} sin Z], [e^{-i b} sin Z, -cos Z]]`
/// of the model Hamiltonian in the textbook space; eigenvalues +1 and -1.
pub fn am_physical_hamiltonian(params: &AMModelParams) -> Result<ComplexMatrix> {
    let s = params.z.sin();
    if s == 0.0 {
        return Err(Error::Domain(format!(
            "sin Z = 0 at Z = {}: the mapping to the textbook space is singular",
            params.z
        )));
    }
    let c = params.z.cos();
    let e = phase(params.beta);
    ComplexMatrix::from_rows(
        2,
        &[
            C64::new(c, 0.0),
            e * s,
            e.conj() * s,
            C64::new(-c, 0.0),
        ],
    )
}

/// Closed-form triangular map with `Omega† Omega = Theta`:
/// `Omega = sqrt(f) [[1, r e^{i b} cos Z], [0, r sin Z]]`.
pub fn am_dyson_map(params: &AMModelParams) -> Result<MappingFactorization> {
    let s = params.z.sin();
    if params.r * s == 0.0 {
        return Err(Error::Domain(format!(
            "r sin Z = 0 at Z = {}: the triangular map is singular",
            params.z
        )));
    }
    let c = params.z.cos();
    let e = phase(params.beta);
    let sf = params.f.sqrt();
    let omega = ComplexMatrix::from_rows(
        2,
        &[
            C64::new(1.0, 0.0),
            e * (params.r * c),
            C64::new(0.0, 0.0),
            C64::new(params.r * s, 0.0),
        ],
    )?
    .scale_re(sf);
    let omega_inverse = ComplexMatrix::from_rows(
        2,
        &[
            C64::new(1.0, 0.0),
            e * (-c / s),
            C64::new(0.0, 0.0),
            C64::new(1.0 / (params.r * s), 0.0),
        ],
    )?
    .scale_re(1.0 / sf);
    Ok(MappingFactorization::from_parts(
        omega,
        omega_inverse,
        FactorKind::Triangular,
    ))
}

/// Matrix whose entries are scalar expressions of time and named parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeDependentOperator {
    dim: usize,
    entries: Vec<Expr>, // row-major
}

impl TimeDependentOperator {
    pub fn new(dim: usize, entries: Vec<Expr>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("operator dimension must be at least 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {dim}x{dim} operator, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Ok(Self { dim, entries })
    }

    pub fn from_strings(dim: usize, entries: &[&str]) -> Result<Self> {
        let parsed = entries
            .iter()
            .map(|s| Expr::parse(s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dim, parsed)
    }

    /// Lifts a constant matrix into a (time-independent) operator.
    pub fn constant(m: &ComplexMatrix) -> Self {
        let dim = m.dim();
        let mut entries = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                entries.push(constant_entry(m.get(i, j)));
            }
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> &Expr {
        &self.entries[i * self.dim + j]
    }

    /// Entrywise evaluation at time `t` under the given parameter bindings.
    pub fn evaluate(&self, t: f64, params: &Bindings) -> Result<ComplexMatrix> {
        let mut values = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            values.push(e.eval(t, params)?);
        }
        ComplexMatrix::from_rows(self.dim, &values)
    }

    /// Entrywise symbolic time derivative.
    pub fn time_derivative(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|e| e.differentiate()).collect(),
        }
    }

    pub fn depends_on_time(&self) -> bool {
        self.entries.iter().any(|e| e.depends_on_time())
    }
}

/// Entrywise evaluation; free-function form of [`TimeDependentOperator::evaluate`].
pub fn evaluate(op: &TimeDependentOperator, t: f64, params: &Bindings) -> Result<ComplexMatrix> {
    op.evaluate(t, params)
}

fn constant_entry(v: C64) -> Expr {
    let re = Expr::Number(v.re);
    if v.im == 0.0 {
        re
    } else if v.re == 0.0 {
        Expr::mul(Expr::Number(v.im), Expr::ImaginaryUnit)
    } else {
        Expr::add(re, Expr::mul(Expr::Number(v.im), Expr::ImaginaryUnit))
    }
}

fn exp_i(beta: Expr) -> Expr {
    Expr::call(Func::Exp, Expr::mul(Expr::ImaginaryUnit, beta))
}

fn exp_minus_i(beta: Expr) -> Expr {
    Expr::call(Func::Exp, Expr::neg(Expr::mul(Expr::ImaginaryUnit, beta)))
}

/// Model Hamiltonian with time-dependent `r(t)` and `beta(t)`.
pub fn am_hamiltonian_op(r: &Expr, beta: &Expr) -> TimeDependentOperator {
    let entries = vec![
        Expr::Number(0.0),
        Expr::mul(r.clone(), exp_i(beta.clone())),
        Expr::div(exp_minus_i(beta.clone()), r.clone()),
        Expr::Number(0.0),
    ];
    TimeDependentOperator { dim: 2, entries }
}

/// Time-dependent triangular map `sqrt(f) [[1, r e^{i b} cos Z], [0, r sin Z]]`.
pub fn am_dyson_op(r: &Expr, beta: &Expr, z: &Expr, f: &Expr) -> TimeDependentOperator {
    let sf = Expr::call(Func::Sqrt, f.clone());
    let entries = vec![
        sf.clone(),
        Expr::mul(
            sf.clone(),
            Expr::mul(
                r.clone(),
                Expr::mul(exp_i(beta.clone()), Expr::call(Func::Cos, z.clone())),
            ),
        ),
        Expr::Number(0.0),
        Expr::mul(
            sf,
            Expr::mul(r.clone(), Expr::call(Func::Sin, z.clone())),
        ),
    ];
    TimeDependentOperator { dim: 2, entries }
}

/// Observable family member with time-dependent real parameters.
pub fn am_observable_op(
    a: &Expr,
    p: &Expr,
    q: &Expr,
    d: &Expr,
    beta: &Expr,
) -> TimeDependentOperator {
    let entries = vec![
        a.clone(),
        Expr::mul(p.clone(), exp_i(beta.clone())),
        Expr::mul(q.clone(), exp_minus_i(beta.clone())),
        d.clone(),
    ];
    TimeDependentOperator { dim: 2, entries }
}
