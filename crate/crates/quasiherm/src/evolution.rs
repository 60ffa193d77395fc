//! Time evolution in all three representations.
//!
//! When the map `Omega(t)` carries time dependence, the wave-function
//! generator in the friendly space is `H_gen(t) = H(t) - i Omega^{-1}(t)
//! Omega_dot(t)` rather than the Hamiltonian itself. Kets evolve under
//! `H_gen`, ketkets under its adjoint, and the physical norm
//! `<<Phi|Phi> = ketket† ket` is conserved; the pair of operator equations
//! for `U_R` and `U_L†` propagates the same dynamics in operator form.

use crate::error::{Error, Result};
use crate::expr::Bindings;
use crate::linalg;
use crate::matrix::{inner, ComplexMatrix, CVector, C64};
use crate::metric::{hermitian_basis, intertwining_system};
use crate::model::TimeDependentOperator;
use ndarray::Array2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Stepper {
    /// Classical fixed-step fourth-order Runge-Kutta. Norm drift and
    /// consistency residuals scale as `O(h^4)` in the step size.
    #[default]
    Rk4,
}

/// How `Omega_dot` is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    /// Central finite difference with the scenario's `derivative_step`.
    #[default]
    FiniteDifference,
    /// Exact entrywise symbolic derivative of the expression matrix.
    Exact,
}

/// Scenario-overridable tolerances with the module defaults.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// max |H† Theta - Theta H| allowed at every grid node.
    pub compatibility: f64,
    /// |Im E| allowed when a spectral decomposition is requested.
    pub reality: f64,
    /// Hermiticity deviation allowed for the pushforward in the textbook space.
    pub hermiticity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            compatibility: 1e-8,
            reality: 1e-8,
            hermiticity: 1e-8,
        }
    }
}

/// A complete time-dependent problem: operators, horizon, initial state and
/// integration controls. `omega` must stay invertible on the whole grid.
#[derive(Clone, Debug)]
pub struct TimeDependentScenario {
    pub hamiltonian: TimeDependentOperator,
    pub observable: Option<TimeDependentOperator>,
    pub omega: TimeDependentOperator,
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
    pub initial_ket: CVector,
    pub derivative_step: f64,
    pub derivative_mode: DerivativeMode,
    pub stepper: Stepper,
    pub params: Bindings,
    pub tolerances: Tolerances,
}

impl TimeDependentScenario {
    pub fn new(
        hamiltonian: TimeDependentOperator,
        omega: TimeDependentOperator,
        t0: f64,
        t1: f64,
        steps: usize,
        initial_ket: CVector,
    ) -> Result<Self> {
        let sc = Self {
            hamiltonian,
            observable: None,
            omega,
            t0,
            t1,
            steps,
            initial_ket,
            derivative_step: 1e-6 * (t1 - t0).abs().max(1.0),
            derivative_mode: DerivativeMode::default(),
            stepper: Stepper::default(),
            params: Bindings::new(),
            tolerances: Tolerances::default(),
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.hamiltonian.dim();
        if self.omega.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "omega has dimension {}, Hamiltonian has {}",
                self.omega.dim(),
                dim
            )));
        }
        if let Some(obs) = &self.observable {
            if obs.dim() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "observable has dimension {}, Hamiltonian has {}",
                    obs.dim(),
                    dim
                )));
            }
        }
        if self.initial_ket.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "initial ket has length {}, Hamiltonian has dimension {}",
                self.initial_ket.len(),
                dim
            )));
        }
        if !self.t0.is_finite() || !self.t1.is_finite() || self.t1 < self.t0 {
            return Err(Error::Domain(format!(
                "horizon [{}, {}] must be finite with t1 >= t0",
                self.t0, self.t1
            )));
        }
        if self.initial_ket.iter().all(|v| v.norm() == 0.0) {
            return Err(Error::Domain("initial ket must be nonzero".into()));
        }
        if self.derivative_step <= 0.0 {
            return Err(Error::Domain(format!(
                "derivative step must be positive, got {}",
                self.derivative_step
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    /// Integration grid: `steps + 1` equispaced nodes covering the horizon.
    pub fn times(&self) -> Vec<f64> {
        if self.t1 == self.t0 {
            return vec![self.t0];
        }
        let h = (self.t1 - self.t0) / self.steps as f64;
        let mut times: Vec<f64> = (0..=self.steps)
            .map(|k| self.t0 + k as f64 * h)
            .collect();
        times[self.steps] = self.t1;
        times
    }

    /// `Theta(t) = Omega(t)† Omega(t)`.
    pub fn theta_at(&self, t: f64) -> Result<ComplexMatrix> {
        let ctx = EvalCtx::new(self);
        let (omega, _) = ctx.omega_at(t)?;
        Ok(omega.dagger().matmul(&omega))
    }

    /// `Omega(t)` and its inverse; errors when the map degenerates.
    pub fn omega_at(&self, t: f64) -> Result<(ComplexMatrix, ComplexMatrix)> {
        EvalCtx::new(self).omega_at(t)
    }
}

/// Per-call evaluation context: caches the symbolic derivative so stage
/// evaluations in the hot loop stay cheap.
struct EvalCtx<'a> {
    sc: &'a TimeDependentScenario,
    omega_dot: Option<TimeDependentOperator>,
}

/// Generator stage values shared by all integrators.
struct GenStage {
    h: ComplexMatrix,
    h_gen: ComplexMatrix,
}

impl<'a> EvalCtx<'a> {
    fn new(sc: &'a TimeDependentScenario) -> Self {
        let omega_dot = match sc.derivative_mode {
            DerivativeMode::Exact => Some(sc.omega.time_derivative()),
            DerivativeMode::FiniteDifference => None,
        };
        Self { sc, omega_dot }
    }

    fn omega_at(&self, t: f64) -> Result<(ComplexMatrix, ComplexMatrix)> {
        let omega = self.sc.omega.evaluate(t, &self.sc.params)?;
        let omega_inv = linalg::inverse(&omega).map_err(|_| Error::SingularOmega { t })?;
        if omega.max_abs() * omega_inv.max_abs() > 1e12 {
            return Err(Error::SingularOmega { t });
        }
        Ok((omega, omega_inv))
    }

    fn omega_dot_at(&self, t: f64) -> Result<ComplexMatrix> {
        match &self.omega_dot {
            Some(op) => op.evaluate(t, &self.sc.params),
            None => {
                let h = self.sc.derivative_step;
                let plus = self.sc.omega.evaluate(t + h, &self.sc.params)?;
                let minus = self.sc.omega.evaluate(t - h, &self.sc.params)?;
                Ok(plus.sub(&minus).scale_re(1.0 / (2.0 * h)))
            }
        }
    }

    fn generator_at(&self, t: f64) -> Result<GenStage> {
        let h = self.sc.hamiltonian.evaluate(t, &self.sc.params)?;
        let (_, omega_inv) = self.omega_at(t)?;
        let omega_dot = self.omega_dot_at(t)?;
        let drift = omega_inv.matmul(&omega_dot).scale(C64::new(0.0, -1.0));
        Ok(GenStage {
            h_gen: h.add(&drift),
            h,
        })
    }

    /// `h(t) = Omega H Omega^{-1}`, the textbook-space image.
    fn pushforward_at(&self, t: f64) -> Result<ComplexMatrix> {
        let h = self.sc.hamiltonian.evaluate(t, &self.sc.params)?;
        let (omega, omega_inv) = self.omega_at(t)?;
        Ok(omega.matmul(&h.matmul(&omega_inv)))
    }

    fn step_size(&self) -> Result<f64> {
        if self.sc.t1 == self.sc.t0 {
            return Ok(0.0);
        }
        if self.sc.steps == 0 {
            return Err(Error::StepSizeUnderflow(
                "at least one step is required for a nonempty horizon".into(),
            ));
        }
        let h = (self.sc.t1 - self.sc.t0) / self.sc.steps as f64;
        if self.sc.t0 + h == self.sc.t0 {
            return Err(Error::StepSizeUnderflow(format!(
                "step {h} vanishes next to t0 = {}",
                self.sc.t0
            )));
        }
        Ok(h)
    }
}

/// `H_gen(t) = H(t) - i Omega^{-1}(t) Omega_dot(t)`.
pub fn generator(sc: &TimeDependentScenario, t: f64) -> Result<ComplexMatrix> {
    sc.validate()?;
    Ok(EvalCtx::new(sc).generator_at(t)?.h_gen)
}

/// An operator trajectory on the integration grid.
#[derive(Clone, Debug)]
pub struct OperatorTrajectory {
    times: Vec<f64>,
    operators: Vec<ComplexMatrix>,
}

impl OperatorTrajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Ket/ketket trajectories with derived scalars per node.
#[derive(Clone, Debug)]
pub struct EvolutionTrajectory {
    times: Vec<f64>,
    kets: Vec<CVector>,
    ketkets: Vec<CVector>,
    physical_norms: Vec<f64>,
    expectations: Option<Vec<f64>>,
}

impl EvolutionTrajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn kets(&self) -> &[CVector] {
        &self.kets
    }

    pub fn ketkets(&self) -> &[CVector] {
        &self.ketkets
    }

    pub fn physical_norms(&self) -> &[f64] {
        &self.physical_norms
    }

    pub fn expectations(&self) -> Option<&[f64]> {
        self.expectations.as_deref()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Right and left evolution operators on the grid: kets evolve by `U_R`,
/// ketkets by `U_L†`.
#[derive(Clone, Debug)]
pub struct EvolutionOperators {
    times: Vec<f64>,
    u_right: Vec<ComplexMatrix>,
    u_left_dagger: Vec<ComplexMatrix>,
}

impl EvolutionOperators {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn u_right(&self) -> &[ComplexMatrix] {
        &self.u_right
    }

    pub fn u_left_dagger(&self) -> &[ComplexMatrix] {
        &self.u_left_dagger
    }
}

fn rk4_vec(g: [&ComplexMatrix; 3], y: &CVector, h: f64) -> CVector {
    let minus_i = C64::new(0.0, -1.0);
    let f = |m: &ComplexMatrix, v: &CVector| -> CVector { m.mul_vec(v).mapv(|x| x * minus_i) };
    let k1 = f(g[0], y);
    let k2 = f(g[1], &(y + &k1.mapv(|x| x * (h / 2.0))));
    let k3 = f(g[1], &(y + &k2.mapv(|x| x * (h / 2.0))));
    let k4 = f(g[2], &(y + &k3.mapv(|x| x * h)));
    y + &(k1 + k2.mapv(|x| x * 2.0) + k3.mapv(|x| x * 2.0) + k4).mapv(|x| x * (h / 6.0))
}

fn rk4_mat(g: [&ComplexMatrix; 3], y: &ComplexMatrix, h: f64) -> ComplexMatrix {
    let minus_i = C64::new(0.0, -1.0);
    let f = |m: &ComplexMatrix, v: &ComplexMatrix| m.matmul(v).scale(minus_i);
    let k1 = f(g[0], y);
    let k2 = f(g[1], &y.add(&k1.scale_re(h / 2.0)));
    let k3 = f(g[1], &y.add(&k2.scale_re(h / 2.0)));
    let k4 = f(g[2], &y.add(&k3.scale_re(h)));
    y.add(
        &k1.add(&k2.scale_re(2.0))
            .add(&k3.scale_re(2.0))
            .add(&k4)
            .scale_re(h / 6.0),
    )
}

/// Integrates the textbook equation `i du/dt = h(t) u`, `u(t0) = I`.
/// The pushforward must be Hermitian (within tolerance) at every node.
pub fn evolve_textbook(sc: &TimeDependentScenario) -> Result<OperatorTrajectory> {
    sc.validate()?;
    let ctx = EvalCtx::new(sc);
    let times = sc.times();
    let dim = sc.dim();
    let check = |t: f64, m: &ComplexMatrix| -> Result<()> {
        let deviation = m.hermiticity_deviation();
        if deviation > sc.tolerances.hermiticity {
            return Err(Error::NonHermitianPushforward {
                t,
                deviation,
                tol: sc.tolerances.hermiticity,
            });
        }
        Ok(())
    };

    let h = ctx.step_size()?;
    let mut operators = Vec::with_capacity(times.len());
    operators.push(ComplexMatrix::identity(dim));
    if times.len() == 1 {
        return Ok(OperatorTrajectory { times, operators });
    }
    let mut stage_start = ctx.pushforward_at(times[0])?;
    check(times[0], &stage_start)?;
    for k in 0..sc.steps {
        let t = times[k];
        let mid = ctx.pushforward_at(t + h / 2.0)?;
        let end = ctx.pushforward_at(times[k + 1])?;
        check(times[k + 1], &end)?;
        let next = rk4_mat([&stage_start, &mid, &end], &operators[k], h);
        operators.push(next);
        stage_start = end;
    }
    Ok(OperatorTrajectory { times, operators })
}

/// Integrates the doublet: `i d|Phi>/dt = H_gen |Phi>` from the initial ket
/// and `i d|Phi>>/dt = H_gen† |Phi>>` from `Theta(t0)` times the initial ket.
/// Records physical norms and, when an observable is present, its
/// expectation values along the trajectory.
pub fn evolve_doublet(sc: &TimeDependentScenario) -> Result<EvolutionTrajectory> {
    sc.validate()?;
    let ctx = EvalCtx::new(sc);
    let h = ctx.step_size()?;
    let times = sc.times();

    let theta0 = sc.theta_at(times[0])?;
    let mut kets = Vec::with_capacity(times.len());
    let mut ketkets = Vec::with_capacity(times.len());
    kets.push(sc.initial_ket.clone());
    ketkets.push(theta0.mul_vec(&sc.initial_ket));

    if times.len() > 1 {
        let mut stage_start = ctx.generator_at(times[0])?;
        for k in 0..sc.steps {
            let t = times[k];
            let mid = ctx.generator_at(t + h / 2.0)?;
            let end = ctx.generator_at(times[k + 1])?;
            let gens = [&stage_start.h_gen, &mid.h_gen, &end.h_gen];
            kets.push(rk4_vec(gens, &kets[k], h));
            let adj = [
                stage_start.h_gen.dagger(),
                mid.h_gen.dagger(),
                end.h_gen.dagger(),
            ];
            ketkets.push(rk4_vec([&adj[0], &adj[1], &adj[2]], &ketkets[k], h));
            stage_start = end;
        }
    }

    let physical_norms: Vec<f64> = kets
        .iter()
        .zip(&ketkets)
        .map(|(ket, kk)| inner(kk, ket).re)
        .collect();

    let expectations = match &sc.observable {
        Some(obs) => {
            let mut values = Vec::with_capacity(times.len());
            for (k, t) in times.iter().enumerate() {
                let lambda = obs.evaluate(*t, &sc.params)?;
                let num = inner(&ketkets[k], &lambda.mul_vec(&kets[k]));
                values.push(num.re / physical_norms[k]);
            }
            Some(values)
        }
        None => None,
    };

    Ok(EvolutionTrajectory {
        times,
        kets,
        ketkets,
        physical_norms,
        expectations,
    })
}

/// Integrates the operator pair `i dU_R/dt = H_gen U_R` and
/// `i dU_L†/dt = H_gen† U_L†`, both from the identity.
pub fn evolve_operators(sc: &TimeDependentScenario) -> Result<EvolutionOperators> {
    sc.validate()?;
    let ctx = EvalCtx::new(sc);
    let h = ctx.step_size()?;
    let times = sc.times();
    let dim = sc.dim();

    let mut u_right = vec![ComplexMatrix::identity(dim)];
    let mut u_left_dagger = vec![ComplexMatrix::identity(dim)];

    if times.len() > 1 {
        let mut stage_start = ctx.generator_at(times[0])?;
        for k in 0..sc.steps {
            let t = times[k];
            let mid = ctx.generator_at(t + h / 2.0)?;
            let end = ctx.generator_at(times[k + 1])?;
            u_right.push(rk4_mat(
                [&stage_start.h_gen, &mid.h_gen, &end.h_gen],
                &u_right[k],
                h,
            ));
            let adj = [
                stage_start.h_gen.dagger(),
                mid.h_gen.dagger(),
                end.h_gen.dagger(),
            ];
            u_left_dagger.push(rk4_mat([&adj[0], &adj[1], &adj[2]], &u_left_dagger[k], h));
            stage_start = end;
        }
    }

    Ok(EvolutionOperators {
        times,
        u_right,
        u_left_dagger,
    })
}

/// Checks every grid node: `Omega(t)` invertible and the metric compatible
/// with the Hamiltonian to the scenario's compatibility tolerance.
pub fn validate_scenario_grid(sc: &TimeDependentScenario) -> Result<()> {
    sc.validate()?;
    let ctx = EvalCtx::new(sc);
    ctx.step_size()?;
    for t in sc.times() {
        let (omega, _) = ctx.omega_at(t)?;
        let theta = omega.dagger().matmul(&omega);
        let h = sc.hamiltonian.evaluate(t, &sc.params)?;
        let residual = h.dagger().matmul(&theta).max_abs_diff(&theta.matmul(&h));
        if residual > sc.tolerances.compatibility {
            return Err(Error::IncompatibleMetric {
                t,
                residual,
                tol: sc.tolerances.compatibility,
            });
        }
    }
    Ok(())
}

/// Outcome of the quasistationarity probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuasistationarityReport {
    /// Whether a single positive-definite metric works at all sampled times.
    /// The positive search is a heuristic scan over the intersection cone,
    /// so `false` means none was found, not a proof of absence.
    pub exists: bool,
    /// Real dimension of the common intertwining solution space.
    pub common_family_dim: usize,
}

/// Equispaced sample times across the scenario horizon.
pub fn default_sample_times(sc: &TimeDependentScenario, count: usize) -> Vec<f64> {
    if count <= 1 || sc.t1 == sc.t0 {
        return vec![sc.t0; count.max(1)];
    }
    (0..count)
        .map(|k| sc.t0 + (sc.t1 - sc.t0) * k as f64 / (count - 1) as f64)
        .collect()
}

/// Intersects the metric families of `H(t_k)` over the sample times and
/// scans the intersection for a positive-definite representative.
pub fn quasistationarity_check(
    sc: &TimeDependentScenario,
    sample_times: &[f64],
) -> Result<QuasistationarityReport> {
    sc.validate()?;
    if sample_times.len() < 2 {
        return Err(Error::Domain(
            "quasistationarity check needs at least two sample times".into(),
        ));
    }
    let dim = sc.dim();
    let n2 = dim * dim;
    let mut stacked = Array2::<f64>::zeros((2 * n2 * sample_times.len(), n2));
    for (s, t) in sample_times.iter().enumerate() {
        let h = sc.hamiltonian.evaluate(*t, &sc.params)?;
        let block = intertwining_system(&h);
        for i in 0..2 * n2 {
            for j in 0..n2 {
                stacked[(s * 2 * n2 + i, j)] = block[(i, j)];
            }
        }
    }
    let null = linalg::real_nullspace(&stacked, 1e-10)?;
    let basis_mats = hermitian_basis(dim);
    let candidates: Vec<ComplexMatrix> = null
        .iter()
        .map(|x| {
            let mut acc = ComplexMatrix::zeros(dim);
            for (c, b) in x.iter().zip(&basis_mats) {
                acc = acc.add(&b.scale_re(*c));
            }
            acc
        })
        .collect();

    let d = candidates.len();
    if d == 0 {
        return Ok(QuasistationarityReport {
            exists: false,
            common_family_dim: 0,
        });
    }

    let is_positive = |m: &ComplexMatrix| -> bool {
        match linalg::eigh_values(m) {
            Ok(vals) => {
                let scale = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                scale > 0.0 && vals[0] > 1e-10 * scale
            }
            Err(_) => false,
        }
    };

    // single elements and their negatives first, then a coarse grid of
    // {-1, 0, 1} coefficient combinations when the dimension allows it
    for c in &candidates {
        if is_positive(c) || is_positive(&c.scale_re(-1.0)) {
            return Ok(QuasistationarityReport {
                exists: true,
                common_family_dim: d,
            });
        }
    }
    if d <= 8 {
        let combos = 3usize.pow(d as u32);
        for code in 1..combos {
            let mut rest = code;
            let mut acc = ComplexMatrix::zeros(dim);
            for c in candidates.iter() {
                let digit = rest % 3;
                rest /= 3;
                match digit {
                    1 => acc = acc.add(c),
                    2 => acc = acc.sub(c),
                    _ => {}
                }
            }
            if is_positive(&acc) {
                return Ok(QuasistationarityReport {
                    exists: true,
                    common_family_dim: d,
                });
            }
        }
    }
    Ok(QuasistationarityReport {
        exists: false,
        common_family_dim: d,
    })
}
