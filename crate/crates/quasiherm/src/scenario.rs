//! Scenario files: a flat, human-writable key/value format describing a
//! model, a metric mode, an evolution run and the requested outputs.
//!
//! ```text
//! [model]
//! builtin = am
//! r = 1 + 0.1*sin(t)
//! beta = 0.3*t
//!
//! [metric]
//! mode = closed_form_Z
//! Z = pi/2 + 0.2*sin(t)
//!
//! [evolution]
//! t0 = 0
//! t1 = 10
//! steps = 10000
//! initial_ket = (1, 0), (0, 0)
//!
//! [output]
//! quantities = norm, generator_gap, consistency
//! ```
//!
//! Sections may appear in any order; `#` starts a comment line. Exactly one
//! metric mode must be configured. The constant `pi` is always bound when
//! expressions are evaluated.

use crate::error::{Error, Result};
use crate::evolution::{
    evolve_doublet, evolve_operators, evolve_textbook, generator, validate_scenario_grid,
    DerivativeMode, Stepper, TimeDependentScenario, Tolerances,
};
use crate::expr::{Bindings, Expr};
use crate::factor::cholesky_factor;
use crate::matrix::{ComplexMatrix, C64};
use crate::metric::{select_positive, solve_intertwining};
use crate::model::{am_dyson_op, am_hamiltonian_op, TimeDependentOperator};
use crate::spectral::{biorthogonal_decompose, omega_from_mu, MuParameters};

/// Expressions of the builtin two-level model.
#[derive(Clone, Debug)]
pub struct AmExpressions {
    pub r: Expr,
    pub beta: Expr,
}

#[derive(Clone, Debug)]
pub struct ModelSection {
    pub dim: usize,
    pub hamiltonian: TimeDependentOperator,
    pub observable: Option<TimeDependentOperator>,
    /// Present when the model was declared as `builtin = am`.
    pub am: Option<AmExpressions>,
}

#[derive(Clone, Debug)]
pub enum MetricSection {
    /// Closed-form family of the builtin model, with angle `Z(t)` and scale `f(t)`.
    ClosedFormZ { z: Expr, f: Expr },
    /// Constant map assembled from the biorthogonal system of `H(t0)`.
    MuSeries { mu: Vec<C64> },
    /// Constant metric picked from the intertwining nullspace of `H(t0)`.
    NullspaceCoeffs { coeffs: Vec<f64>, tol: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    Norm,
    GeneratorGap,
    Expectation,
    Consistency,
}

#[derive(Clone, Debug)]
pub struct EvolutionSection {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
    pub initial_ket: Vec<C64>,
    pub stepper: Stepper,
    pub derivative_step: Option<f64>,
    pub derivative_mode: DerivativeMode,
}

#[derive(Clone, Debug)]
pub struct OutputSection {
    pub path: Option<String>,
    pub format: OutputFormat,
    pub quantities: Vec<Quantity>,
}

#[derive(Clone, Debug)]
pub struct ScenarioFile {
    pub model: ModelSection,
    pub metric: MetricSection,
    pub evolution: EvolutionSection,
    pub output: OutputSection,
    pub tolerances: Tolerances,
}

/// Parameter bindings available to every scenario expression.
pub fn standard_bindings() -> Bindings {
    let mut b = Bindings::new();
    b.insert("pi".into(), std::f64::consts::PI);
    b
}

/// Pipeline stage a runtime error was raised in; drives the CLI exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Model,
    Metric,
    Evolution,
    Output,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Model => "model",
            Stage::Metric => "metric",
            Stage::Evolution => "evolution",
            Stage::Output => "output",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug)]
pub struct RunError {
    pub stage: Stage,
    pub error: Error,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} stage: {}", self.stage, self.error)
    }
}

impl std::error::Error for RunError {}

fn at(stage: Stage) -> impl Fn(Error) -> RunError {
    move |error| RunError { stage, error }
}

/// Tabular results: one row per grid node, first column `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// parsing
// ---------------------------------------------------------------------------

struct RawEntry {
    key: String,
    value: String,
    line: usize,
    value_col: usize,
}

struct RawSection {
    name: String,
    line: usize,
    entries: Vec<RawEntry>,
}

fn split_sections(text: &str) -> Result<Vec<RawSection>> {
    let mut sections: Vec<RawSection> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if trimmed.starts_with('[') {
            if !trimmed.ends_with(']') || trimmed.len() < 3 {
                return Err(Error::syntax(line_no, 1, "malformed section header"));
            }
            let name = trimmed[1..trimmed.len() - 1].trim().to_string();
            sections.push(RawSection {
                name,
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let eq = match raw_line.find('=') {
            Some(pos) => pos,
            None => {
                return Err(Error::syntax(
                    line_no,
                    1,
                    format!("expected `key = value`, got `{trimmed}`"),
                ))
            }
        };
        let key = raw_line[..eq].trim().to_string();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::syntax(line_no, 1, format!("invalid key `{key}`")));
        }
        let value_raw = &raw_line[eq + 1..];
        let leading = value_raw.len() - value_raw.trim_start().len();
        let value_col = eq + 1 + leading + 1; // 1-based column of the value text
        let value = value_raw.trim().to_string();
        let section = sections.last_mut().ok_or_else(|| {
            Error::syntax(line_no, 1, format!("key `{key}` appears before any section"))
        })?;
        if section.entries.iter().any(|e| e.key == key) {
            if key == "mode" {
                return Err(Error::ConflictingMetricModes(format!(
                    "`mode` specified more than once (line {line_no})"
                )));
            }
            return Err(Error::syntax(
                line_no,
                1,
                format!("duplicate key `{key}` in section [{}]", section.name),
            ));
        }
        section.entries.push(RawEntry {
            key,
            value,
            line: line_no,
            value_col,
        });
    }
    Ok(sections)
}

struct Section<'a> {
    raw: &'a RawSection,
}

impl<'a> Section<'a> {
    fn get(&self, key: &str) -> Option<&'a RawEntry> {
        self.raw.entries.iter().find(|e| e.key == key)
    }

    fn require(&self, key: &str) -> Result<&'a RawEntry> {
        self.get(key).ok_or_else(|| {
            Error::syntax(
                self.raw.line,
                1,
                format!("section [{}] is missing key `{key}`", self.raw.name),
            )
        })
    }

    fn check_keys(&self, allowed: &dyn Fn(&str) -> bool) -> Result<()> {
        for e in &self.raw.entries {
            if !allowed(&e.key) {
                return Err(Error::syntax(
                    e.line,
                    1,
                    format!("unknown key `{}` in section [{}]", e.key, self.raw.name),
                ));
            }
        }
        Ok(())
    }
}

fn parse_expr_entry(entry: &RawEntry) -> Result<Expr> {
    Expr::parse(&entry.value).map_err(|e| match e {
        Error::Syntax {
            column, message, ..
        } => Error::syntax(entry.line, entry.value_col + column - 1, message),
        other => other,
    })
}

fn parse_f64_entry(entry: &RawEntry) -> Result<f64> {
    entry.value.parse::<f64>().map_err(|_| {
        Error::syntax(
            entry.line,
            entry.value_col,
            format!("expected a real number, got `{}`", entry.value),
        )
    })
}

fn parse_usize_entry(entry: &RawEntry) -> Result<usize> {
    entry.value.parse::<usize>().map_err(|_| {
        Error::syntax(
            entry.line,
            entry.value_col,
            format!("expected a nonnegative integer, got `{}`", entry.value),
        )
    })
}

/// `(re, im), (re, im), ...`
fn parse_complex_list(entry: &RawEntry) -> Result<Vec<C64>> {
    let mut out = Vec::new();
    let text = &entry.value;
    let bad = |msg: &str| Error::syntax(entry.line, entry.value_col, msg.to_string());
    let mut rest = text.trim();
    while !rest.is_empty() {
        if !rest.starts_with('(') {
            return Err(bad("expected `(re, im)` pair"));
        }
        let close = rest.find(')').ok_or_else(|| bad("unterminated `(re, im)` pair"))?;
        let inner = &rest[1..close];
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(bad("each pair must hold exactly two numbers"));
        }
        let re = parts[0]
            .parse::<f64>()
            .map_err(|_| bad("invalid real part"))?;
        let im = parts[1]
            .parse::<f64>()
            .map_err(|_| bad("invalid imaginary part"))?;
        out.push(C64::new(re, im));
        rest = rest[close + 1..].trim_start();
        if let Some(stripped) = rest.strip_prefix(',') {
            rest = stripped.trim_start();
        } else if !rest.is_empty() {
            return Err(bad("pairs must be separated by commas"));
        }
    }
    if out.is_empty() {
        return Err(bad("expected at least one `(re, im)` pair"));
    }
    Ok(out)
}

fn parse_real_list(entry: &RawEntry) -> Result<Vec<f64>> {
    entry
        .value
        .split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| {
                Error::syntax(
                    entry.line,
                    entry.value_col,
                    format!("expected comma-separated reals, got `{}`", s.trim()),
                )
            })
        })
        .collect()
}

/// Validates an output format name; `UnsupportedFormat` otherwise.
pub fn parse_format(name: &str) -> Result<OutputFormat> {
    match name {
        "csv" => Ok(OutputFormat::Csv),
        "json" => Ok(OutputFormat::Json),
        other => Err(Error::UnsupportedFormat(other.to_string())),
    }
}

fn entry_key_index(key: &str, prefix: &str) -> Option<(usize, usize)> {
    let rest = key.strip_prefix(prefix)?;
    let mut it = rest.split('_');
    let i = it.next()?.parse::<usize>().ok()?;
    let j = it.next()?.parse::<usize>().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some((i, j))
}

fn parse_model(section: &Section) -> Result<ModelSection> {
    let is_entry_key =
        |k: &str| entry_key_index(k, "H_").is_some() || entry_key_index(k, "Lambda_").is_some();
    section.check_keys(&|k| matches!(k, "builtin" | "r" | "beta" | "dim") || is_entry_key(k))?;

    let builtin = section.get("builtin");
    let dim_entry = section.get("dim");
    if let Some(b) = builtin {
        if dim_entry.is_some() {
            return Err(Error::syntax(
                b.line,
                1,
                "`builtin` and `dim` cannot both be given",
            ));
        }
        if b.value != "am" {
            return Err(Error::syntax(
                b.line,
                b.value_col,
                format!("unknown builtin model `{}`", b.value),
            ));
        }
        let r = parse_expr_entry(section.require("r")?)?;
        let beta = parse_expr_entry(section.require("beta")?)?;
        let hamiltonian = am_hamiltonian_op(&r, &beta);
        let observable = parse_entry_matrix(section, "Lambda_", 2)?;
        return Ok(ModelSection {
            dim: 2,
            hamiltonian,
            observable,
            am: Some(AmExpressions { r, beta }),
        });
    }

    let dim_entry = dim_entry.ok_or_else(|| {
        Error::syntax(
            section.raw.line,
            1,
            "section [model] needs `builtin = am` or `dim = n`",
        )
    })?;
    let dim = parse_usize_entry(dim_entry)?;
    if dim == 0 {
        return Err(Error::syntax(
            dim_entry.line,
            dim_entry.value_col,
            "model dimension must be at least 1",
        ));
    }
    for e in &section.raw.entries {
        if matches!(e.key.as_str(), "r" | "beta") {
            return Err(Error::syntax(
                e.line,
                1,
                format!("key `{}` only applies to the builtin model", e.key),
            ));
        }
        if let Some((i, j)) = entry_key_index(&e.key, "H_") {
            if i >= dim || j >= dim {
                return Err(Error::syntax(
                    e.line,
                    1,
                    format!("entry `{}` outside a {dim}x{dim} matrix", e.key),
                ));
            }
        }
        if let Some((i, j)) = entry_key_index(&e.key, "Lambda_") {
            if i >= dim || j >= dim {
                return Err(Error::syntax(
                    e.line,
                    1,
                    format!("entry `{}` outside a {dim}x{dim} matrix", e.key),
                ));
            }
        }
    }
    let hamiltonian = parse_entry_matrix(section, "H_", dim)?
        .unwrap_or_else(|| TimeDependentOperator::constant(&ComplexMatrix::zeros(dim)));
    let observable = parse_entry_matrix(section, "Lambda_", dim)?;
    Ok(ModelSection {
        dim,
        hamiltonian,
        observable,
        am: None,
    })
}

/// Collects `prefix_i_j` entries into an operator; absent entries are zero.
/// Returns `None` when no entry with the prefix exists.
fn parse_entry_matrix(
    section: &Section,
    prefix: &str,
    dim: usize,
) -> Result<Option<TimeDependentOperator>> {
    let mut entries = vec![Expr::Number(0.0); dim * dim];
    let mut seen = false;
    for e in &section.raw.entries {
        if let Some((i, j)) = entry_key_index(&e.key, prefix) {
            seen = true;
            entries[i * dim + j] = parse_expr_entry(e)?;
        }
    }
    if !seen {
        return Ok(None);
    }
    Ok(Some(TimeDependentOperator::new(dim, entries)?))
}

fn parse_metric(section: &Section, model: &ModelSection) -> Result<MetricSection> {
    section.check_keys(&|k| matches!(k, "mode" | "Z" | "f" | "mu" | "coeffs" | "tol"))?;
    let mode = section.require("mode")?;
    let has = |k: &str| section.get(k).is_some();
    let conflict = |other: &str| {
        Err(Error::ConflictingMetricModes(format!(
            "mode `{}` conflicts with key `{other}`",
            mode.value
        )))
    };
    match mode.value.as_str() {
        "closed_form_Z" => {
            if has("mu") {
                return conflict("mu");
            }
            if has("coeffs") {
                return conflict("coeffs");
            }
            if model.am.is_none() {
                return Err(Error::syntax(
                    mode.line,
                    mode.value_col,
                    "closed_form_Z requires the builtin am model",
                ));
            }
            let z = parse_expr_entry(section.require("Z")?)?;
            let f = match section.get("f") {
                Some(e) => parse_expr_entry(e)?,
                None => Expr::Number(1.0),
            };
            Ok(MetricSection::ClosedFormZ { z, f })
        }
        "mu_series" => {
            if has("Z") {
                return conflict("Z");
            }
            if has("coeffs") {
                return conflict("coeffs");
            }
            let mu = parse_complex_list(section.require("mu")?)?;
            Ok(MetricSection::MuSeries { mu })
        }
        "nullspace_coeffs" => {
            if has("Z") {
                return conflict("Z");
            }
            if has("mu") {
                return conflict("mu");
            }
            let coeffs = parse_real_list(section.require("coeffs")?)?;
            let tol = match section.get("tol") {
                Some(e) => parse_f64_entry(e)?,
                None => 1e-10,
            };
            Ok(MetricSection::NullspaceCoeffs { coeffs, tol })
        }
        other => Err(Error::syntax(
            mode.line,
            mode.value_col,
            format!("unknown metric mode `{other}`"),
        )),
    }
}

fn parse_evolution(section: &Section, dim: usize) -> Result<EvolutionSection> {
    section.check_keys(&|k| {
        matches!(
            k,
            "t0" | "t1" | "steps" | "initial_ket" | "stepper" | "derivative_step"
                | "omega_derivative"
        )
    })?;
    let t0 = parse_f64_entry(section.require("t0")?)?;
    let t1 = parse_f64_entry(section.require("t1")?)?;
    let steps = parse_usize_entry(section.require("steps")?)?;
    let ket_entry = section.require("initial_ket")?;
    let initial_ket = parse_complex_list(ket_entry)?;
    if initial_ket.len() != dim {
        return Err(Error::syntax(
            ket_entry.line,
            ket_entry.value_col,
            format!(
                "initial ket has {} entries, the model has dimension {dim}",
                initial_ket.len()
            ),
        ));
    }
    if initial_ket.iter().all(|v| v.norm() == 0.0) {
        return Err(Error::syntax(
            ket_entry.line,
            ket_entry.value_col,
            "initial ket must be nonzero",
        ));
    }
    let stepper = match section.get("stepper") {
        Some(e) => match e.value.as_str() {
            "rk4" => Stepper::Rk4,
            other => {
                return Err(Error::syntax(
                    e.line,
                    e.value_col,
                    format!("unknown stepper `{other}`"),
                ))
            }
        },
        None => Stepper::Rk4,
    };
    let derivative_step = match section.get("derivative_step") {
        Some(e) => {
            let v = parse_f64_entry(e)?;
            if v <= 0.0 {
                return Err(Error::syntax(
                    e.line,
                    e.value_col,
                    "derivative_step must be positive",
                ));
            }
            Some(v)
        }
        None => None,
    };
    let derivative_mode = match section.get("omega_derivative") {
        Some(e) => match e.value.as_str() {
            "finite_difference" => DerivativeMode::FiniteDifference,
            "exact" => DerivativeMode::Exact,
            other => {
                return Err(Error::syntax(
                    e.line,
                    e.value_col,
                    format!("unknown omega_derivative mode `{other}`"),
                ))
            }
        },
        None => DerivativeMode::FiniteDifference,
    };
    Ok(EvolutionSection {
        t0,
        t1,
        steps,
        initial_ket,
        stepper,
        derivative_step,
        derivative_mode,
    })
}

fn parse_output(section: Option<&Section>, has_observable: bool) -> Result<OutputSection> {
    let Some(section) = section else {
        return Ok(OutputSection {
            path: None,
            format: OutputFormat::Csv,
            quantities: vec![Quantity::Norm, Quantity::GeneratorGap],
        });
    };
    section.check_keys(&|k| matches!(k, "path" | "format" | "quantities"))?;
    let path = section.get("path").map(|e| e.value.clone());
    let format = match section.get("format") {
        Some(e) => parse_format(&e.value)?,
        None => OutputFormat::Csv,
    };
    let quantities = match section.get("quantities") {
        Some(e) => {
            let mut out = Vec::new();
            for name in e.value.split(',').map(str::trim) {
                let q = match name {
                    "norm" => Quantity::Norm,
                    "generator_gap" => Quantity::GeneratorGap,
                    "expectation" => Quantity::Expectation,
                    "consistency" => Quantity::Consistency,
                    other => {
                        return Err(Error::syntax(
                            e.line,
                            e.value_col,
                            format!("unknown quantity `{other}`"),
                        ))
                    }
                };
                if !out.contains(&q) {
                    out.push(q);
                }
            }
            if out.contains(&Quantity::Expectation) && !has_observable {
                return Err(Error::syntax(
                    e.line,
                    e.value_col,
                    "quantity `expectation` needs Lambda entries in [model]",
                ));
            }
            out
        }
        None => vec![Quantity::Norm, Quantity::GeneratorGap],
    };
    Ok(OutputSection {
        path,
        format,
        quantities,
    })
}

fn parse_tolerances(section: Option<&Section>) -> Result<Tolerances> {
    let mut tol = Tolerances::default();
    let Some(section) = section else {
        return Ok(tol);
    };
    section.check_keys(&|k| matches!(k, "compatibility" | "reality" | "hermiticity"))?;
    if let Some(e) = section.get("compatibility") {
        tol.compatibility = parse_f64_entry(e)?;
    }
    if let Some(e) = section.get("reality") {
        tol.reality = parse_f64_entry(e)?;
    }
    if let Some(e) = section.get("hermiticity") {
        tol.hermiticity = parse_f64_entry(e)?;
    }
    Ok(tol)
}

/// Parses scenario text into a validated [`ScenarioFile`]. Every failure is a
/// positioned diagnostic; this function never panics on malformed input.
pub fn parse_scenario(text: &str) -> Result<ScenarioFile> {
    let raw = split_sections(text)?;
    for s in &raw {
        if !matches!(
            s.name.as_str(),
            "model" | "metric" | "evolution" | "output" | "tolerances"
        ) {
            return Err(Error::syntax(
                s.line,
                1,
                format!("unknown section [{}]", s.name),
            ));
        }
    }
    let mut duplicates = std::collections::HashSet::new();
    for s in &raw {
        if !duplicates.insert(s.name.clone()) {
            return Err(Error::syntax(
                s.line,
                1,
                format!("section [{}] appears twice", s.name),
            ));
        }
    }
    let find = |name: &str| raw.iter().find(|s| s.name == name).map(|raw| Section { raw });
    let model_section = find("model").ok_or_else(|| Error::MissingSection("model".into()))?;
    let metric_section = find("metric").ok_or_else(|| Error::MissingSection("metric".into()))?;
    let evolution_section =
        find("evolution").ok_or_else(|| Error::MissingSection("evolution".into()))?;

    let model = parse_model(&model_section)?;
    let metric = parse_metric(&metric_section, &model)?;
    let evolution = parse_evolution(&evolution_section, model.dim)?;
    let output = parse_output(find("output").as_ref(), model.observable.is_some())?;
    let tolerances = parse_tolerances(find("tolerances").as_ref())?;

    Ok(ScenarioFile {
        model,
        metric,
        evolution,
        output,
        tolerances,
    })
}

// ---------------------------------------------------------------------------
// running
// ---------------------------------------------------------------------------

/// Builds the executable scenario: resolves the metric mode into a concrete
/// `Omega(t)` and packages the integration controls.
pub fn build_scenario(sc: &ScenarioFile) -> std::result::Result<TimeDependentScenario, RunError> {
    let params = standard_bindings();
    let t0 = sc.evolution.t0;

    // model stage: the Hamiltonian must evaluate at the initial time
    sc.model
        .hamiltonian
        .evaluate(t0, &params)
        .map_err(at(Stage::Model))?;
    if let Some(obs) = &sc.model.observable {
        obs.evaluate(t0, &params).map_err(at(Stage::Model))?;
    }

    let omega = match &sc.metric {
        MetricSection::ClosedFormZ { z, f } => {
            let am = sc.model.am.as_ref().expect("validated at parse time");
            am_dyson_op(&am.r, &am.beta, z, f)
        }
        MetricSection::MuSeries { mu } => {
            let h0 = sc
                .model
                .hamiltonian
                .evaluate(t0, &params)
                .map_err(at(Stage::Model))?;
            let sys = biorthogonal_decompose(&h0, Tolerances::default().reality)
                .map_err(at(Stage::Metric))?;
            let mu = MuParameters::new(mu.clone()).map_err(at(Stage::Metric))?;
            let fac = omega_from_mu(&sys, &mu).map_err(at(Stage::Metric))?;
            TimeDependentOperator::constant(fac.omega())
        }
        MetricSection::NullspaceCoeffs { coeffs, tol } => {
            let h0 = sc
                .model
                .hamiltonian
                .evaluate(t0, &params)
                .map_err(at(Stage::Model))?;
            let family = solve_intertwining(&h0, *tol).map_err(at(Stage::Metric))?;
            let candidate = select_positive(&family, coeffs).map_err(at(Stage::Metric))?;
            let fac = cholesky_factor(&candidate).map_err(at(Stage::Metric))?;
            TimeDependentOperator::constant(fac.omega())
        }
    };

    let horizon = (sc.evolution.t1 - sc.evolution.t0).abs();
    let scenario = TimeDependentScenario {
        hamiltonian: sc.model.hamiltonian.clone(),
        observable: sc.model.observable.clone(),
        omega,
        t0: sc.evolution.t0,
        t1: sc.evolution.t1,
        steps: sc.evolution.steps,
        initial_ket: ndarray::Array1::from_vec(sc.evolution.initial_ket.clone()),
        derivative_step: sc
            .evolution
            .derivative_step
            .unwrap_or(1e-6 * horizon.max(1.0)),
        derivative_mode: sc.evolution.derivative_mode,
        stepper: sc.evolution.stepper,
        params,
        tolerances: sc.tolerances,
    };
    scenario.validate().map_err(at(Stage::Model))?;

    // metric stage: positivity at t0, then invertibility and compatibility
    // across the whole grid
    let theta0 = scenario.theta_at(t0).map_err(at(Stage::Metric))?;
    let certificate = crate::metric::positivity_certificate(&theta0).map_err(at(Stage::Metric))?;
    if !certificate.is_positive_definite() {
        return Err(RunError {
            stage: Stage::Metric,
            error: Error::NotPositiveDefinite {
                min_eigenvalue: certificate.min_eigenvalue(),
            },
        });
    }
    validate_scenario_grid(&scenario).map_err(at(Stage::Metric))?;
    Ok(scenario)
}

/// Runs the full pipeline and assembles the requested columns.
pub fn run_scenario(sc: &ScenarioFile) -> std::result::Result<ResultTable, RunError> {
    let scenario = build_scenario(sc)?;
    let stage = at(Stage::Evolution);
    let traj = evolve_doublet(&scenario).map_err(&stage)?;
    let times = traj.times().to_vec();
    let n = times.len();

    let mut columns = vec!["t".to_string()];
    let mut series: Vec<Vec<f64>> = Vec::new();

    for q in &sc.output.quantities {
        match q {
            Quantity::Norm => {
                columns.push("norm".into());
                series.push(traj.physical_norms().to_vec());
            }
            Quantity::GeneratorGap => {
                columns.push("generator_gap".into());
                let mut gaps = Vec::with_capacity(n);
                for &t in &times {
                    let g = generator(&scenario, t).map_err(&stage)?;
                    let h = scenario
                        .hamiltonian
                        .evaluate(t, &scenario.params)
                        .map_err(&stage)?;
                    gaps.push(g.max_abs_diff(&h));
                }
                series.push(gaps);
            }
            Quantity::Expectation => {
                columns.push("lambda_expectation".into());
                let exps = traj.expectations().ok_or_else(|| RunError {
                    stage: Stage::Evolution,
                    error: Error::Domain(
                        "expectation requested without an observable".into(),
                    ),
                })?;
                series.push(exps.to_vec());
            }
            Quantity::Consistency => {
                let ops = evolve_operators(&scenario).map_err(&stage)?;
                let u = evolve_textbook(&scenario).map_err(&stage)?;
                let theta0 = scenario.theta_at(scenario.t0).map_err(&stage)?;
                let (omega0, _) = scenario.omega_at(scenario.t0).map_err(&stage)?;
                let psi0 = &scenario.initial_ket;
                let mapped0 = omega0.mul_vec(psi0);
                let id = ComplexMatrix::identity(scenario.dim());

                let mut cons_ur = Vec::with_capacity(n);
                let mut cons_u = Vec::with_capacity(n);
                let mut cons_ur_u = Vec::with_capacity(n);
                let mut op_link = Vec::with_capacity(n);
                let mut unitarity = Vec::with_capacity(n);
                let mut kk_link = Vec::with_capacity(n);
                for k in 0..n {
                    let t = times[k];
                    let (omega_t, omega_inv_t) = scenario.omega_at(t).map_err(&stage)?;
                    let theta_t = omega_t.dagger().matmul(&omega_t);
                    let via_ur = ops.u_right()[k].mul_vec(psi0);
                    let via_u = omega_inv_t.mul_vec(&u.operators()[k].mul_vec(&mapped0));
                    cons_ur.push(crate::matrix::vec_max_abs_diff(&traj.kets()[k], &via_ur));
                    cons_u.push(crate::matrix::vec_max_abs_diff(&traj.kets()[k], &via_u));
                    cons_ur_u.push(crate::matrix::vec_max_abs_diff(&via_ur, &via_u));
                    op_link.push(
                        theta_t
                            .matmul(&ops.u_right()[k])
                            .max_abs_diff(&ops.u_left_dagger()[k].matmul(&theta0)),
                    );
                    unitarity.push(
                        u.operators()[k]
                            .dagger()
                            .matmul(&u.operators()[k])
                            .max_abs_diff(&id),
                    );
                    kk_link.push(crate::matrix::vec_max_abs_diff(
                        &theta_t.mul_vec(&traj.kets()[k]),
                        &traj.ketkets()[k],
                    ));
                }
                for (name, data) in [
                    ("cons_doublet_ur", cons_ur),
                    ("cons_doublet_u", cons_u),
                    ("cons_ur_u", cons_ur_u),
                    ("operator_link", op_link),
                    ("unitarity", unitarity),
                    ("ketket_link", kk_link),
                ] {
                    columns.push(name.into());
                    series.push(data);
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let mut row = Vec::with_capacity(columns.len());
        row.push(times[k]);
        for s in &series {
            row.push(s[k]);
        }
        rows.push(row);
    }
    Ok(ResultTable { columns, rows })
}

// ---------------------------------------------------------------------------
// emission
// ---------------------------------------------------------------------------

fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes a table. CSV: header row plus one line per node, 17 significant
/// digits, LF line endings. JSON: `{"columns": [...], "rows": [[...]]}` with
/// identical numeric text.
pub fn emit(table: &ResultTable, format: &str) -> Result<Vec<u8>> {
    match parse_format(format)? {
        OutputFormat::Csv => Ok(emit_csv(table)),
        OutputFormat::Json => Ok(emit_json(table)),
    }
}

fn emit_csv(table: &ResultTable) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

fn emit_json(table: &ResultTable) -> Vec<u8> {
    let mut out = String::from("{\"columns\":[");
    for (k, c) in table.columns.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        out.push('"');
        out.push_str(c);
        out.push('"');
    }
    out.push_str("],\"rows\":[");
    for (k, row) in table.rows.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        out.push('[');
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_value(*v));
        }
        out.push(']');
    }
    out.push_str("]}\n");
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[model]
builtin = am
r = 1
beta = 0

[metric]
mode = closed_form_Z
Z = pi/2

[evolution]
t0 = 0
t1 = 1
steps = 100
initial_ket = (1, 0), (0, 0)
";

    #[test]
    fn minimal_scenario_parses() {
        let sc = parse_scenario(MINIMAL).unwrap();
        assert_eq!(sc.model.dim, 2);
        assert!(sc.model.am.is_some());
        assert!(matches!(sc.metric, MetricSection::ClosedFormZ { .. }));
        assert_eq!(sc.evolution.steps, 100);
        assert_eq!(sc.output.format, OutputFormat::Csv);
    }

    #[test]
    fn malformed_expression_reports_file_position() {
        let text = MINIMAL.replace("r = 1", "r = 1 + * 2");
        match parse_scenario(&text) {
            Err(Error::Syntax { line, column, .. }) => {
                assert_eq!(line, 3);
                // `r = 1 + * 2`: the `*` sits at column 9
                assert_eq!(column, 9);
            }
            other => panic!("expected positioned syntax error, got {other:?}"),
        }
    }

    #[test]
    fn conflicting_metric_modes_are_rejected() {
        let text = MINIMAL.replace(
            "mode = closed_form_Z\nZ = pi/2",
            "mode = closed_form_Z\nZ = pi/2\nmu = (1, 0), (1, 0)",
        );
        assert!(matches!(
            parse_scenario(&text),
            Err(Error::ConflictingMetricModes(_))
        ));
        let text = MINIMAL.replace(
            "mode = closed_form_Z\nZ = pi/2",
            "mode = closed_form_Z\nmode = mu_series\nZ = pi/2",
        );
        assert!(matches!(
            parse_scenario(&text),
            Err(Error::ConflictingMetricModes(_))
        ));
    }

    #[test]
    fn missing_sections_are_reported() {
        let text = "[model]\nbuiltin = am\nr = 1\nbeta = 0\n";
        assert!(matches!(
            parse_scenario(text),
            Err(Error::MissingSection(name)) if name == "metric"
        ));
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let text = MINIMAL.replace("r = 1\n", "r = 1\nr = 2\n");
        assert!(matches!(parse_scenario(&text), Err(Error::Syntax { .. })));
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        let text = MINIMAL.replace("[metric]", "[metric]\nwibble = 3");
        assert!(matches!(parse_scenario(&text), Err(Error::Syntax { .. })));
        let text = format!("{MINIMAL}\n[plots]\nx = 1\n");
        assert!(matches!(parse_scenario(&text), Err(Error::Syntax { .. })));
    }

    #[test]
    fn unsupported_format_is_reported() {
        let text = format!("{MINIMAL}\n[output]\nformat = yaml\n");
        assert!(matches!(
            parse_scenario(&text),
            Err(Error::UnsupportedFormat(f)) if f == "yaml"
        ));
    }

    #[test]
    fn expectation_without_observable_is_rejected() {
        let text = format!("{MINIMAL}\n[output]\nquantities = norm, expectation\n");
        assert!(matches!(parse_scenario(&text), Err(Error::Syntax { .. })));
    }

    #[test]
    fn static_scenario_runs_with_vanishing_gap() {
        let table = run_scenario(&parse_scenario(MINIMAL).unwrap()).unwrap();
        assert_eq!(table.columns, vec!["t", "norm", "generator_gap"]);
        assert_eq!(table.rows.len(), 101);
        for row in &table.rows {
            assert!(row[2] < 1e-10, "static scenario gap {}", row[2]);
            assert!((row[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_closed_form_metric_fails_at_metric_stage() {
        let text = MINIMAL.replace("Z = pi/2", "Z = 0");
        let sc = parse_scenario(&text).unwrap();
        match run_scenario(&sc) {
            Err(RunError { stage, error }) => {
                assert_eq!(stage, Stage::Metric);
                assert!(
                    matches!(
                        error,
                        Error::NotPositiveDefinite { .. } | Error::SingularOmega { .. }
                    ),
                    "{error:?}"
                );
            }
            Ok(_) => panic!("Z = 0 must not run"),
        }
    }

    #[test]
    fn mu_series_mode_runs_on_static_model() {
        let text = MINIMAL.replace(
            "mode = closed_form_Z\nZ = pi/2",
            "mode = mu_series\nmu = (1, 0), (0.5, 0.5)",
        );
        let table = run_scenario(&parse_scenario(&text).unwrap()).unwrap();
        let n0 = table.rows[0][1];
        for row in &table.rows {
            assert!((row[1] - n0).abs() < 1e-8);
        }
    }

    #[test]
    fn nullspace_mode_runs_on_static_model() {
        // coefficients picked by projecting the closed-form metric are not
        // available from a file, so use the identity-direction combination:
        // for r = 1, beta = 0 the solver family contains diag-dominant
        // elements; equal weights give a positive metric.
        let text = MINIMAL.replace(
            "mode = closed_form_Z\nZ = pi/2",
            "mode = nullspace_coeffs\ncoeffs = 1.0, 1.0",
        );
        let sc = parse_scenario(&text).unwrap();
        match run_scenario(&sc) {
            Ok(table) => {
                let n0 = table.rows[0][1];
                for row in &table.rows {
                    assert!((row[1] - n0).abs() < 1e-8);
                }
            }
            Err(RunError { stage, error }) => {
                // an indefinite combination is a legitimate metric-stage
                // outcome for this blind coefficient choice
                assert_eq!(stage, Stage::Metric);
                assert!(matches!(error, Error::NotPositiveDefinite { .. }));
            }
        }
    }

    #[test]
    fn generic_model_entries_run() {
        let text = "\
[model]
dim = 2
H_0_0 = 1
H_1_1 = 2

[metric]
mode = mu_series
mu = (1, 0), (1, 0)

[evolution]
t0 = 0
t1 = 1
steps = 50
initial_ket = (1, 0), (1, 0)
";
        let table = run_scenario(&parse_scenario(text).unwrap()).unwrap();
        let n0 = table.rows[0][1];
        for row in &table.rows {
            assert!((row[1] - n0).abs() < 1e-9);
        }
    }

    #[test]
    fn emit_empty_table_is_header_only() {
        let table = ResultTable {
            columns: vec!["t".into(), "norm".into()],
            rows: vec![],
        };
        let bytes = emit(&table, "csv").unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), "t,norm\n");
    }

    #[test]
    fn emit_rejects_unknown_format() {
        let table = ResultTable {
            columns: vec!["t".into()],
            rows: vec![],
        };
        assert!(matches!(
            emit(&table, "parquet"),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn csv_and_json_agree_value_for_value() {
        let table = ResultTable {
            columns: vec!["t".into(), "norm".into()],
            rows: vec![vec![0.0, 1.0], vec![0.5, 1.0 + 1e-12], vec![1.0, 0.25]],
        };
        let csv = String::from_utf8(emit(&table, "csv").unwrap()).unwrap();
        let json = String::from_utf8(emit(&table, "json").unwrap()).unwrap();
        for row in &table.rows {
            for v in row {
                let cell = format!("{v:.16e}");
                assert!(csv.contains(&cell));
                assert!(json.contains(&cell));
            }
        }
    }

    #[test]
    fn scientific_notation_values_parse_in_entries() {
        let text = MINIMAL
            .replace("t1 = 1", "t1 = 1.5e0")
            .replace("steps = 100", "steps = 10");
        let sc = parse_scenario(&text).unwrap();
        assert!((sc.evolution.t1 - 1.5).abs() < 1e-15);
    }
}
