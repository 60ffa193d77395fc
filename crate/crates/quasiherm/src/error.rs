//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:.6e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is not Hermitian: deviation {deviation:.6e} exceeds tolerance {tol:.6e}")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("spectrum is not real: |Im E| = {imag:.6e} exceeds tolerance {tol:.6e}")]
    ComplexSpectrum { imag: f64, tol: f64 },

    #[error("degenerate spectrum: eigenvalue gap {gap:.6e} below tolerance {tol:.6e}")]
    DegenerateSpectrum { gap: f64, tol: f64 },

    #[error("defective matrix: eigenvector basis is numerically singular")]
    DefectiveMatrix,

    #[error("degenerate observable: a = d leaves the metric angle undetermined")]
    DegenerateObservable,

    #[error("arccos argument {0} lies outside [-1, 1]: no compatible metric in the closed-form family")]
    OutOfRange(f64),

    #[error("mapping operator is singular at t = {t}")]
    SingularOmega { t: f64 },

    #[error("metric is incompatible with the Hamiltonian at t = {t}: residual {residual:.6e} exceeds tolerance {tol:.6e}")]
    IncompatibleMetric { t: f64, residual: f64, tol: f64 },

    #[error("pushforward is not Hermitian at t = {t}: deviation {deviation:.6e} exceeds tolerance {tol:.6e}")]
    NonHermitianPushforward { t: f64, deviation: f64, tol: f64 },

    #[error("step size underflow: {0}")]
    StepSizeUnderflow(String),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("missing section [{0}]")]
    MissingSection(String),

    #[error("conflicting metric modes: {0}")]
    ConflictingMetricModes(String),

    #[error("unsupported format `{0}`")]
    UnsupportedFormat(String),

    #[error("linear algebra backend error: {0}")]
    Backend(String),
}

impl Error {
    pub(crate) fn syntax(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Syntax {
            line,
            column,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
