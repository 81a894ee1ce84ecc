use thiserror::Error;

/// Errors raised by the design, simulation and matrix routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:.3e})")]
    NotPositiveSemidefinite { eigenvalue: f64 },

    #[error("matrix is singular or numerically singular in {context}")]
    Singular { context: &'static str },

    #[error("non-finite entry in {context}")]
    NonFinite { context: &'static str },

    #[error("trace has imaginary residue {residue:.3e} in {context}")]
    ComplexResidue { context: &'static str, residue: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("unknown channel preset `{0}`")]
    UnknownPreset(String),

    #[error("relay power is not decreasing in the multiplier ({detail})")]
    NonMonotonePower { detail: String },

    #[error("could not bracket the relay power root after {doublings} doublings")]
    BracketFailure { doublings: usize },

    #[error("quadratic program is infeasible: constraint {index} has offset {offset:.6e} > 0")]
    Infeasible { index: usize, offset: f64 },

    #[error(
        "quadratic program has no strictly feasible point: constraint {index} vanishes at zero"
    )]
    NotStrictlyFeasible { index: usize },

    #[error(
        "dual ascent did not converge after {iterations} iterations (residual {residual:.3e})"
    )]
    DualNotConverged { iterations: usize, residual: f64 },

    #[error("objective increased from {previous:.12e} to {current:.12e} at iteration {iteration}")]
    NonMonotoneObjective {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dims(
    context: &'static str,
    expected: (usize, usize),
    got: (usize, usize),
) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected: format!("{}x{}", expected.0, expected.1),
            got: format!("{}x{}", got.0, got.1),
        })
    }
}
