use thiserror::Error;

use crate::model::AgeSpaceField;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("diffusivity d({z}) = {value} is below the declared lower bound {lower}")]
    DiffusivityBelowBound { z: f64, value: f64, lower: f64 },

    #[error("coefficient {name}({z}, {a}) = {value} is negative or not finite")]
    NegativeCoefficient {
        name: &'static str,
        z: f64,
        a: f64,
        value: f64,
    },

    #[error("singular tridiagonal solve at age step {step}, row {row} (pivot {pivot})")]
    SingularSolve { step: usize, row: usize, pivot: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("no positive eigenvalue (spectral radius estimate {0:e})")]
    NoPositiveEigenvalue(f64),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    PerronNotConverged {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("Perron vector has a non-positive entry {value:e} at node {index}")]
    NonPositiveEigenvector { index: usize, value: f64 },

    #[error("birth modulus b(0, a) vanishes on the whole age grid")]
    ZeroBirthAtOrigin,

    #[error(
        "quasilinear march did not converge after {iterations} iterations \
         (last change {last_change:e}, contraction {contraction:.3})"
    )]
    MarchNotConverged {
        iterations: usize,
        last_change: f64,
        contraction: f64,
        last_iterates: Box<(AgeSpaceField, AgeSpaceField)>,
    },

    #[error("Newton corrector did not converge in {iterations} iterations (residual {residual:e})")]
    NewtonNotConverged { iterations: usize, residual: f64 },

    #[error("bordered system is singular (fold or defect), condition estimate {condition:e}")]
    SingularBorderedSystem { condition: f64 },

    #[error("linearized density coupling is singular")]
    SingularLinearization,

    #[error("bifurcation point is not simple (pairing {pairing:e}, gap {gap:e})")]
    NotSimple { pairing: f64, gap: f64 },

    #[error("positivity violated: minimum entry {min:e}")]
    PositivityViolation { min: f64 },

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
