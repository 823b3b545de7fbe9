use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("point measure mu[{0}] must be finite and positive")]
    NonPositiveMeasure(usize),

    #[error("omega set is empty")]
    EmptyOmega,

    #[error("self-loop rejected at vertex {0}")]
    SelfLoop(usize),

    #[error("index {index} out of range for {n} points")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("kernel weight for pair ({i}, {j}) must be finite and positive, got {w}")]
    InvalidWeight { i: usize, j: usize, w: f64 },

    #[error("conflicting weights for pair ({i}, {j}): {first} vs {second}")]
    ConflictingWeight {
        i: usize,
        j: usize,
        first: f64,
        second: f64,
    },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("state violates the Dirichlet constraint at point {index} (value {value})")]
    DirichletViolated { index: usize, value: f64 },

    #[error("Dirichlet mask set on interior point {0}")]
    InteriorDirichlet(usize),

    #[error("space has no coordinates")]
    MissingCoordinates,

    #[error("objective is unbounded below: {0}")]
    UnboundedBelow(String),

    #[error("solver did not converge after {sweeps} sweeps (residual {residual:e})")]
    NotConverged { sweeps: usize, residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("quadrature error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    QuadratureTolerance { estimate: f64, tolerance: f64 },

    #[error("energy inequality violated at step {step}: excess {excess:e}")]
    EnergyInequality { step: usize, excess: f64 },

    #[error("domination hypothesis fails at point {index}: {reason}")]
    DominationHypothesis { index: usize, reason: String },

    #[error("empty window: {0}")]
    EmptyWindow(String),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { what, expected, got });
    }
    Ok(())
}

pub(crate) fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}
