use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Lambert W branch {0} is undefined at z = 0")]
    BranchUndefined(i64),

    #[error("Lambert W derivative is singular at the branch point z = -1/e")]
    BranchPointSingularity,

    #[error("Halley iteration did not converge for z = {z} (branch {branch})")]
    LambertNoConvergence { z: Complex64, branch: i64 },

    #[error("spectrum is empty")]
    EmptySpectrum,

    #[error("eigenvalue {value} is not strictly stable (Re must be < -1e-12)")]
    NotHurwitz { value: Complex64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("internal invariant violated: {0}")]
    InvariantViolation(String),

    #[error("decay-rate estimate unreliable: {0}")]
    EstimationUnreliable(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("digraph is not strongly connected: node {node} is {reason}")]
    NotStronglyConnected { node: usize, reason: &'static str },

    #[error("digraph is not weight-balanced at node {node}: in-weight {in_weight}, out-weight {out_weight}")]
    NotWeightBalanced {
        node: usize,
        in_weight: f64,
        out_weight: f64,
    },

    #[error("delay {tau} is not admissible: the critical delay is {tau_bar}")]
    DelayNotAdmissible { tau: f64, tau_bar: f64 },
}

/// Coarse grouping used by the command-line exit-code contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
}

impl Error {
    /// Stable, machine-readable identifier of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::BranchUndefined(_) => "branch-undefined",
            Error::BranchPointSingularity => "branch-point",
            Error::LambertNoConvergence { .. } => "lambert-no-convergence",
            Error::EmptySpectrum => "empty-spectrum",
            Error::NotHurwitz { .. } => "not-hurwitz",
            Error::Validation(_) => "validation",
            Error::Domain(_) => "domain",
            Error::Precondition(_) => "precondition",
            Error::NumericalFailure(_) => "numerical-failure",
            Error::InvariantViolation(_) => "invariant-violation",
            Error::EstimationUnreliable(_) => "estimation-unreliable",
            Error::Parse(_) => "parse",
            Error::NotStronglyConnected { .. } => "not-strongly-connected",
            Error::NotWeightBalanced { .. } => "not-weight-balanced",
            Error::DelayNotAdmissible { .. } => "delay-not-admissible",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::LambertNoConvergence { .. }
            | Error::NumericalFailure(_)
            | Error::InvariantViolation(_)
            | Error::EstimationUnreliable(_) => ErrorClass::Numerical,
            _ => ErrorClass::Validation,
        }
    }
}
