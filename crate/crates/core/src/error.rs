use thiserror::Error;

use crate::dual::Violation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GsiError {
    #[error("degree {degree} exceeds the cap of {cap}")]
    DegreeCapExceeded { degree: usize, cap: usize },

    #[error("dilation factor must be nonzero")]
    ZeroDilation,

    #[error("malformed piecewise polynomial: {0}")]
    MalformedPoly(String),

    #[error("invalid truncation policy: {0}")]
    InvalidPolicy(String),

    #[error("systems do not share index set and steps: {0}")]
    MismatchedSystems(String),

    #[error("generator {label:?} carries a phase tag; duality needs phase-accurate generators")]
    PhaseTagged { label: Vec<i64> },

    #[error("test signal support meets the blind set near {point}")]
    NotInDenseClass { point: f64 },

    #[error("shell {shell} holds {count} points, more than the cap of {cap}")]
    UnboundedMultiplicity { shell: i64, count: usize, cap: usize },

    #[error("generator {label:?} has no active band")]
    EmptyActiveBands { label: Vec<i64> },

    #[error("dual setup is invalid: {} violation(s)", .0.len())]
    SetupInvalid(Vec<Violation>),

    #[error("partition of unity fails: residual {residual:.3e} at {at}")]
    PartitionViolation { residual: f64, at: f64 },

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("knot spacing violation: {0}")]
    KnotSpacingViolation(String),

    #[error("step {step} exceeds the admissible bound {bound}")]
    StepTooLarge { step: f64, bound: f64 },

    #[error("endpoint condition fails: {0}")]
    EndpointViolation(String),

    #[error("reflection identity fails: residual {residual:.3e}")]
    ReflectionViolation { residual: f64 },

    #[error("coefficient condition fails: {0}")]
    CoefficientViolation(String),
}

pub type Result<T> = std::result::Result<T, GsiError>;
