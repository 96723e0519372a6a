use thiserror::Error;

/// Errors raised by the cost model, the schedule generator and the simulator.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("zero dimension: {0} must be at least 1")]
    ZeroDimension(&'static str),

    #[error("tile exceeds matrix: {name}={tile} is larger than {extent_name}={extent}")]
    TileExceedsMatrix {
        name: &'static str,
        tile: u64,
        extent_name: &'static str,
        extent: u64,
    },

    #[error("invalid psum window: {0}")]
    PsumWindowInvalid(String),

    #[error("not divisible: {extent_name}={extent} is not a multiple of {name}={tile} (strict mode)")]
    NotDivisible {
        name: &'static str,
        tile: u64,
        extent_name: &'static str,
        extent: u64,
    },

    #[error("scheme unresolved: {0} must be resolved to a concrete scheme first")]
    SchemeUnresolved(&'static str),

    #[error("the naive baseline has no tile schedule")]
    NaiveHasNoSchedule,

    #[error("division by zero: baseline total is 0")]
    DivisionByZero,

    #[error("insufficient psum capacity: need {required} elements, buffer holds {available}")]
    InsufficientPsumCapacity { required: u64, available: u64 },

    #[error("schedule invariant violated at step {step}: {reason}")]
    ScheduleInvariantViolated { step: u64, reason: String },

    #[error("problem too large for functional verification: {elems} elements (limit {limit})")]
    ProblemTooLarge { elems: u64, limit: u64 },

    #[error("empty workload")]
    EmptyWorkload,

    #[error("unknown model: {0}")]
    UnknownModel(String),

    #[error("too few policies: need at least 2, got {0}")]
    TooFewPolicies(usize),

    #[error("invalid energy parameters: {0}")]
    InvalidEnergyParams(String),
}

impl Error {
    /// True for errors that indicate a bug in this crate rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::ScheduleInvariantViolated { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
