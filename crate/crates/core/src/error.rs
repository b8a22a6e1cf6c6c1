use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the analysis operations.
///
/// Structural problems with a system are reported by
/// [`validate_system`](crate::model::validate_system) as a report instead;
/// `InvalidSystem` only wraps such a report when an operation is handed a
/// system that did not pass validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("component `{component}` has no state in phase {phase}")]
    MissingAtom { component: String, phase: usize },

    #[error("phase {phase} state does not match the phase's component set: {detail}")]
    StateCoverage { phase: usize, detail: String },

    #[error(
        "inconsistent trajectory: component `{component}` failed in phase {failed_in} \
         but works in phase {works_in}"
    )]
    InconsistentTrajectory {
        component: String,
        failed_in: usize,
        works_in: usize,
    },

    #[error(
        "relaxed meta-types requested, but physical type `{physical}` has no \
         history-free lifetime law (constant hazard or per-phase law)"
    )]
    RelaxationNotExponential { physical: String },

    #[error("meta-type assignment does not fit the system: {0}")]
    AssignmentMismatch(String),

    #[error("infeasible level vector: {0}")]
    InfeasibleLevel(String),

    #[error("phase {phase} is outside 1..={phases}")]
    PhaseOutOfRange { phase: usize, phases: usize },

    #[error("brute-force enumeration needs {slots} component-phase slots (limit {limit})")]
    TooLarge { slots: usize, limit: usize },

    #[error("conditional law undefined in phase {phase}: survival at the phase start is zero")]
    UndefinedConditional { phase: usize },

    #[error("time {t} precedes the start {start} of phase {phase}")]
    BeforePhaseStart { t: f64, start: f64, phase: usize },

    #[error("time {t} lies outside the mission window [0, {end}]")]
    OutOfMission { t: f64, end: f64 },

    #[error("time {t} is a phase boundary; ask for its left or right limit")]
    AmbiguousBoundary { t: f64 },

    #[error("{side} limit is not defined at t = {t}")]
    UndefinedLimit { t: f64, side: &'static str },

    #[error("expected {expected} lifetime models, got {got}")]
    LifetimeCount { expected: usize, got: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("at least one trial is required")]
    NoTrials,

    #[error("malformed CSV: {0}")]
    MalformedCsv(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),
}
