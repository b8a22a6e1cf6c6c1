//! Exact phase-indexed survival signatures and mission reliability for
//! phased mission systems.
//!
//! Typical use: build or parse a [`PhasedSystem`], derive its meta-types,
//! compute the [`SignatureFamily`], then evaluate `R(t)` with
//! [`system_reliability`] or a whole [`SurvivalCurve`]. The [`oracle`]
//! module simulates the same system for independent checks.
//!
//! ```
//! use phasesig::{
//!     compute_signature_family, derive_meta_types, fixtures, meta_type_lifetimes,
//!     system_reliability, EvalPoint,
//! };
//!
//! let sys = fixtures::example1();
//! let mta = derive_meta_types(&sys, false)?;
//! let fam = compute_signature_family(&sys, &mta)?;
//! let lms = meta_type_lifetimes(&sys, &mta)?;
//! let r = system_reliability(&sys, &fam, &lms, EvalPoint::interior(30.0))?;
//! assert!((r - 0.99501).abs() < 5e-6);
//! # Ok::<(), phasesig::Error>(())
//! ```

pub mod error;
pub mod fixtures;
pub mod lifetime;
pub mod model;
pub mod oracle;
pub mod reliability;
pub mod signature;
pub mod specfile;
pub mod structure;

pub use error::{Error, Result};
pub use lifetime::{conditional_cdf, phase_reliability, sample_lifetime, Law, LifetimeModel};
pub use model::{
    validate_system, Component, ComponentId, MetaType, MetaTypeAssignment, PhaseSpec, PhasedSystem,
    PhysicalType, StructureExpr, ValidationReport, Violation, Warning,
};
pub use oracle::{estimate_curve, simulate_mission, SimResult, Simulator};
pub use reliability::{
    boundary_jump, current_phase, curve_points, key_points, meta_type_lifetimes, reliability_curve,
    system_reliability, EvalPoint, GridSpec, Side, SurvivalCurve,
};
pub use signature::{
    brute_force_signature, compute_signature_family, signature_at, LevelVector, SignatureFamily,
    SignatureTable, SignatureValue,
};
pub use specfile::{emit_spec, parse_spec, parse_spec_str, SpecError, SpecOptions, SystemSpec};
pub use structure::{derive_meta_types, eval_mission, eval_phase, MissionTrajectory, PhaseState};
