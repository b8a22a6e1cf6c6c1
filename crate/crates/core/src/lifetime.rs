//! Component lifetime laws and their per-phase conditional quantities.
//!
//! Every law is handled through its cumulative hazard `H`, so that survival
//! over an interval is `exp(-(H(b) - H(a)))`. Working with hazard
//! differences keeps conditional probabilities accurate when survival is
//! close to one or when the unconditional survival is tiny.
//!
//! Phase arguments are 1-based and `tau` holds the boundaries
//! `[τ_1, …, τ_{N+1}]`.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};

/// Closed-form lifetime distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    Exponential { rate: f64 },
    Weibull { scale: f64, shape: f64 },
}

impl Law {
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            Law::Exponential { rate } => rate * t,
            Law::Weibull { scale, shape } => (t / scale).powf(shape),
        }
    }

    /// `H(b) - H(a)` for `0 <= a <= b`, without cancellation for the
    /// exponential.
    pub fn hazard_between(&self, a: f64, b: f64) -> f64 {
        match *self {
            Law::Exponential { rate } => rate * (b - a),
            Law::Weibull { .. } => self.cumulative_hazard(b) - self.cumulative_hazard(a),
        }
    }

    /// Smallest `t` with `H(t) = h`; `+∞` when the hazard never gets there.
    pub fn inverse_cumulative_hazard(&self, h: f64) -> f64 {
        match *self {
            Law::Exponential { rate } if rate > 0.0 => h / rate,
            Law::Exponential { .. } => f64::INFINITY,
            Law::Weibull { scale, shape } => scale * h.powf(1.0 / shape),
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        -(-self.cumulative_hazard(t)).exp_m1()
    }

    pub fn survival(&self, t: f64) -> f64 {
        (-self.cumulative_hazard(t)).exp()
    }

    fn check(&self) -> std::result::Result<(), String> {
        match *self {
            Law::Exponential { rate } if !(rate.is_finite() && rate >= 0.0) => Err(format!(
                "exponential rate must be finite and >= 0, got {rate}"
            )),
            Law::Weibull { scale, .. } if !(scale.is_finite() && scale > 0.0) => {
                Err(format!("weibull scale must be finite and > 0, got {scale}"))
            }
            Law::Weibull { shape, .. } if !(shape.is_finite() && shape > 0.0) => {
                Err(format!("weibull shape must be finite and > 0, got {shape}"))
            }
            _ => Ok(()),
        }
    }
}

/// Lifetime law of a physical type.
#[derive(Debug, Clone, PartialEq)]
pub enum LifetimeModel {
    /// One law on mission time; per-phase behaviour follows by conditioning
    /// on survival to the phase start.
    Global(Law),
    /// One law per phase, on local time `t - τ_i`, for components alive at
    /// the phase start.
    PhaseConditional(Vec<Law>),
    /// Constant hazard per phase. Zero means dormant in that phase.
    PhaseHazard(Vec<f64>),
}

/// Survival and failure probability of one phase, computed without
/// cancellation in either.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSurvival {
    pub survival: f64,
    pub failure: f64,
}

impl PhaseSurvival {
    fn from_hazard(h: f64) -> Self {
        PhaseSurvival {
            survival: (-h).exp(),
            failure: -(-h).exp_m1(),
        }
    }
}

impl LifetimeModel {
    /// True for exponential and piecewise-constant hazards.
    pub fn has_constant_hazard(&self) -> bool {
        matches!(
            self,
            LifetimeModel::Global(Law::Exponential { .. }) | LifetimeModel::PhaseHazard(_)
        )
    }

    /// True when the law in each phase is the same for every component
    /// alive at the phase start, whatever its history. Such types may use
    /// relaxed (late-entry) meta-types.
    pub fn is_history_free(&self) -> bool {
        self.has_constant_hazard() || matches!(self, LifetimeModel::PhaseConditional(_))
    }

    /// Parameter and shape check against a mission of `phases` phases.
    pub fn check(&self, phases: usize) -> std::result::Result<(), String> {
        match self {
            LifetimeModel::Global(law) => law.check(),
            LifetimeModel::PhaseConditional(laws) => {
                if laws.len() != phases {
                    return Err(format!(
                        "{} per-phase laws given for {phases} phases",
                        laws.len()
                    ));
                }
                laws.iter().try_for_each(Law::check)
            }
            LifetimeModel::PhaseHazard(rates) => {
                if rates.len() != phases {
                    return Err(format!(
                        "{} per-phase rates given for {phases} phases",
                        rates.len()
                    ));
                }
                match rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
                    Some(r) => Err(format!("hazard rate must be finite and >= 0, got {r}")),
                    None => Ok(()),
                }
            }
        }
    }

    /// Hazard accumulated in phase `phase` between its start and
    /// `min(t, τ_{i+1})`.
    pub fn phase_hazard(&self, phase: usize, tau: &[f64], t: f64) -> Result<f64> {
        let (start, end) = phase_window(phase, tau)?;
        if t < start {
            return Err(Error::BeforePhaseStart { t, start, phase });
        }
        let upto = t.min(end);
        match self {
            LifetimeModel::Global(law) => {
                let h0 = law.cumulative_hazard(start);
                if (-h0).exp() == 0.0 {
                    return Err(Error::UndefinedConditional { phase });
                }
                Ok(law.hazard_between(start, upto))
            }
            LifetimeModel::PhaseConditional(laws) => {
                let law = phase_param(laws, phase)?;
                Ok(law.cumulative_hazard(upto - start))
            }
            LifetimeModel::PhaseHazard(rates) => {
                let rate = *phase_param(rates, phase)?;
                Ok(rate * (upto - start))
            }
        }
    }

    /// Time inside phase `phase` at which the accumulated phase hazard reaches
    /// `h`. Callers guarantee `h` does not exceed the whole-phase hazard.
    fn phase_time_for_hazard(&self, phase: usize, tau: &[f64], h: f64) -> f64 {
        let (start, end) = (tau[phase - 1], tau[phase]);
        let t = match self {
            LifetimeModel::Global(law) => {
                law.inverse_cumulative_hazard(law.cumulative_hazard(start) + h)
            }
            LifetimeModel::PhaseConditional(laws) => {
                start + laws[phase - 1].inverse_cumulative_hazard(h)
            }
            LifetimeModel::PhaseHazard(rates) => start + h / rates[phase - 1],
        };
        t.clamp(start, end)
    }
}

fn phase_window(phase: usize, tau: &[f64]) -> Result<(f64, f64)> {
    let phases = tau.len().saturating_sub(1);
    if phase == 0 || phase > phases {
        return Err(Error::PhaseOutOfRange { phase, phases });
    }
    Ok((tau[phase - 1], tau[phase]))
}

fn phase_param<T>(params: &[T], phase: usize) -> Result<&T> {
    params.get(phase - 1).ok_or(Error::PhaseOutOfRange {
        phase,
        phases: params.len(),
    })
}

/// Conditional CDF `F_i(t)` of failing in phase `phase` by time `t`, given
/// survival to the phase start. Constant once `t` passes the phase end.
pub fn conditional_cdf(lm: &LifetimeModel, phase: usize, tau: &[f64], t: f64) -> Result<f64> {
    Ok(phase_survival(lm, phase, tau, t)?.failure)
}

/// Component reliability `R_i(t) = 1 - F_i(t)` within phase `phase`.
pub fn phase_reliability(lm: &LifetimeModel, phase: usize, tau: &[f64], t: f64) -> Result<f64> {
    Ok(phase_survival(lm, phase, tau, t)?.survival)
}

pub fn phase_survival(
    lm: &LifetimeModel,
    phase: usize,
    tau: &[f64],
    t: f64,
) -> Result<PhaseSurvival> {
    lm.phase_hazard(phase, tau, t)
        .map(PhaseSurvival::from_hazard)
}

/// Draws a failure time for a component exposed in every phase.
///
/// Global laws are sampled by inverse transform and may fail after the
/// mission end. Per-phase laws return `+∞` for a component that survives the
/// last phase.
pub fn sample_lifetime<R: Rng + ?Sized>(lm: &LifetimeModel, tau: &[f64], rng: &mut R) -> f64 {
    match lm {
        LifetimeModel::Global(law) => {
            let e: f64 = rng.sample(Exp1);
            law.inverse_cumulative_hazard(e)
        }
        _ => {
            let exposed = vec![true; tau.len().saturating_sub(1)];
            sample_lifetime_exposed(lm, tau, &exposed, rng)
        }
    }
}

/// Draws a failure time for a component that can only fail in the phases
/// flagged in `exposed`; `+∞` if it survives all of them.
///
/// One unit-exponential budget is spent phase by phase against the
/// accumulated hazard, which is sequential inverse-transform sampling of the
/// per-phase conditionals.
pub fn sample_lifetime_exposed<R: Rng + ?Sized>(
    lm: &LifetimeModel,
    tau: &[f64],
    exposed: &[bool],
    rng: &mut R,
) -> f64 {
    let mut budget: f64 = rng.sample(Exp1);
    for (i, &on) in exposed.iter().enumerate() {
        if !on {
            continue;
        }
        let phase = i + 1;
        let h = match lm.phase_hazard(phase, tau, tau[phase]) {
            Ok(h) => h,
            // Survival already zero: the component cannot live into this phase.
            Err(_) => return tau[phase - 1],
        };
        if budget <= h {
            return lm.phase_time_for_hazard(phase, tau, budget);
        }
        budget -= h;
    }
    f64::INFINITY
}
