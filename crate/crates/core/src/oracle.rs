//! Monte Carlo mission simulator used to check analytic results.
//!
//! Each trial draws one failure time per component and replays the mission:
//! the system can only change state at a phase start or at a component
//! failure, so those are the only instants checked.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lifetime::{sample_lifetime_exposed, LifetimeModel};
use crate::model::{validate_system, PhasedSystem};
use crate::reliability::{EvalPoint, Side};
use crate::structure::{compile_phases, presence_masks, Compiled};

/// Trials per random stream. Fixed so results depend only on the seed and
/// the trial count, not on scheduling.
pub const BLOCK_TRIALS: u64 = 1 << 16;

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_900_4;

/// Pre-processed system for repeated simulation.
#[derive(Debug, Clone)]
pub struct Simulator {
    tau: Vec<f64>,
    phases: Vec<Compiled>,
    presence: Vec<u64>,
    lifetimes: Vec<LifetimeModel>,
    /// `exposure[c][i]`: component `c` can fail during phase `i + 1`.
    exposure: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissionFailure {
    pub time: f64,
    pub phase: usize,
    /// Failed on entering the phase rather than during it.
    pub at_phase_start: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionDraw {
    pub failure_times: Vec<f64>,
    pub mission_failure: Option<MissionFailure>,
}

impl MissionDraw {
    /// Whether the mission is still working at `pt`. A failure on entering
    /// phase `i` happens just after `τ_i`, so the left limit there survives.
    pub fn survives(&self, pt: EvalPoint) -> bool {
        match self.mission_failure {
            None => true,
            Some(f) => match pt.side {
                Side::Left => f.time >= pt.t,
                Side::Interior | Side::Right => f.time > pt.t,
            },
        }
    }
}

impl Simulator {
    pub fn new(sys: &PhasedSystem) -> Result<Self> {
        validate_system(sys).into_result()?;
        let presence = sys.presence_matrix();
        let exposure = (0..sys.components().len())
            .map(|c| presence.iter().map(|row| row[c]).collect())
            .collect();
        Ok(Simulator {
            tau: sys.boundaries(),
            phases: compile_phases(sys),
            presence: presence_masks(sys),
            lifetimes: sys.component_lifetimes(),
            exposure,
        })
    }

    /// Replays the mission for given component failure times (declaration
    /// order; `+∞` for never).
    pub fn mission_outcome(&self, failure_times: Vec<f64>) -> MissionDraw {
        let up_at = |u: f64| {
            failure_times
                .iter()
                .enumerate()
                .filter(|(_, &f)| f > u)
                .fold(0u64, |m, (c, _)| m | 1 << c)
        };
        let mut failure = None;
        'phases: for (i, phi) in self.phases.iter().enumerate() {
            let (start, end) = (self.tau[i], self.tau[i + 1]);
            if !phi.eval(up_at(start) & self.presence[i]) {
                failure = Some(MissionFailure {
                    time: start,
                    phase: i + 1,
                    at_phase_start: true,
                });
                break;
            }
            let mut events: Vec<f64> = failure_times
                .iter()
                .enumerate()
                .filter(|&(c, &f)| self.presence[i] >> c & 1 == 1 && f > start && f <= end)
                .map(|(_, &f)| f)
                .collect();
            events.sort_by(f64::total_cmp);
            for u in events {
                if !phi.eval(up_at(u) & self.presence[i]) {
                    failure = Some(MissionFailure {
                        time: u,
                        phase: i + 1,
                        at_phase_start: false,
                    });
                    break 'phases;
                }
            }
        }
        MissionDraw {
            failure_times,
            mission_failure: failure,
        }
    }
}

/// One trial: a failure time per component, then the mission replay.
pub fn simulate_mission<R: Rng + ?Sized>(sim: &Simulator, rng: &mut R) -> MissionDraw {
    let times = sim
        .lifetimes
        .iter()
        .zip(&sim.exposure)
        .map(|(lm, exposed)| sample_lifetime_exposed(lm, &sim.tau, exposed, rng))
        .collect();
    sim.mission_outcome(times)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimResult {
    pub point: EvalPoint,
    pub survived: u64,
    pub trials: u64,
    pub estimate: f64,
    /// 99% Wilson score interval.
    pub lower: f64,
    pub upper: f64,
    pub half_width: f64,
}

impl SimResult {
    fn new(point: EvalPoint, survived: u64, trials: u64) -> Self {
        let n = trials as f64;
        let p = survived as f64 / n;
        let z2 = Z99 * Z99;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half_width = Z99 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        SimResult {
            point,
            survived,
            trials,
            estimate: p,
            // the exact interval always contains p; keep rounding from
            // pushing an edge past it
            lower: (center - half_width).clamp(0.0, p),
            upper: (center + half_width).clamp(p, 1.0),
            half_width,
        }
    }

    pub fn contains(&self, r: f64) -> bool {
        self.lower <= r && r <= self.upper
    }
}

/// Survival frequencies at every point from the same simulated missions.
pub fn estimate_curve(
    sys: &PhasedSystem,
    points: &[EvalPoint],
    trials: u64,
    seed: u64,
) -> Result<Vec<SimResult>> {
    if trials == 0 {
        return Err(Error::NoTrials);
    }
    let tau = sys.boundaries();
    for pt in points {
        crate::reliability::current_phase(&tau, pt.t, pt.side)?;
    }
    let sim = Simulator::new(sys)?;
    let blocks = trials.div_ceil(BLOCK_TRIALS);
    let counts = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let n = BLOCK_TRIALS.min(trials - b * BLOCK_TRIALS);
            let mut counts = vec![0u64; points.len()];
            for _ in 0..n {
                let draw = simulate_mission(&sim, &mut rng);
                if draw.mission_failure.is_none() {
                    counts.iter_mut().for_each(|c| *c += 1);
                    continue;
                }
                for (c, pt) in counts.iter_mut().zip(points) {
                    *c += draw.survives(*pt) as u64;
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; points.len()],
            |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        );
    Ok(points
        .iter()
        .zip(counts)
        .map(|(&pt, s)| SimResult::new(pt, s, trials))
        .collect())
}

/// CSV with columns `t, side, survived, trials, estimate, lower, upper,
/// half_width`.
pub fn sim_results_csv(results: &[SimResult]) -> String {
    let mut out = String::from("t,side,survived,trials,estimate,lower,upper,half_width\n");
    for r in results {
        writeln!(
            out,
            "{:?},{},{},{},{:?},{:?},{:?},{:?}",
            r.point.t,
            r.point.side,
            r.survived,
            r.trials,
            r.estimate,
            r.lower,
            r.upper,
            r.half_width
        )
        .unwrap();
    }
    out
}
