//! Mission survival function `R(t)` from a signature family and lifetime
//! laws, with one-sided limits at phase boundaries.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lifetime::{phase_survival, LifetimeModel, PhaseSurvival};
use crate::model::{MetaTypeAssignment, PhasedSystem};
use crate::signature::{ratio_to_f64, signature_at, LevelVector, SignatureFamily};

/// Which value to take at `t`. One-sided limits away from a boundary equal
/// the value itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Interior,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Interior => "interior",
            Side::Right => "right",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Side::Left),
            "interior" => Ok(Side::Interior),
            "right" => Ok(Side::Right),
            other => Err(Error::MalformedCsv(format!("unknown side `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub t: f64,
    pub side: Side,
}

impl EvalPoint {
    pub fn interior(t: f64) -> Self {
        EvalPoint {
            t,
            side: Side::Interior,
        }
    }

    pub fn left(t: f64) -> Self {
        EvalPoint {
            t,
            side: Side::Left,
        }
    }

    pub fn right(t: f64) -> Self {
        EvalPoint {
            t,
            side: Side::Right,
        }
    }

    fn sort_key(&self) -> (f64, Side) {
        (self.t, self.side)
    }
}

/// `τ⁻`, `τ⁺` and plain `t` labels.
impl fmt::Display for EvalPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.side {
            Side::Left => write!(f, "{}-", self.t),
            Side::Interior => write!(f, "{}", self.t),
            Side::Right => write!(f, "{}+", self.t),
        }
    }
}

/// Current phase `ρ(t) = max{i : τ_i < t}`, with `ρ(0) = 1`. At an
/// interior boundary `τ_i` the left limit belongs to phase `i - 1` and the
/// right limit to phase `i`; a plain query there is ambiguous.
pub fn current_phase(tau: &[f64], t: f64, side: Side) -> Result<usize> {
    let n = tau.len().saturating_sub(1);
    let end = tau.last().copied().unwrap_or(0.0);
    if !(t >= 0.0 && t <= end) || n == 0 {
        return Err(Error::OutOfMission { t, end });
    }
    if t == 0.0 {
        return match side {
            Side::Left => Err(Error::UndefinedLimit { t, side: "left" }),
            _ => Ok(1),
        };
    }
    if t == end {
        return match side {
            Side::Right => Err(Error::UndefinedLimit { t, side: "right" }),
            _ => Ok(n),
        };
    }
    if let Some(i) = tau[1..n].iter().position(|&b| b == t).map(|p| p + 2) {
        return match side {
            Side::Left => Ok(i - 1),
            Side::Right => Ok(i),
            Side::Interior => Err(Error::AmbiguousBoundary { t }),
        };
    }
    Ok(tau.iter().rposition(|&b| b < t).map_or(1, |p| p + 1))
}

/// Lifetime law of each meta-type, from its physical type.
pub fn meta_type_lifetimes(
    sys: &PhasedSystem,
    mta: &MetaTypeAssignment,
) -> Result<Vec<LifetimeModel>> {
    mta.metatypes
        .iter()
        .map(|mt| {
            sys.physical_type(&mt.physical)
                .map(|t| t.lifetime.clone())
                .ok_or_else(|| {
                    Error::AssignmentMismatch(format!("unknown physical type `{}`", mt.physical))
                })
        })
        .collect()
}

/// Neumaier compensated sum.
#[derive(Debug, Default, Clone, Copy)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

fn binomial_f64(n: u32, k: u32) -> f64 {
    let mut acc: u64 = 1;
    for j in 0..k.min(n - k) as u64 {
        acc = acc * (n as u64 - j) / (j + 1);
    }
    acc as f64
}

fn binomial_term(m: u32, l: u32, s: &PhaseSurvival) -> f64 {
    binomial_f64(m, l) * s.survival.powi(l as i32) * s.failure.powi((m - l) as i32)
}

/// Per-slot survival quantities at `t` for the first `depth` phases.
struct Weights<'a> {
    fam: &'a SignatureFamily,
    depth: usize,
    slot_survival: Vec<PhaseSurvival>,
}

impl<'a> Weights<'a> {
    fn new(
        sys: &PhasedSystem,
        fam: &'a SignatureFamily,
        lms: &[LifetimeModel],
        depth: usize,
        t: f64,
    ) -> Result<Self> {
        let tau = sys.boundaries();
        let slot_survival = fam
            .layout
            .slots(depth)
            .iter()
            .map(|&(i, k)| phase_survival(&lms[k - 1], i, &tau, t))
            .collect::<Result<_>>()?;
        Ok(Weights {
            fam,
            depth,
            slot_survival,
        })
    }

    /// Probability of the level vector `l`.
    fn of(&self, l: &[u32]) -> f64 {
        let m = self
            .fam
            .layout
            .m_counts(self.depth, l)
            .expect("level vector from the same layout");
        m.iter()
            .zip(l)
            .zip(&self.slot_survival)
            .map(|((&m, &l), s)| binomial_term(m, l, s))
            .product()
    }
}

fn check_inputs(sys: &PhasedSystem, fam: &SignatureFamily, lms: &[LifetimeModel]) -> Result<()> {
    if fam.phases() != sys.phase_count() {
        return Err(Error::AssignmentMismatch(format!(
            "signature family has {} phases, system has {}",
            fam.phases(),
            sys.phase_count()
        )));
    }
    if lms.len() != fam.assignment.len() {
        return Err(Error::LifetimeCount {
            expected: fam.assignment.len(),
            got: lms.len(),
        });
    }
    Ok(())
}

/// `R(t)`: sum over stored level vectors of `Φ_ρ(l)` times the probability
/// of `l`, with completed phases frozen at their end.
pub fn system_reliability(
    sys: &PhasedSystem,
    fam: &SignatureFamily,
    lms: &[LifetimeModel],
    pt: EvalPoint,
) -> Result<f64> {
    check_inputs(sys, fam, lms)?;
    let rho = current_phase(&sys.boundaries(), pt.t, pt.side)?;
    let weights = Weights::new(sys, fam, lms, rho, pt.t)?;
    let mut acc = Compensated::default();
    for (l, v) in &fam.tables[rho - 1].entries {
        acc.add(v.to_f64() * weights.of(l.as_slice()));
    }
    // weights summing to one can round a hair past it
    Ok(acc.value().clamp(0.0, 1.0))
}

/// Total probability of all feasible level vectors at `pt`; one up to
/// rounding.
pub fn level_weight_total(
    sys: &PhasedSystem,
    fam: &SignatureFamily,
    lms: &[LifetimeModel],
    pt: EvalPoint,
) -> Result<f64> {
    check_inputs(sys, fam, lms)?;
    let rho = current_phase(&sys.boundaries(), pt.t, pt.side)?;
    let weights = Weights::new(sys, fam, lms, rho, pt.t)?;
    let mut acc = Compensated::default();
    for l in fam.layout.feasible_levels(rho) {
        acc.add(weights.of(l.as_slice()));
    }
    Ok(acc.value())
}

/// `R(t)` for a family with a single meta-type, as nested sums over
/// `l_1 ≥ l_2 ≥ …`, one phase at a time.
pub fn single_type_reliability(
    sys: &PhasedSystem,
    fam: &SignatureFamily,
    lm: &LifetimeModel,
    pt: EvalPoint,
) -> Result<f64> {
    check_inputs(sys, fam, std::slice::from_ref(lm))?;
    if fam.layout.metatypes() != 1 || fam.layout.present.iter().any(|p| !p[0]) {
        return Err(Error::AssignmentMismatch(
            "nested-sum evaluation needs one meta-type present in every phase".into(),
        ));
    }
    let tau = sys.boundaries();
    let rho = current_phase(&tau, pt.t, pt.side)?;
    let surv: Vec<PhaseSurvival> = (1..=rho)
        .map(|i| phase_survival(lm, i, &tau, pt.t))
        .collect::<Result<_>>()?;

    fn nest(
        fam: &SignatureFamily,
        surv: &[PhaseSurvival],
        rho: usize,
        prev: u32,
        levels: &mut Vec<u32>,
    ) -> Result<f64> {
        let i = levels.len();
        if i == rho {
            let phi = signature_at(fam, rho, &LevelVector(levels.clone()))?;
            return Ok(ratio_to_f64(&phi));
        }
        let m = prev + fam.layout.entrants[i][0];
        let mut acc = Compensated::default();
        for l in 0..=m {
            levels.push(l);
            let inner = nest(fam, surv, rho, l, levels)?;
            levels.pop();
            acc.add(binomial_term(m, l, &surv[i]) * inner);
        }
        Ok(acc.value())
    }
    nest(fam, &surv, rho, 0, &mut Vec::with_capacity(rho))
}

/// Drop `R(τ_i⁻) - R(τ_i⁺)` at the start of phase `phase` (`2 ≤ phase ≤ N`).
///
/// Computed as the probability of the level vectors that survive phase
/// `phase - 1` weighted by the exact loss `Φ_{i-1}(l) - Φ_i(l, all working)`,
/// so it is never negative.
pub fn boundary_jump(
    sys: &PhasedSystem,
    fam: &SignatureFamily,
    lms: &[LifetimeModel],
    phase: usize,
) -> Result<f64> {
    check_inputs(sys, fam, lms)?;
    let n = sys.phase_count();
    if phase < 2 || phase > n {
        return Err(Error::PhaseOutOfRange { phase, phases: n });
    }
    let t = sys.boundaries()[phase - 1];
    let weights = Weights::new(sys, fam, lms, phase - 1, t)?;
    let layout = &fam.layout;
    let mut acc = Compensated::default();
    for (l, v) in &fam.tables[phase - 2].entries {
        let mut alive = vec![0u32; layout.metatypes()];
        for (&(_, k), &lik) in layout.slots(phase - 1).iter().zip(l.as_slice()) {
            alive[k - 1] = lik;
        }
        let mut full = l.0.clone();
        let here = layout.present[phase - 1]
            .iter()
            .zip(&layout.entrants[phase - 1]);
        for (k, (_, &entering)) in here.enumerate().filter(|(_, (&on, _))| on) {
            full.push(alive[k] + entering);
        }
        let next = fam.tables[phase - 1]
            .entries
            .get(&LevelVector(full))
            .map(|v| v.ratio())
            .unwrap_or_else(BigRational::zero);
        let loss = v.ratio() - next;
        acc.add(ratio_to_f64(&loss) * weights.of(l.as_slice()));
    }
    Ok(acc.value())
}

/// Where to sample a curve.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// `n` equally spaced times from 0 to the mission end.
    Count(usize),
    /// Multiples of the step, plus the mission end.
    Step(f64),
    Points(Vec<f64>),
}

impl FromStr for GridSpec {
    type Err = Error;

    /// `N`, `step=X`, or a comma-separated list of times.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidGrid(format!("`{}` is not a number", x.trim())))
        };
        if let Some(step) = s.strip_prefix("step=") {
            return Ok(GridSpec::Step(num(step)?));
        }
        if !s.contains(',') {
            if let Ok(n) = s.parse::<usize>() {
                return Ok(GridSpec::Count(n));
            }
        }
        Ok(GridSpec::Points(
            s.split(',').map(num).collect::<Result<_>>()?,
        ))
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridSpec::Count(n) => write!(f, "{n}"),
            GridSpec::Step(x) => write!(f, "step={x:?}"),
            GridSpec::Points(ts) => {
                let parts: Vec<String> = ts.iter().map(|t| format!("{t:?}")).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

impl GridSpec {
    /// Sample times within `[0, end]`.
    pub fn times(&self, end: f64) -> Result<Vec<f64>> {
        let ts = match self {
            GridSpec::Count(0) => {
                return Err(Error::InvalidGrid("count must be at least 1".into()))
            }
            GridSpec::Count(1) => vec![0.0],
            GridSpec::Count(n) => (0..*n)
                .map(|j| {
                    if j + 1 == *n {
                        end
                    } else {
                        end * j as f64 / (*n - 1) as f64
                    }
                })
                .collect(),
            GridSpec::Step(x) if !(x.is_finite() && *x > 0.0) => {
                return Err(Error::InvalidGrid(format!(
                    "step must be positive, got {x}"
                )))
            }
            GridSpec::Step(x) => {
                let count = (end / x).floor() as usize;
                let mut ts: Vec<f64> = (0..=count)
                    .map(|j| j as f64 * x)
                    .filter(|&t| t < end)
                    .collect();
                ts.push(end);
                ts
            }
            GridSpec::Points(ts) => ts.clone(),
        };
        if let Some(&bad) = ts.iter().find(|&&t| !(t >= 0.0 && t <= end)) {
            return Err(Error::InvalidGrid(format!(
                "time {bad} is outside [0, {end}]"
            )));
        }
        Ok(ts)
    }
}

/// `0`, both limits at every interior boundary, and the mission end.
pub fn key_points(sys: &PhasedSystem) -> Vec<EvalPoint> {
    let tau = sys.boundaries();
    let mut pts = vec![EvalPoint::interior(0.0)];
    for &b in &tau[1..tau.len() - 1] {
        pts.push(EvalPoint::left(b));
        pts.push(EvalPoint::right(b));
    }
    pts.push(EvalPoint::interior(sys.mission_end()));
    pts
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub point: EvalPoint,
    pub r: f64,
    /// Jump at this time when it is a phase boundary.
    pub jump: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    /// Phase starting at `t`.
    pub phase: usize,
    pub t: f64,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub samples: Vec<CurveSample>,
    pub jumps: Vec<Jump>,
}

impl SurvivalCurve {
    /// CSV with columns `t, side, R, jump`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,side,R,jump\n");
        for s in &self.samples {
            let jump = s.jump.map(|j| format!("{j:?}")).unwrap_or_default();
            writeln!(out, "{:?},{},{:?},{jump}", s.point.t, s.point.side, s.r).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Vec<CurveSample>> {
        let mut lines = text.lines();
        if lines.next() != Some("t,side,R,jump") {
            return Err(Error::MalformedCsv(
                "expected header `t,side,R,jump`".into(),
            ));
        }
        let num = |x: &str| {
            x.parse::<f64>()
                .map_err(|_| Error::MalformedCsv(format!("`{x}` is not a number")))
        };
        lines
            .filter(|l| !l.is_empty())
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 4 {
                    return Err(Error::MalformedCsv(format!(
                        "expected 4 fields in `{line}`"
                    )));
                }
                Ok(CurveSample {
                    point: EvalPoint {
                        t: num(f[0])?,
                        side: f[1].parse()?,
                    },
                    r: num(f[2])?,
                    jump: if f[3].is_empty() {
                        None
                    } else {
                        Some(num(f[3])?)
                    },
                })
            })
            .collect()
    }

    /// One line per boundary.
    pub fn jump_summary(&self) -> String {
        let mut out = String::new();
        for j in &self.jumps {
            writeln!(
                out,
                "t = {:?} (start of phase {}): jump {:.6e}",
                j.t, j.phase, j.size
            )
            .unwrap();
        }
        out
    }
}

/// The grid times plus the [`key_points`], in time order. Grid times that
/// fall on a boundary are represented by its two limits.
pub fn curve_points(sys: &PhasedSystem, grid: &GridSpec) -> Result<Vec<EvalPoint>> {
    let tau = sys.boundaries();
    let inner = &tau[1..tau.len() - 1];
    let mut points = key_points(sys);
    for t in grid.times(sys.mission_end())? {
        if !inner.contains(&t) {
            points.push(EvalPoint::interior(t));
        }
    }
    points.sort_by(|a, b| {
        a.sort_key()
            .partial_cmp(&b.sort_key())
            .expect("finite times")
    });
    points.dedup();
    Ok(points)
}

/// Samples `R` at every [`curve_points`] entry.
pub fn reliability_curve(
    sys: &PhasedSystem,
    fam: &SignatureFamily,
    lms: &[LifetimeModel],
    grid: &GridSpec,
) -> Result<SurvivalCurve> {
    check_inputs(sys, fam, lms)?;
    let tau = sys.boundaries();
    let points = curve_points(sys, grid)?;

    let jumps = (2..=sys.phase_count())
        .map(|i| {
            Ok(Jump {
                phase: i,
                t: tau[i - 1],
                size: boundary_jump(sys, fam, lms, i)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let samples = points
        .par_iter()
        .map(|&pt| {
            Ok(CurveSample {
                point: pt,
                r: system_reliability(sys, fam, lms, pt)?,
                jump: (pt.side != Side::Interior)
                    .then(|| jumps.iter().find(|j| j.t == pt.t).map(|j| j.size))
                    .flatten(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurvivalCurve { samples, jumps })
}
