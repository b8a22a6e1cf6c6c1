//! Command-line front end: parses a system spec, runs one analysis and writes
//! its tables and curves.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use phasesig::oracle::sim_results_csv;
use phasesig::{
    compute_signature_family, curve_points, derive_meta_types, estimate_curve, fixtures,
    meta_type_lifetimes, parse_spec, reliability_curve, system_reliability, validate_system,
    GridSpec, MetaTypeAssignment, SimResult, SpecError, SystemSpec,
};
use thiserror::Error;

pub const DEFAULT_TRIALS: u64 = 1_000_000;
pub const DEFAULT_GRID: GridSpec = GridSpec::Count(101);
/// Seed used by `verify` for its single rerun after too many misses.
const RERUN_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Check the system and print the report
    Validate,
    /// Write the exact signature tables
    Signature,
    /// Write the survival curve and its boundary jumps
    Reliability,
    /// Write Monte Carlo survival estimates
    Simulate,
    /// Compare the survival curve with Monte Carlo confidence intervals
    Verify,
}

#[derive(Debug, Parser)]
#[command(
    name = "phasesig",
    version,
    about = "Survival signatures and reliability of phased mission systems"
)]
pub struct Args {
    #[arg(long, value_enum)]
    pub command: Command,

    /// Spec file, or the name of a bundled example (example1, example2, example3)
    #[arg(long)]
    pub spec: String,

    /// Sample times: a count `N`, `step=X`, or a comma-separated list
    #[arg(long)]
    pub grid: Option<GridSpec>,

    #[arg(long)]
    pub trials: Option<u64>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Worker threads (defaults to one per core)
    #[arg(long)]
    pub threads: Option<usize>,

    /// Group late entrants with survivors of the same history-free type
    #[arg(long)]
    pub relax_exponential: bool,

    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Spec(#[from] SpecError),

    #[error("{0}")]
    Analysis(#[from] phasesig::Error),

    /// Invalid system whose report has already been printed.
    #[error("invalid system")]
    Reported,

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },

    #[error("{misses} point(s) outside the 99% interval, at most {allowed} allowed")]
    Verification { misses: usize, allowed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification { .. } => 2,
            _ => 1,
        }
    }
}

/// Reads a spec file, falling back to a bundled example of the same name.
pub fn load_spec(spec: &str) -> Result<SystemSpec, SpecError> {
    if !Path::new(spec).exists() {
        if let Some(s) = fixtures::spec(spec) {
            return Ok(s);
        }
    }
    parse_spec(spec)
}

struct Context {
    spec: SystemSpec,
    relax: bool,
    grid: GridSpec,
    trials: u64,
    seed: u64,
    out_dir: PathBuf,
}

impl Context {
    fn new(args: &Args, spec: SystemSpec) -> Self {
        let opts = &spec.options;
        Context {
            relax: args.relax_exponential || opts.relax_exponential,
            grid: args
                .grid
                .clone()
                .or_else(|| opts.grid.clone())
                .unwrap_or(DEFAULT_GRID),
            trials: args.trials.or(opts.trials).unwrap_or(DEFAULT_TRIALS),
            seed: args.seed.or(opts.seed).unwrap_or(0),
            out_dir: args.out_dir.clone(),
            spec,
        }
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.out_dir.join(name);
        std::fs::create_dir_all(&self.out_dir)
            .and_then(|_| std::fs::write(&path, contents))
            .map_err(|source| CliError::Write { path, source })
    }
}

fn describe_meta_types(mta: &MetaTypeAssignment) -> String {
    let mut out = String::new();
    for mt in &mta.metatypes {
        let members: Vec<&str> = mt.members.iter().map(|m| m.as_str()).collect();
        let phases: Vec<String> = mt.appearance.iter().map(|p| p.to_string()).collect();
        write!(
            out,
            "meta-type {}: {} [{}] in phases {}",
            mt.id,
            mt.physical,
            members.join(", "),
            phases.join(",")
        )
        .unwrap();
        if mt.exponential_relaxed {
            let entry: Vec<String> = mt
                .entrants
                .iter()
                .map(|(p, n)| format!("{n} in phase {p}"))
                .collect();
            write!(out, " (entrants: {})", entry.join(", ")).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Runs one command, printing a summary to `out`.
pub fn run(args: &Args, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = match load_spec(&args.spec) {
        Err(SpecError::Invalid(report)) if args.command == Command::Validate => {
            let _ = write!(out, "{report}");
            return Err(CliError::Reported);
        }
        other => other?,
    };
    let ctx = Context::new(args, spec);
    let sys = &ctx.spec.system;
    let mut text = String::new();

    match args.command {
        Command::Validate => {
            let mta = derive_meta_types(sys, ctx.relax)?;
            ctx.grid.times(sys.mission_end())?;
            write!(text, "{}", validate_system(sys)).unwrap();
            writeln!(
                text,
                "phases: {}, components: {}, physical types: {}",
                sys.phase_count(),
                sys.components().len(),
                sys.types().len()
            )
            .unwrap();
            text.push_str(&describe_meta_types(&mta));
        }
        Command::Signature => {
            let mta = derive_meta_types(sys, ctx.relax)?;
            let fam = compute_signature_family(sys, &mta)?;
            text.push_str(&describe_meta_types(&mta));
            for p in 1..=sys.phase_count() {
                let table = fam.table_text(p)?;
                ctx.write(&format!("phi_{p}.csv"), &fam.table_csv(p)?)?;
                ctx.write(&format!("phi_{p}.txt"), &table)?;
                writeln!(text, "\nPhase {p}\n{table}").unwrap();
            }
        }
        Command::Reliability => {
            let mta = derive_meta_types(sys, ctx.relax)?;
            let fam = compute_signature_family(sys, &mta)?;
            let lms = meta_type_lifetimes(sys, &mta)?;
            let curve = reliability_curve(sys, &fam, &lms, &ctx.grid)?;
            ctx.write("reliability.csv", &curve.to_csv())?;
            ctx.write("jumps.txt", &curve.jump_summary())?;
            let last = curve.samples.last().expect("curve ends at the mission end");
            writeln!(
                text,
                "{} points, R({}) = {:.8}",
                curve.samples.len(),
                last.point,
                last.r
            )
            .unwrap();
            text.push_str(&curve.jump_summary());
        }
        Command::Simulate => {
            let points = curve_points(sys, &ctx.grid)?;
            let sims = estimate_curve(sys, &points, ctx.trials, ctx.seed)?;
            ctx.write("simulation.csv", &sim_results_csv(&sims))?;
            let last = sims.last().expect("at least the mission end");
            writeln!(
                text,
                "{} points, {} trials, seed {}: R({}) ~ {:.6} +/- {:.2e}",
                sims.len(),
                ctx.trials,
                ctx.seed,
                last.point,
                last.estimate,
                last.half_width
            )
            .unwrap();
        }
        Command::Verify => return verify(&ctx, out),
    }
    out.write_all(text.as_bytes())
        .map_err(|source| CliError::Write {
            path: "<stdout>".into(),
            source,
        })
}

fn misses(sims: &[SimResult], analytic: &[f64]) -> usize {
    sims.iter()
        .zip(analytic)
        .filter(|(s, r)| !s.contains(**r))
        .count()
}

fn verify(ctx: &Context, out: &mut dyn Write) -> Result<(), CliError> {
    let sys = &ctx.spec.system;
    let mta = derive_meta_types(sys, ctx.relax)?;
    let fam = compute_signature_family(sys, &mta)?;
    let lms = meta_type_lifetimes(sys, &mta)?;
    let points = curve_points(sys, &ctx.grid)?;
    let analytic = points
        .iter()
        .map(|&pt| system_reliability(sys, &fam, &lms, pt))
        .collect::<Result<Vec<f64>, _>>()?;
    let allowed = (points.len() / 100).max(1);

    let mut seed = ctx.seed;
    let mut sims = estimate_curve(sys, &points, ctx.trials, seed)?;
    let mut text = String::new();
    let first = misses(&sims, &analytic);
    if first > allowed {
        seed ^= RERUN_MIX;
        writeln!(
            text,
            "seed {}: {first} miss(es), rerunning with seed {seed}",
            ctx.seed
        )
        .unwrap();
        sims = estimate_curve(sys, &points, ctx.trials, seed)?;
    }

    let mut csv = String::from("t,side,R,estimate,lower,upper,contained\n");
    for (s, r) in sims.iter().zip(&analytic) {
        let inside = s.contains(*r);
        writeln!(
            csv,
            "{:?},{},{:?},{:?},{:?},{:?},{inside}",
            s.point.t, s.point.side, r, s.estimate, s.lower, s.upper
        )
        .unwrap();
        writeln!(
            text,
            "{:>12}  R {r:.7}  MC {:.7}  [{:.7}, {:.7}]  {}",
            s.point.to_string(),
            s.estimate,
            s.lower,
            s.upper,
            if inside { "ok" } else { "MISS" }
        )
        .unwrap();
    }
    ctx.write("verify.csv", &csv)?;
    ctx.write("simulation.csv", &sim_results_csv(&sims))?;
    let missed = misses(&sims, &analytic);
    writeln!(
        text,
        "{missed} of {} points outside the 99% interval ({} trials, seed {seed}, {allowed} allowed)",
        points.len(),
        ctx.trials
    )
    .unwrap();
    out.write_all(text.as_bytes())
        .map_err(|source| CliError::Write {
            path: "<stdout>".into(),
            source,
        })?;
    if missed > allowed {
        return Err(CliError::Verification {
            misses: missed,
            allowed,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let verification = CliError::Verification {
            misses: 3,
            allowed: 1,
        };
        assert_eq!(verification.exit_code(), 2);
        assert_eq!(CliError::Reported.exit_code(), 1);
        assert_eq!(CliError::from(phasesig::Error::NoTrials).exit_code(), 1);
    }

    #[test]
    fn bundled_names_and_flag_precedence() {
        let args = Args::try_parse_from([
            "phasesig",
            "--command",
            "simulate",
            "--spec",
            "example1",
            "--seed",
            "9",
        ])
        .unwrap();
        let ctx = Context::new(&args, load_spec(&args.spec).unwrap());
        assert_eq!(ctx.seed, 9);
        assert_eq!(ctx.trials, 1_000_000);
        assert_eq!(ctx.grid, GridSpec::Step(1.0));
        assert!(!ctx.relax);
        assert!(matches!(load_spec("example4"), Err(SpecError::Io { .. })));
    }
}
