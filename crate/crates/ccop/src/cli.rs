//! Command-line interface.
//!
//! Four subcommands share one pipeline: `analyze` locates and classifies
//! every M-stationary point; `morse` adds the level sweep and the
//! mountain-pass record (requires `compact_feasible = true`); `perturb`
//! re-solves a family of linearly perturbed problems and tabulates
//! bifurcations; `probe` samples random linear perturbations and reports the
//! fraction classified nondegenerate.
//!
//! Exit codes: 0 success; 2 input error (unreadable file, parse failure,
//! malformed flag values); 3 numerical indeterminacy (a tolerance-band
//! verdict, a coincident crossing, or a degenerate point where the analysis
//! needs nondegeneracy — the report is still written); 4 missing
//! compactness assertion for `morse`. Reports for identical inputs are
//! byte-identical across runs and thread counts.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::classify::{self, Classification, SoscStatus, SsStatus, ThreeValued};
use crate::expr::ExprError;
use crate::model::{Problem, Tolerances};
use crate::morse::{self, MorseError, SweepPoint};
use crate::report::{self, ConfigEcho, MorseSection, PointReport, Report};
use crate::stationarity::{self, PerturbSpec, SolveConfig};
use crate::Error;

#[derive(Parser, Debug)]
#[command(
    name = "ccop",
    version,
    about = "Locate, certify, and classify the stationary points of cardinality-constrained problems"
)]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Find all M-stationary points and classify each one.
    Analyze(AnalyzeArgs),
    /// Level-set component counts, transition rules, and the mountain-pass
    /// inequality (requires compact_feasible = true in the problem file).
    Morse(MorseArgs),
    /// Re-solve under linear perturbations of the objective and tabulate
    /// how the stationary points move and split.
    Perturb(PerturbArgs),
    /// Randomly perturb the objective and report how often every stationary
    /// point is nondegenerate.
    Probe(ProbeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args, Debug)]
struct Common {
    /// Problem file (TOML).
    problem: PathBuf,
    /// Tolerance; sets the main, zero-coordinate, and active-constraint
    /// thresholds uniformly.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Newton seeds per activity system.
    #[arg(long, default_value_t = 64)]
    seeds: usize,
    /// Seed for every random stream (Newton seed offsets, sampling).
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Directions sampled per cone piece in the second-order checks.
    #[arg(long, default_value_t = classify::DEFAULT_SOSC_SAMPLES)]
    sosc_samples: usize,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct MorseArgs {
    #[command(flatten)]
    common: Common,
    /// Grid nodes per axis for the level-set scans (odd values keep 0 on
    /// the grid of a symmetric box).
    #[arg(long, default_value_t = 201)]
    grid: usize,
    /// "auto" (bracket every stationary value) or a comma-separated list.
    #[arg(long, default_value = "auto")]
    levels: String,
}

#[derive(Args, Debug)]
struct PerturbArgs {
    #[command(flatten)]
    common: Common,
    /// Linear perturbation direction, comma-separated (length n).
    #[arg(long)]
    linear: String,
    /// Epsilon values to sweep, comma-separated.
    #[arg(long)]
    epsilons: String,
    /// Optional shift vector: perturbs through f(x - eps*d) instead.
    #[arg(long)]
    shift: Option<String>,
    /// Bifurcation radius; default is half the minimum pairwise distance of
    /// the unperturbed points.
    #[arg(long)]
    radius: Option<f64>,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    #[command(flatten)]
    common: Common,
    /// Number of random perturbation trials.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Amplitude of the random linear perturbations.
    #[arg(long, default_value_t = 0.01)]
    magnitude: f64,
}

/// Parses argv and runs; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout (exit 0) and usage errors
            // on stderr (exit 2, matching the documented input-error code).
            let _ = e.print();
            return if e.exit_code() == 0 { 0 } else { 2 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            error_code(&err)
        }
    }
}

fn error_code(err: &Error) -> i32 {
    match err {
        Error::Model(_) | Error::Invalid(_) => 2,
        Error::Expr(ExprError::Parse { .. }) | Error::Expr(ExprError::VarOutOfRange { .. }) => 2,
        Error::Expr(ExprError::Eval { .. }) => 3,
        Error::Morse(MorseError::NotCompact) => 4,
        Error::Morse(MorseError::DimensionTooLarge { .. })
        | Error::Morse(MorseError::GridTooSmall { .. })
        | Error::Morse(MorseError::GridTooLarge { .. })
        | Error::Morse(MorseError::InvalidLevels(_)) => 2,
        Error::Morse(_) => 3,
        Error::Linalg(_) => 3,
    }
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    match cli.cmd {
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Morse(a) => cmd_morse(a),
        Cmd::Perturb(a) => cmd_perturb(a),
        Cmd::Probe(a) => cmd_probe(a),
    }
}

/// Options for the in-process analysis pipeline; what the CLI flags set,
/// minus output concerns. Also the embedding surface for other front ends.
#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub tol: f64,
    pub seeds: usize,
    pub rng_seed: u64,
    pub sosc_samples: usize,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            tol: 1e-8,
            seeds: 64,
            rng_seed: 0,
            sosc_samples: classify::DEFAULT_SOSC_SAMPLES,
        }
    }
}

impl Common {
    fn options(&self) -> AnalyzeOptions {
        AnalyzeOptions {
            tol: self.tol,
            seeds: self.seeds,
            rng_seed: self.rng_seed,
            sosc_samples: self.sosc_samples,
        }
    }
}

/// Loads, solves, and classifies a problem file, returning the assembled
/// report and the exit code the CLI would use (0 clean, 3 when any verdict
/// is indeterminate).
pub fn analyze_file(path: &Path, opts: &AnalyzeOptions) -> Result<(Report, i32), Error> {
    let pl = run_pipeline(path, opts)?;
    let report = assemble(opts, &pl);
    let code = if has_indeterminate(&pl.classifications) {
        3
    } else {
        0
    };
    Ok((report, code))
}

struct Pipeline {
    problem: Problem,
    tols: Tolerances,
    solve_cfg: SolveConfig,
    classifications: Vec<Classification>,
    point_reports: Vec<PointReport>,
    notes: Vec<String>,
}

fn run_pipeline(path: &Path, opts: &AnalyzeOptions) -> Result<Pipeline, Error> {
    let problem = Problem::load(path)?;
    let tols = Tolerances::uniform(opts.tol);
    let solve_cfg = SolveConfig {
        seeds_per_system: opts.seeds,
        rng_seed: opts.rng_seed,
        ..SolveConfig::default()
    };
    let solved = stationarity::solve_all(&problem, &solve_cfg, &tols)?;
    let mut classifications = Vec::with_capacity(solved.points.len());
    let mut point_reports = Vec::with_capacity(solved.points.len());
    let mut notes = Vec::new();
    for (i, pair) in solved.points.iter().enumerate() {
        let cls = classify::classify_point(&problem, pair, &tols, opts.sosc_samples)?;
        point_reports.push(report::point_report(&problem, pair, &cls, &tols)?);
        // A support-deficient point can carry a strictly positive quadratic
        // form on its critical cone and still fail to be a local minimizer;
        // record the measured minimum so the two facts sit side by side.
        if cls.nd.nondegenerate == ThreeValued::Holds
            && cls.nd.m_index.is_some_and(|m| m >= 1)
            && cls.sosc_critical.min_value.is_some_and(|v| v > 0.0)
        {
            notes.push(format!(
                "point {}: the quadratic form on the critical cone has sampled minimum \
                 {:.6e} over unit directions — it does not vanish anywhere on the cone — \
                 yet the M-index is {}, so the point is not a local minimizer; positivity \
                 of this form certifies nothing when the support is deficient (k < s)",
                i + 1,
                cls.sosc_critical.min_value.unwrap_or(f64::NAN),
                cls.nd.m_index.unwrap_or(usize::MAX),
            ));
        }
        classifications.push(cls);
    }
    Ok(Pipeline {
        problem,
        tols,
        solve_cfg,
        classifications,
        point_reports,
        notes,
    })
}

fn config_echo(opts: &AnalyzeOptions, tols: &Tolerances) -> ConfigEcho {
    ConfigEcho {
        tol_main: tols.main,
        tol_zero: tols.zero,
        tol_act: tols.act,
        seeds_per_system: opts.seeds,
        rng_seed: opts.rng_seed,
        sosc_samples: opts.sosc_samples,
        grid_per_axis: None,
        levels: None,
    }
}

fn assemble(opts: &AnalyzeOptions, pl: &Pipeline) -> Report {
    Report {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        problem_echo: pl.problem.canonical_echo(),
        config: config_echo(opts, &pl.tols),
        points: pl.point_reports.clone(),
        morse: None,
        perturb: None,
        probe: None,
        notes: pl.notes.clone(),
    }
}

/// True when any verdict landed in a tolerance band: classification fields,
/// strong stability, the minimizer test, either second-order check.
fn has_indeterminate(cls: &[Classification]) -> bool {
    cls.iter().any(|c| {
        [c.nd.nd1, c.nd.nd2, c.nd.nd3, c.nd.nd4].contains(&ThreeValued::Indeterminate)
            || c.strong_stability.status == SsStatus::Indeterminate
            || c.ss_minimizer.status == classify::SsMinimizerStatus::Indeterminate
            || c.sosc_critical.status == SoscStatus::Indeterminate
            || c.sosc_tangent.status == SoscStatus::Indeterminate
    })
}

fn emit(common: &Common, report: &Report) -> Result<(), Error> {
    let rendered = match common.format {
        Format::Json => report::to_json(report),
        Format::Text => report::to_text(report),
    };
    match &common.out {
        Some(path) => std::fs::write(path, rendered).map_err(|e| {
            Error::Invalid(format!("cannot write {}: {e}", path.display()))
        })?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(rendered.as_bytes())
                .map_err(|e| Error::Invalid(format!("cannot write to stdout: {e}")))?;
        }
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<i32, Error> {
    let (report, code) = analyze_file(&args.common.problem, &args.common.options())?;
    emit(&args.common, &report)?;
    Ok(code)
}

fn parse_vec(text: &str, what: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Invalid(format!("{what}: cannot parse `{t}` as a number")))
        })
        .collect()
}

fn cmd_morse(args: MorseArgs) -> Result<i32, Error> {
    let levels = match args.levels.trim() {
        "auto" => None,
        list => Some(parse_vec(list, "--levels")?),
    };
    // Check the compactness assertion before doing any heavy work.
    let problem = Problem::load(&args.common.problem)?;
    if !problem.compact_feasible() {
        return Err(MorseError::NotCompact.into());
    }
    let pl = run_pipeline(&args.common.problem, &args.common.options())?;
    let mut report = assemble(&args.common.options(), &pl);
    report.config.grid_per_axis = Some(args.grid);
    report.config.levels = levels.clone();
    let degenerate: Vec<usize> = pl
        .classifications
        .iter()
        .enumerate()
        .filter(|(_, c)| c.nd.nondegenerate != ThreeValued::Holds)
        .map(|(i, _)| i)
        .collect();
    let mut exit = if has_indeterminate(&pl.classifications) {
        3
    } else {
        0
    };
    if degenerate.is_empty() {
        let sweep_points: Vec<SweepPoint> = pl
            .point_reports
            .iter()
            .zip(&pl.classifications)
            .map(|(pt, c)| SweepPoint {
                value: pt.objective_value,
                m_index: c.nd.m_index,
                k: c.nd.k,
            })
            .collect();
        let sweep = morse::level_sweep(
            &pl.problem,
            &sweep_points,
            levels.as_deref(),
            args.grid,
            &pl.tols,
        )?;
        let mountain_pass =
            morse::mountain_pass_check(pl.problem.n(), pl.problem.s(), &sweep_points)?;
        if sweep.indeterminate {
            report.notes.push(
                "level sweep: multiple stationary points share a crossing; their rule \
                 verdicts are aggregate, not per-point"
                    .into(),
            );
            exit = 3;
        }
        if !sweep.all_rules_match {
            report
                .notes
                .push("level sweep: a crossing violated its transition rule".into());
            exit = 3;
        }
        report.morse = Some(MorseSection {
            sweep: report::sweep_json(&sweep),
            mountain_pass,
        });
    } else {
        for i in degenerate {
            report.notes.push(format!(
                "level sweep skipped: stationary point {} is not nondegenerate ({})",
                i + 1,
                pl.classifications[i].nd.failure_summary()
            ));
        }
        exit = 3;
    }
    emit(&args.common, &report)?;
    Ok(exit)
}

fn cmd_perturb(args: PerturbArgs) -> Result<i32, Error> {
    let linear = parse_vec(&args.linear, "--linear")?;
    let epsilons = parse_vec(&args.epsilons, "--epsilons")?;
    let shift = args
        .shift
        .as_deref()
        .map(|s| parse_vec(s, "--shift"))
        .transpose()?;
    let pl = run_pipeline(&args.common.problem, &args.common.options())?;
    let spec = PerturbSpec {
        linear,
        quadratic_shift: shift,
        epsilons,
        radius: args.radius,
    };
    let table = stationarity::perturb_experiment(&pl.problem, &spec, &pl.solve_cfg, &pl.tols)?;
    let mut report = assemble(&args.common.options(), &pl);
    report.perturb = Some(report::perturb_section(&pl.problem, &table, &pl.tols)?);
    emit(&args.common, &report)?;
    Ok(if has_indeterminate(&pl.classifications) {
        3
    } else {
        0
    })
}

fn cmd_probe(args: ProbeArgs) -> Result<i32, Error> {
    let pl = run_pipeline(&args.common.problem, &args.common.options())?;
    let stats = stationarity::genericity_probe(
        &pl.problem,
        args.trials,
        args.magnitude,
        &pl.solve_cfg,
        &pl.tols,
    )?;
    let mut report = assemble(&args.common.options(), &pl);
    report.probe = Some(report::probe_section(&stats));
    emit(&args.common, &report)?;
    Ok(if has_indeterminate(&pl.classifications) || stats.indeterminate > 0 {
        3
    } else {
        0
    })
}
