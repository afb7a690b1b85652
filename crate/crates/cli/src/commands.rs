//! Subcommand definitions and dispatch.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use lever_sketch_core::densemat::{orthonormal_basis, svd_factor};
use lever_sketch_core::leverage::{approx_leverage_scores, exact_leverage_scores, perturb_scores, ridge_basis, statistical_dimension, DEFAULT_EPS0};
use lever_sketch_core::qcost::{crossover, quantum_pipeline_cost, COST_CSV_HEADER, DEFAULT_OMEGA};
use lever_sketch_core::rng::{derive_seed, stream};
use lever_sketch_core::sketch::{distribution_from_scores, draw_sketch};
use lever_sketch_core::solve::{solve_linear, solve_multiple, solve_ridge, RegressionMode, RegressionProblem, RidgeProblem, ScoresMode};
use lever_sketch_core::verify::{approx_ratio, check_famp, check_samp, check_se, ridge_ratio, run_trials, DEFAULT_MIN_PASS, DEFAULT_TRIALS};
use lever_sketch_core::densemat::{exact_least_squares, exact_ridge};
use lever_sketch_core::{CostModelInputs, DenseMatrix, Error, LogPolicy, SketchConfig, SketchOperator};
use serde::Serialize;

use crate::bench::{run_bench, threads_from_env, BenchSpec};
use crate::exit::{self, error_json, CliError};

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "lever-sketch", version, about = "Leverage-score sketch-and-solve regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a linear, multiple, or ridge regression problem by sketching.
    Solve(SolveArgs),
    /// Monte Carlo check of SE, FAMP, or SAMP for leverage-score sketches.
    Verify(VerifyArgs),
    /// Run a benchmark spec and print per-trial CSV.
    Bench(BenchArgs),
    /// Evaluate the row-query cost model.
    Cost(CostArgs),
    /// Print the leverage-score profile of a matrix.
    Leverage(LeverageArgs),
    /// Print a sampled sketch operator.
    Sample(SampleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Linear,
    Multiple,
    Ridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoresArg {
    Exact,
    Approx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckArg {
    Se,
    Famp,
    Samp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogArg {
    None,
    Single,
}

/// Flags shared by every command that draws a sketch.
#[derive(Debug, Clone, Args)]
pub struct SketchArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ScoresArg::Exact)]
    pub scores: ScoresArg,
    #[arg(long, default_value_t = DEFAULT_EPS0)]
    pub eps0: f64,
    /// Fixed sample count instead of the recommended one.
    #[arg(long)]
    pub m: Option<usize>,
    /// Use the identity sketch (every row once, weight 1).
    #[arg(long)]
    pub identity: bool,
}

impl SketchArgs {
    fn scores_mode(&self) -> CliResult<ScoresMode> {
        match self.scores {
            ScoresArg::Exact => Ok(ScoresMode::Exact),
            ScoresArg::Approx => {
                if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
                    return Err(Error::Eps0OutOfRange(self.eps0).into());
                }
                Ok(ScoresMode::Approximate { eps0: self.eps0 })
            }
        }
    }

    fn config(&self) -> SketchConfig {
        SketchConfig {
            m: self.m,
            identity: self.identity,
            ..SketchConfig::with_seed(self.seed)
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long = "A", value_name = "CSV")]
    pub a: PathBuf,
    #[arg(long = "b", visible_alias = "B", value_name = "CSV")]
    pub b: PathBuf,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Also run the exact solver and report the objective ratio.
    #[arg(long)]
    pub oracle: bool,
    /// Write the solution matrix as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub sketch: SketchArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub check: CheckArg,
    #[arg(long = "A", value_name = "CSV")]
    pub a: PathBuf,
    #[arg(long = "B", value_name = "CSV")]
    pub b: Option<PathBuf>,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,
    #[arg(long = "min-pass", default_value_t = DEFAULT_MIN_PASS)]
    pub min_pass: f64,
    #[command(flatten)]
    pub sketch: SketchArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// BenchSpec JSON file.
    pub spec: PathBuf,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub d: u64,
    #[arg(long = "N", default_value_t = 1)]
    pub big_n: u64,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub eps0: Option<f64>,
    /// Row sparsity; defaults to `d`.
    #[arg(long)]
    pub r: Option<u64>,
    #[arg(long)]
    pub m: Option<u64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Statistical dimension for ridge, given directly.
    #[arg(long, conflicts_with = "sd_from")]
    pub sd: Option<f64>,
    /// Compute the statistical dimension from this matrix and `--lambda`.
    #[arg(long = "sd-from", value_name = "CSV")]
    pub sd_from: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_OMEGA)]
    pub omega: f64,
    #[arg(long, value_enum, default_value_t = LogArg::None)]
    pub log: LogArg,
    /// Geometric grid `n:start:end:factor`.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Print the JSON report instead of CSV (single point only).
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct LeverageArgs {
    #[arg(long = "A", value_name = "CSV")]
    pub a: PathBuf,
    #[arg(long, value_enum, default_value_t = ScoresArg::Exact)]
    pub scores: ScoresArg,
    #[arg(long, default_value_t = DEFAULT_EPS0)]
    pub eps0: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dump ridge leverage scores for this penalty instead.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long = "A", value_name = "CSV")]
    pub a: PathBuf,
    /// Target accuracy used for the recommended sample count.
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub sketch: SketchArgs,
}

fn read_matrix(path: &Path) -> CliResult<DenseMatrix> {
    DenseMatrix::read_csv_file(path).map_err(|e| match e {
        Error::Io(msg) => Error::Io(format!("{}: {msg}", path.display())).into(),
        other => other.into(),
    })
}

fn check_eps(eps: f64) -> CliResult<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::EpsOutOfRange(eps).into())
    }
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::from(e).into()),
        None => out.write_all(text.as_bytes()).map_err(|e| Error::from(e).into()),
    }
}

fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> CliResult<i32> {
    check_eps(args.eps)?;
    match (args.mode, args.lambda) {
        (ModeArg::Ridge, None) => return Err(CliError::flag("--mode ridge requires --lambda")),
        (ModeArg::Ridge, Some(l)) if !(l > 0.0 && l.is_finite()) => {
            return Err(CliError::flag(format!("--lambda must be positive for ridge (got {l}); use --mode linear for lambda = 0")))
        }
        (ModeArg::Linear | ModeArg::Multiple, Some(_)) => {
            return Err(CliError::flag("--lambda only applies to --mode ridge"))
        }
        _ => {}
    }
    let scores = args.sketch.scores_mode()?;
    let cfg = args.sketch.config();
    let a = read_matrix(&args.a)?;
    let b = read_matrix(&args.b)?;
    let n = a.rows();

    let (sol, mode, oracle) = match args.mode {
        ModeArg::Linear | ModeArg::Multiple => {
            let p = RegressionProblem::new(a, b, args.eps)?;
            let sol = if args.mode == ModeArg::Linear {
                solve_linear(&p, &cfg, scores)?
            } else {
                solve_multiple(&p, &cfg, scores)?
            };
            let oracle = if args.oracle {
                let x = exact_least_squares(&p.a, &p.b)?;
                let r = approx_ratio(&p.a, &p.b, &sol.x, &x, 1.0 + args.eps)?;
                let obj = lever_sketch_core::verify::regression_objective(&p.a, &p.b, &x)?;
                Some((obj, r.statistic))
            } else {
                None
            };
            (sol, p.mode(), oracle)
        }
        ModeArg::Ridge => {
            if b.cols() != 1 {
                return Err(Error::DimensionMismatch(format!("ridge takes one right-hand side, got {}", b.cols())).into());
            }
            let lambda = args.lambda.expect("checked above");
            let p = RidgeProblem::new(a, b.column(0), lambda, args.eps)?;
            let sol = solve_ridge(&p, &cfg, scores)?;
            let oracle = if args.oracle {
                let x = exact_ridge(&p.a, &p.b, lambda)?;
                let r = ridge_ratio(&p.a, &p.b, lambda, sol.x.as_slice(), &x, 1.0 + args.eps)?;
                let obj = lever_sketch_core::verify::ridge_objective(&p.a, &p.b, lambda, &x)?;
                Some((obj, r.statistic))
            } else {
                None
            };
            (sol, RegressionMode::Ridge, oracle)
        }
    };

    let mut report = sol.report(mode, n, args.eps, args.lambda);
    if let Some((obj, ratio)) = oracle {
        report.oracle_objective = Some(obj);
        report.ratio = Some(ratio);
    }
    if let Some(path) = &args.out {
        sol.x.write_csv_file(path)?;
    }
    writeln!(out, "{}", report.to_json()).map_err(Error::from)?;
    Ok(exit::OK)
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    reports: &'a [lever_sketch_core::VerificationReport],
    summary: &'a lever_sketch_core::verify::TrialSummary,
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> CliResult<i32> {
    check_eps(args.eps)?;
    if !(0.0..=1.0).contains(&args.min_pass) {
        return Err(CliError::flag(format!("--min-pass {} outside [0, 1]", args.min_pass)));
    }
    if args.trials == 0 {
        return Err(CliError::flag("--trials must be at least 1"));
    }
    let b_path = match (args.check, &args.b) {
        (CheckArg::Famp | CheckArg::Samp, None) => {
            return Err(CliError::flag("--check famp/samp requires --B"));
        }
        (_, b) => b.clone(),
    };
    let scores = args.sketch.scores_mode()?;
    let a = read_matrix(&args.a)?;
    let b = b_path.as_deref().map(read_matrix).transpose()?;
    let n = a.rows();
    let d = a.cols();

    let profile = exact_leverage_scores(&a)?;
    let eps0 = match scores {
        ScoresMode::Exact => 0.0,
        ScoresMode::Approximate { eps0 } => eps0,
    };
    let cfg = args.sketch.config();
    let m = cfg.sample_count(d, args.eps, None)?;
    let u = if args.check == CheckArg::Se { Some(orthonormal_basis(&a)?.basis) } else { None };

    let draw = |seed: u64| -> lever_sketch_core::Result<SketchOperator> {
        if args.sketch.identity {
            return Ok(SketchOperator::identity(n));
        }
        let scores = if eps0 > 0.0 {
            perturb_scores(&profile.scores, eps0, derive_seed(seed, stream::SCORE_NOISE))?
        } else {
            profile.scores.clone()
        };
        draw_sketch(&distribution_from_scores(&scores, eps0, cfg.oversample_c)?, m, seed)
    };
    let (reports, summary) = run_trials(args.trials, args.sketch.seed, args.min_pass, |seed| {
        let s = draw(seed)?;
        match args.check {
            CheckArg::Se => check_se(u.as_ref().expect("basis"), &s, args.eps),
            CheckArg::Famp => check_famp(&a, b.as_ref().expect("B"), &s, args.eps),
            CheckArg::Samp => check_samp(&a, b.as_ref().expect("B"), &s, args.eps),
        }
    })?;
    let json = serde_json::to_string(&VerifyOutput {
        reports: &reports,
        summary: &summary,
    })
    .expect("verify output serializes");
    writeln!(out, "{json}").map_err(Error::from)?;
    Ok(if summary.passed { exit::OK } else { exit::CHECK_FAILED })
}

fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> CliResult<i32> {
    let text = fs::read_to_string(&args.spec).map_err(Error::from)?;
    let spec = BenchSpec::from_json(&text)?;
    let threads = threads_from_env()?;
    let outcome = run_bench(&spec, threads)?;
    out.write_all(outcome.to_csv().as_bytes()).map_err(Error::from)?;
    Ok(exit::OK)
}

/// Parses `n:start:end:factor` into the grid `start, start·factor, … ≤ end`.
pub fn parse_sweep(text: &str) -> CliResult<Vec<u64>> {
    let bad = || CliError::flag(format!("--sweep expects n:start:end:factor, got {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 4 || parts[0] != "n" {
        return Err(bad());
    }
    let nums: Vec<u64> = parts[1..]
        .iter()
        .map(|p| p.parse::<u64>().map_err(|_| bad()))
        .collect::<CliResult<_>>()?;
    let (start, end, factor) = (nums[0], nums[1], nums[2]);
    if start == 0 || end < start || factor < 2 {
        return Err(CliError::flag(format!(
            "--sweep needs 1 <= start <= end and factor >= 2, got {text:?}"
        )));
    }
    let mut grid = Vec::new();
    let mut n = start;
    while n <= end {
        grid.push(n);
        match n.checked_mul(factor) {
            Some(next) => n = next,
            None => break,
        }
    }
    Ok(grid)
}

fn cmd_cost(args: &CostArgs, out: &mut dyn Write) -> CliResult<i32> {
    let sd = match (&args.sd_from, args.sd, args.lambda) {
        (Some(_), _, None) => return Err(CliError::flag("--sd-from requires --lambda")),
        (Some(path), _, Some(lambda)) => {
            let a = read_matrix(path)?;
            if a.cols() as u64 != args.d {
                return Err(Error::DimensionMismatch(format!("--sd-from matrix has {} columns, --d is {}", a.cols(), args.d)).into());
            }
            let sv = svd_factor(&a)?.singular_values.unwrap_or_default();
            Some(statistical_dimension(&sv, lambda)?)
        }
        (None, Some(sd), _) => Some(sd),
        (None, None, Some(_)) => return Err(CliError::flag("--lambda requires --sd or --sd-from")),
        (None, None, None) => None,
    };
    let mut inputs = CostModelInputs::new(1, args.d, args.eps);
    inputs.big_n = args.big_n;
    inputs.eps0 = args.eps0.unwrap_or(inputs.eps0);
    inputs.r = args.r.unwrap_or(args.d);
    inputs.omega = args.omega;
    inputs.m = args.m;
    inputs.sd = sd;
    inputs.lambda = args.lambda;
    inputs.log_policy = match args.log {
        LogArg::None => LogPolicy::None,
        LogArg::Single => LogPolicy::SingleLog,
    };

    match (&args.sweep, args.n) {
        (None, None) => Err(CliError::flag("cost needs --n or --sweep")),
        (Some(_), Some(_)) => Err(CliError::flag("--n and --sweep are exclusive")),
        (None, Some(n)) => {
            inputs.n = n;
            let report = quantum_pipeline_cost(&inputs)?;
            if args.json {
                writeln!(out, "{}", report.to_json()).map_err(Error::from)?;
            } else {
                writeln!(out, "{COST_CSV_HEADER}\n{}", report.to_csv_row()).map_err(Error::from)?;
            }
            Ok(exit::OK)
        }
        (Some(sweep), None) => {
            if args.json {
                return Err(CliError::flag("--json is not available with --sweep"));
            }
            let mut grid = parse_sweep(sweep)?;
            inputs.validate()?;
            let star = crossover(&inputs);
            if let Some(star) = star {
                if star >= grid[0] && star <= *grid.last().expect("nonempty") && !grid.contains(&star) {
                    grid.push(star);
                    grid.sort_unstable();
                }
            }
            let mut text = format!("{COST_CSV_HEADER},marker\n");
            for n in grid {
                inputs.n = n;
                let report = quantum_pipeline_cost(&inputs)?;
                let marker = if Some(n) == star { "crossover" } else { "" };
                text.push_str(&format!("{},{marker}\n", report.to_csv_row()));
            }
            match star {
                Some(s) => text.push_str(&format!("# crossover n*={s}\n")),
                None => text.push_str("# crossover none\n"),
            }
            out.write_all(text.as_bytes()).map_err(Error::from)?;
            Ok(exit::OK)
        }
    }
}

fn cmd_leverage(args: &LeverageArgs, out: &mut dyn Write) -> CliResult<i32> {
    let a = read_matrix(&args.a)?;
    let mut profile = match args.lambda {
        None => exact_leverage_scores(&a)?,
        Some(lambda) => {
            let rb = ridge_basis(&a, lambda)?;
            let mut p = exact_leverage_scores(&a)?;
            p.score_sum = rb.sd;
            p.scores = rb.ridge_scores;
            p
        }
    };
    if args.scores == ScoresArg::Approx {
        profile = match args.lambda {
            None => approx_leverage_scores(&a, args.eps0, args.seed)?,
            Some(_) => profile.perturbed(args.eps0, args.seed)?,
        };
    }
    emit(out, args.out.as_deref(), &profile.to_csv())?;
    Ok(exit::OK)
}

fn cmd_sample(args: &SampleArgs, out: &mut dyn Write) -> CliResult<i32> {
    check_eps(args.eps)?;
    let scores_mode = args.sketch.scores_mode()?;
    let cfg = args.sketch.config();
    let a = read_matrix(&args.a)?;
    let s = if cfg.identity {
        SketchOperator::identity(a.rows())
    } else {
        let (scores, sd) = match args.lambda {
            None => (exact_leverage_scores(&a)?.scores, None),
            Some(lambda) => {
                let rb = ridge_basis(&a, lambda)?;
                (rb.ridge_scores, Some(rb.sd))
            }
        };
        let (scores, eps0) = match scores_mode {
            ScoresMode::Exact => (scores, 0.0),
            ScoresMode::Approximate { eps0 } => (perturb_scores(&scores, eps0, derive_seed(cfg.seed, stream::SCORE_NOISE))?, eps0),
        };
        let q = distribution_from_scores(&scores, eps0, cfg.oversample_c)?;
        let m = cfg.sample_count(a.cols(), args.eps, sd)?;
        draw_sketch(&q, m, cfg.seed)?
    };
    emit(out, args.out.as_deref(), &s.to_csv())?;
    Ok(exit::OK)
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<i32> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Cost(a) => cmd_cost(a, out),
        Command::Leverage(a) => cmd_leverage(a, out),
        Command::Sample(a) => cmd_sample(a, out),
    }
}

/// Parses `args`, runs the command, and returns the process exit code.
/// Errors go to `err` as one JSON line.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return exit::OK;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(err, "{}", error_json("InvalidFlag", first, exit::INVALID_FLAG));
            return exit::INVALID_FLAG;
        }
    };
    match run(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_json());
            e.exit_code()
        }
    }
}
