//! Seeded Monte Carlo harness: one fixed instance, many sketch seeds.
//!
//! The instance is drawn once from `derive_seed(base_seed, INSTANCE_STREAM)`.
//! Trial `t` solves it with seed `derive_seed(base_seed, t)`, so the CSV body
//! does not depend on how trials are scheduled across threads.

use std::fmt::Write as _;
use std::time::Instant;

use lever_sketch_core::densemat::{exact_least_squares, exact_ridge, spectral_norm};
use lever_sketch_core::fmt::sig17;
use lever_sketch_core::leverage::DEFAULT_EPS0;
use lever_sketch_core::rng::derive_seed;
use lever_sketch_core::solve::{solve_multiple, solve_ridge, RegressionProblem, RidgeProblem, ScoresMode};
use lever_sketch_core::verify::{approx_ratio, ridge_ratio};
use lever_sketch_core::{DenseMatrix, Error, Result, SketchConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::generators::{instance, Generator, Instance, DEFAULT_RESIDUAL_FRACTION};

/// Seed index reserved for the instance; trial indices stay far below it.
pub const INSTANCE_STREAM: u64 = 0xbe4c_0000_0000_0000;
/// Environment variable capping worker threads (`0` or unset = automatic).
pub const THREADS_ENV: &str = "LEVER_SKETCH_THREADS";
pub const CSV_HEADER: &str = "trial,seed,m,ratio,passed,rows_classical,rows_quantum_model,wall_ms";

fn one() -> usize {
    1
}

fn default_residual() -> f64 {
    DEFAULT_RESIDUAL_FRACTION
}

fn default_eps0() -> f64 {
    DEFAULT_EPS0
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoresSpec {
    #[default]
    Exact,
    Approximate {
        #[serde(default = "default_eps0")]
        eps0: f64,
    },
}

impl From<ScoresSpec> for ScoresMode {
    fn from(s: ScoresSpec) -> Self {
        match s {
            ScoresSpec::Exact => ScoresMode::Exact,
            ScoresSpec::Approximate { eps0 } => ScoresMode::Approximate { eps0 },
        }
    }
}

/// How `lambda` in a [`BenchSpec`] is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaScale {
    #[default]
    Absolute,
    /// `lambda` is a multiple of `‖A‖²`.
    SpectralSq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub generator: Generator,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "N", default = "one")]
    pub big_n: usize,
    pub eps: f64,
    /// Ridge penalty; absent for plain regression.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub lambda_scale: LambdaScale,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub scores_mode: ScoresSpec,
    /// Fixed sample count; absent uses the recommended count.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_residual")]
    pub residual_fraction: f64,
}

impl BenchSpec {
    /// Parses and validates a spec. Every failure is reported as [`Error::Parse`].
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: BenchSpec = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        spec.validate().map_err(|e| Error::Parse {
            line: 0,
            msg: format!("invalid bench spec: {e}"),
        })?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate(self.n, self.d)?;
        if self.big_n == 0 {
            return Err(Error::NonPositiveDimension);
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::EpsOutOfRange(self.eps));
        }
        if let Some(lambda) = self.lambda {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::NegativeLambda(lambda));
            }
            if self.big_n != 1 {
                return Err(Error::DimensionMismatch("ridge takes one right-hand side".into()));
            }
        }
        if let ScoresSpec::Approximate { eps0 } = self.scores_mode {
            if !(eps0 > 0.0 && eps0 < 1.0) {
                return Err(Error::Eps0OutOfRange(eps0));
            }
        }
        if self.m == Some(0) {
            return Err(Error::InvalidParameter("m must be at least 1".into()));
        }
        Ok(())
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.base_seed, trial as u64)
    }

    pub fn instance(&self) -> Result<Instance> {
        instance(
            self.generator,
            self.n,
            self.d,
            self.big_n,
            self.residual_fraction,
            derive_seed(self.base_seed, INSTANCE_STREAM),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub m: usize,
    /// `NaN` when the sketch collapsed on every retry.
    pub ratio: f64,
    pub passed: bool,
    pub retries: usize,
    pub collapsed: bool,
    pub rows_classical: u64,
    pub rows_quantum_model: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub trials: usize,
    pub passed: usize,
    pub pass_fraction: f64,
    pub collapses: usize,
    pub retries: usize,
    pub max_ratio: f64,
    pub max_m: usize,
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub spec: BenchSpec,
    /// `λ` after applying [`LambdaScale`].
    pub lambda: Option<f64>,
    pub rows: Vec<TrialRow>,
    pub summary: BenchSummary,
}

impl BenchOutcome {
    fn write_rows(&self, with_wall: bool) -> String {
        let mut out = String::new();
        let header = if with_wall { CSV_HEADER } else { CSV_HEADER.trim_end_matches(",wall_ms") };
        out.push_str(header);
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{}",
                r.trial,
                r.seed,
                r.m,
                sig17(r.ratio),
                r.passed,
                r.rows_classical,
                sig17(r.rows_quantum_model)
            );
            if with_wall {
                let _ = write!(out, ",{:.3}", r.wall_ms);
            }
            out.push('\n');
        }
        let s = &self.summary;
        let _ = writeln!(
            out,
            "# summary trials={} passed={} pass_fraction={} collapses={} retries={} max_ratio={} max_m={}",
            s.trials,
            s.passed,
            sig17(s.pass_fraction),
            s.collapses,
            s.retries,
            sig17(s.max_ratio),
            s.max_m
        );
        out
    }

    /// Full CSV including `wall_ms` and the trailing summary line.
    pub fn to_csv(&self) -> String {
        self.write_rows(true)
    }

    /// CSV without the timing column; identical across reruns of a spec.
    pub fn deterministic_body(&self) -> String {
        self.write_rows(false)
    }
}

/// Worker count from [`THREADS_ENV`]; `None` means automatic.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(t) => Ok(Some(t)),
            Err(_) => Err(Error::InvalidParameter(format!("{THREADS_ENV}={v:?} is not an integer"))),
        },
    }
}

enum Oracle {
    Regression(DenseMatrix),
    Ridge { lambda: f64, b: Vec<f64>, x: Vec<f64> },
}

fn run_trial(spec: &BenchSpec, inst: &Instance, oracle: &Oracle, trial: usize) -> Result<TrialRow> {
    let start = Instant::now();
    let seed = spec.trial_seed(trial);
    let cfg = SketchConfig {
        m: spec.m,
        ..SketchConfig::with_seed(seed)
    };
    let threshold = 1.0 + spec.eps;
    let scores = spec.scores_mode.into();
    let outcome = match oracle {
        Oracle::Regression(x_opt) => {
            let p = RegressionProblem::new(inst.a.clone(), inst.b.clone(), spec.eps)?;
            solve_multiple(&p, &cfg, scores).and_then(|sol| {
                let report = approx_ratio(&inst.a, &inst.b, &sol.x, x_opt, threshold)?;
                Ok((sol, report))
            })
        }
        Oracle::Ridge { lambda, b, x } => {
            let p = RidgeProblem::new(inst.a.clone(), b.clone(), *lambda, spec.eps)?;
            solve_ridge(&p, &cfg, scores).and_then(|sol| {
                let report = ridge_ratio(&inst.a, b, *lambda, sol.x.as_slice(), x, threshold)?;
                Ok((sol, report))
            })
        }
    };
    let row = match outcome {
        Ok((sol, report)) => TrialRow {
            trial,
            seed,
            m: sol.m_used,
            ratio: report.statistic,
            passed: report.passed,
            retries: sol.retries,
            collapsed: false,
            rows_classical: sol.ledger.rows_read_classical(),
            rows_quantum_model: sol.ledger.rows_quantum_model,
            wall_ms: 0.0,
        },
        Err(Error::SketchRankCollapse { retries, .. }) => TrialRow {
            trial,
            seed,
            m: cfg.sample_count(spec.d, spec.eps, None)?,
            ratio: f64::NAN,
            passed: false,
            retries,
            collapsed: true,
            rows_classical: 0,
            rows_quantum_model: f64::NAN,
            wall_ms: 0.0,
        },
        Err(e) => return Err(e),
    };
    Ok(TrialRow {
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        ..row
    })
}

/// Runs every trial of `spec` on up to `threads` workers.
pub fn run_bench(spec: &BenchSpec, threads: Option<usize>) -> Result<BenchOutcome> {
    spec.validate()?;
    let inst = spec.instance()?;
    let lambda = spec.lambda.map(|l| match spec.lambda_scale {
        LambdaScale::Absolute => l,
        LambdaScale::SpectralSq => l * spectral_norm(&inst.a).powi(2),
    });
    let oracle = match lambda {
        None => Oracle::Regression(exact_least_squares(&inst.a, &inst.b)?),
        Some(lambda) => {
            let b = inst.b.column(0);
            let x = exact_ridge(&inst.a, &b, lambda)?;
            Oracle::Ridge { lambda, b, x }
        }
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let rows = pool.install(|| {
        (0..spec.trials)
            .into_par_iter()
            .map(|t| run_trial(spec, &inst, &oracle, t))
            .collect::<Result<Vec<_>>>()
    })?;

    let passed = rows.iter().filter(|r| r.passed).count();
    let summary = BenchSummary {
        trials: rows.len(),
        passed,
        pass_fraction: passed as f64 / rows.len() as f64,
        collapses: rows.iter().filter(|r| r.collapsed).count(),
        retries: rows.iter().map(|r| r.retries).sum(),
        max_ratio: rows.iter().map(|r| r.ratio).filter(|r| !r.is_nan()).fold(f64::NEG_INFINITY, f64::max),
        max_m: rows.iter().map(|r| r.m).max().unwrap_or(0),
    };
    Ok(BenchOutcome {
        spec: spec.clone(),
        lambda,
        rows,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> BenchSpec {
        BenchSpec::from_json(r#"{"generator":"gaussian","n":600,"d":4,"eps":0.5,"trials":6,"base_seed":3}"#).unwrap()
    }

    #[test]
    fn spec_defaults_and_errors() {
        let s = spec();
        assert_eq!(s.big_n, 1);
        assert_eq!(s.scores_mode, ScoresSpec::Exact);
        assert_eq!(s.residual_fraction, DEFAULT_RESIDUAL_FRACTION);
        let approx = BenchSpec::from_json(
            r#"{"generator":"coherent_rows","n":50,"d":2,"N":2,"eps":0.5,"trials":1,"base_seed":0,
                "scores_mode":{"approximate":{}}}"#,
        )
        .unwrap();
        assert_eq!(approx.scores_mode, ScoresSpec::Approximate { eps0: DEFAULT_EPS0 });
        for bad in [
            r#"{"generator":"gaussian","n":50,"d":2,"eps":0.5,"trials":0,"base_seed":0}"#,
            r#"{"generator":"gaussian","n":50,"d":2,"eps":1.5,"trials":1,"base_seed":0}"#,
            r#"{"generator":"other","n":50,"d":2,"eps":0.5,"trials":1,"base_seed":0}"#,
            r#"{"generator":"gaussian","n":50,"d":2,"eps":0.5,"trials":1,"base_seed":0,"extra":1}"#,
            r#"{"generator":"gaussian","n":50,"d":2,"N":2,"lambda":1.0,"eps":0.5,"trials":1,"base_seed":0}"#,
            "not json",
        ] {
            assert!(BenchSpec::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn body_independent_of_threads() {
        let s = spec();
        let one = run_bench(&s, Some(1)).unwrap();
        let many = run_bench(&s, Some(4)).unwrap();
        assert_eq!(one.deterministic_body(), many.deterministic_body());
        assert_eq!(one.rows.len(), 6);
        assert!(one.to_csv().starts_with(CSV_HEADER));
        assert!(!one.deterministic_body().contains("wall_ms"));
    }

    #[test]
    fn trial_seeds_are_derived() {
        let s = spec();
        let out = run_bench(&s, Some(2)).unwrap();
        for (t, r) in out.rows.iter().enumerate() {
            assert_eq!(r.trial, t);
            assert_eq!(r.seed, derive_seed(3, t as u64));
            assert!(r.ratio >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn square_consistent_systems() {
        let s = BenchSpec::from_json(
            r#"{"generator":"gaussian","n":5,"d":5,"eps":0.5,"trials":4,"base_seed":9,"residual_fraction":0.0}"#,
        )
        .unwrap();
        let out = run_bench(&s, None).unwrap();
        for r in &out.rows {
            assert!(r.collapsed || (r.ratio - 1.0).abs() < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn ridge_bench_scales_lambda() {
        let s = BenchSpec::from_json(
            r#"{"generator":"gaussian","n":400,"d":3,"eps":0.5,"lambda":0.1,"lambda_scale":"spectral_sq",
                "trials":3,"base_seed":1}"#,
        )
        .unwrap();
        let out = run_bench(&s, None).unwrap();
        let inst = s.instance().unwrap();
        let want = 0.1 * spectral_norm(&inst.a).powi(2);
        assert!((out.lambda.unwrap() - want).abs() <= 1e-12 * want);
        assert_eq!(out.summary.passed, 3);
    }
}
