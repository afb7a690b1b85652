//! Row-query and time accounting.
//!
//! Two kinds of numbers live here. [`QueryLedger`] counts the rows the
//! classical pipeline actually reads, through [`CountingMatrix`]. The
//! [`CostReport`] values are MODEL values: leading terms of the quantum
//! sampler's query and time bounds evaluated with constant 1, optionally
//! times one `log₂(n + 2)` factor. Nothing quantum is simulated.

use std::cell::Cell;
use std::fmt::Write as _;

use serde::{Serialize, Serializer};

use crate::densemat::{DenseMatrix, RowSource};
use crate::error::{Error, Result};
use crate::fmt::{serialize_f64, serialize_opt_f64, sig17};

/// Matrix-multiplication exponent used unless overridden.
pub const DEFAULT_OMEGA: f64 = 2.372;
/// Largest exponent tried by [`crossover`].
pub const CROSSOVER_MAX_LOG2: u32 = 60;

/// `T_mat(a, b, c) = s · t · u^(ω−2)` where `u = min(a, b, c)` and `s, t` are
/// the other two, so `T_mat(n, n, n) = n^ω`.
///
/// Symmetric in its arguments by construction. Linear in any argument that is
/// not the minimum, which is the divide identity
/// `T_mat(a, b, c) = k · T_mat(a / k, b, c)` as long as `a / k` stays above
/// the minimum of the other two.
pub fn tmat(a: u64, b: u64, c: u64, omega: f64) -> Result<f64> {
    if a == 0 || b == 0 || c == 0 {
        return Err(Error::NonPositiveDimension);
    }
    let mut dims = [a as f64, b as f64, c as f64];
    dims.sort_by(f64::total_cmp);
    Ok(dims[1] * dims[2] * dims[0].powf(omega - 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogPolicy {
    #[default]
    None,
    SingleLog,
}

impl LogPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            LogPolicy::None => "none",
            LogPolicy::SingleLog => "single_log",
        }
    }

    fn factor(self, n: f64) -> f64 {
        match self {
            LogPolicy::None => 1.0,
            LogPolicy::SingleLog => (n + 2.0).log2(),
        }
    }
}

impl Serialize for LogPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl std::str::FromStr for LogPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(LogPolicy::None),
            "single" | "single_log" => Ok(LogPolicy::SingleLog),
            other => Err(Error::InvalidParameter(format!("unknown log policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostModelInputs {
    pub n: u64,
    pub d: u64,
    /// Right-hand-side count `N`.
    pub big_n: u64,
    pub eps: f64,
    pub eps0: f64,
    /// Row sparsity, `1 ≤ r ≤ d`.
    pub r: u64,
    pub omega: f64,
    /// Sample count; when set, sampling costs `√(n m)` queries.
    pub m: Option<u64>,
    /// Statistical dimension; when set, the ridge formulas apply.
    pub sd: Option<f64>,
    pub lambda: Option<f64>,
    pub log_policy: LogPolicy,
}

impl CostModelInputs {
    /// Dense rows (`r = d`), one right-hand side, `ε₀ = 0.1`, default `ω`.
    pub fn new(n: u64, d: u64, eps: f64) -> Self {
        Self {
            n,
            d,
            big_n: 1,
            eps,
            eps0: crate::leverage::DEFAULT_EPS0,
            r: d,
            omega: DEFAULT_OMEGA,
            m: None,
            sd: None,
            lambda: None,
            log_policy: LogPolicy::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.big_n == 0 {
            return Err(Error::NonPositiveDimension);
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::EpsOutOfRange(self.eps));
        }
        crate::leverage::check_eps0(self.eps0)?;
        if self.r == 0 || self.r > self.d {
            return Err(Error::InvalidParameter(format!("row sparsity {} outside [1, {}]", self.r, self.d)));
        }
        if !(2.0..=3.0).contains(&self.omega) {
            return Err(Error::InvalidParameter(format!("omega {} outside [2, 3]", self.omega)));
        }
        if self.m == Some(0) {
            return Err(Error::InvalidParameter("m must be at least 1".into()));
        }
        if let Some(sd) = self.sd {
            if !(sd > 0.0 && sd <= self.d as f64 + 1e-9) {
                return Err(Error::InvalidParameter(format!("sd {sd} outside (0, d]")));
            }
        }
        Ok(())
    }

    /// The dimension under the square root: `sd` for ridge, `d` otherwise.
    fn effective_dim(&self) -> f64 {
        self.sd.unwrap_or(self.d as f64)
    }
}

/// Modeled quantum row queries: `√(n·d)/ε` (`sd` in place of `d` for ridge),
/// or `√(n·m)` when a sample count is given.
pub fn rows_quantum(inputs: &CostModelInputs) -> f64 {
    let n = inputs.n as f64;
    let base = match inputs.m {
        Some(m) => (n * m as f64).sqrt(),
        None => (n * inputs.effective_dim()).sqrt() / inputs.eps,
    };
    base * inputs.log_policy.factor(n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeTerm {
    pub name: &'static str,
    #[serde(serialize_with = "serialize_f64")]
    pub value: f64,
    /// Whether the term is part of `time_quantum`; the rest are alternative
    /// forms reported alongside.
    pub summed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub values: &'static str,
    pub n: u64,
    pub d: u64,
    #[serde(rename = "N")]
    pub big_n: u64,
    #[serde(serialize_with = "serialize_f64")]
    pub eps: f64,
    #[serde(serialize_with = "serialize_f64")]
    pub eps0: f64,
    pub r: u64,
    #[serde(serialize_with = "serialize_f64")]
    pub omega: f64,
    pub m: Option<u64>,
    #[serde(serialize_with = "serialize_opt_f64")]
    pub lambda: Option<f64>,
    #[serde(serialize_with = "serialize_opt_f64")]
    pub sd: Option<f64>,
    pub log_policy: LogPolicy,
    #[serde(serialize_with = "serialize_f64")]
    pub rows_classical: f64,
    #[serde(serialize_with = "serialize_f64")]
    pub rows_quantum: f64,
    #[serde(serialize_with = "serialize_f64")]
    pub time_quantum: f64,
    pub time_terms: Vec<TimeTerm>,
}

pub const COST_CSV_HEADER: &str =
    "n,d,N,eps,lambda,sd,rows_classical,rows_quantum,time_quantum,time_quantum_terms,log_policy";

impl CostReport {
    pub fn speedup(&self) -> f64 {
        self.rows_classical / self.rows_quantum
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// One row matching [`COST_CSV_HEADER`]; terms are `name=value` joined by `;`.
    pub fn to_csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(sig17).unwrap_or_default();
        let terms = self
            .time_terms
            .iter()
            .map(|t| format!("{}={}", t.name, sig17(t.value)))
            .collect::<Vec<_>>()
            .join(";");
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.d,
            self.big_n,
            sig17(self.eps),
            opt(self.lambda),
            opt(self.sd),
            sig17(self.rows_classical),
            sig17(self.rows_quantum),
            sig17(self.time_quantum),
            terms,
            self.log_policy.as_str()
        );
        s
    }
}

/// Evaluates the leading-term query and time model.
///
/// Summed time terms: sampling `r · rows` plus solving `d^ω/ε`, plus
/// `N · d^(ω−1)/ε` when `N > 1`. For ridge the sampling term is `rows · d`.
/// Also reported, unsummed: the sampler's own `d^ω` solve term, the
/// `√n · d^1.5 / ε` form of the linear bound, and the leverage estimator's
/// query and time bounds at `ε₀`.
pub fn quantum_pipeline_cost(inputs: &CostModelInputs) -> Result<CostReport> {
    inputs.validate()?;
    let n = inputs.n as f64;
    let d = inputs.d as f64;
    let r = inputs.r as f64;
    let (eps, eps0, omega) = (inputs.eps, inputs.eps0, inputs.omega);
    let log = inputs.log_policy.factor(n);
    let rows = rows_quantum(inputs);

    let mut terms = Vec::new();
    let mut push = |name, value: f64, summed| terms.push(TimeTerm { name, value: value * log, summed });
    let rows_unlogged = rows / log;
    if inputs.sd.is_some() {
        push("sampling_rows_times_d", rows_unlogged * d, true);
    } else {
        push("sampling_r_rows", r * rows_unlogged, true);
    }
    push("solve_d_omega_over_eps", d.powf(omega) / eps, true);
    if inputs.big_n > 1 {
        push("multiply_n_d_omega_minus_1_over_eps", inputs.big_n as f64 * d.powf(omega - 1.0) / eps, true);
    }
    push("sampler_d_omega", d.powf(omega), false);
    push("linear_sqrt_n_d_1_5_over_eps", n.sqrt() * d.powf(1.5) / eps, false);
    push("estimator_queries", (n * d).sqrt() / eps0, false);
    push(
        "estimator_time",
        r * (n * d).sqrt() / eps0 + d.powf(omega) / (eps0 * eps0) + d * d / eps0.powi(4),
        false,
    );
    let time_quantum = terms.iter().filter(|t| t.summed).map(|t| t.value).sum();

    Ok(CostReport {
        values: "model",
        n: inputs.n,
        d: inputs.d,
        big_n: inputs.big_n,
        eps,
        eps0,
        r: inputs.r,
        omega,
        m: inputs.m,
        lambda: inputs.lambda,
        sd: inputs.sd,
        log_policy: inputs.log_policy,
        rows_classical: n,
        rows_quantum: rows,
        time_quantum,
        time_terms: terms,
    })
}

/// Smallest `n = 2^k`, `k ≤ 60`, with modeled quantum queries below `n`.
/// `None` when there is no crossover on that grid.
pub fn crossover(inputs: &CostModelInputs) -> Option<u64> {
    (0..=CROSSOVER_MAX_LOG2).map(|k| 1u64 << k).find(|&n| {
        let at_n = CostModelInputs { n, ..inputs.clone() };
        rows_quantum(&at_n) < n as f64
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageCount {
    pub stage: String,
    pub rows: u64,
}

/// Rows read by one solver run, broken down by pipeline stage, plus the
/// modeled quantum query count for the same run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct QueryLedger {
    pub stages: Vec<StageCount>,
    #[serde(serialize_with = "serialize_f64")]
    pub rows_quantum_model: f64,
}

impl QueryLedger {
    pub fn record(&mut self, stage: &str, rows: u64) {
        match self.stages.iter_mut().find(|s| s.stage == stage) {
            Some(s) => s.rows += rows,
            None => self.stages.push(StageCount {
                stage: stage.to_string(),
                rows,
            }),
        }
    }

    pub fn rows_read_classical(&self) -> u64 {
        self.stages.iter().map(|s| s.rows).sum()
    }

    pub fn stage(&self, name: &str) -> u64 {
        self.stages.iter().find(|s| s.stage == name).map_or(0, |s| s.rows)
    }

    /// Sums stage counts and model values; used after parallel trials.
    pub fn merge(&mut self, other: &QueryLedger) {
        for s in &other.stages {
            self.record(&s.stage, s.rows);
        }
        self.rows_quantum_model += other.rows_quantum_model;
    }
}

/// Wraps a matrix and counts every row handed out.
pub struct CountingMatrix<'a> {
    inner: &'a DenseMatrix,
    reads: Cell<u64>,
}

impl<'a> CountingMatrix<'a> {
    pub fn new(inner: &'a DenseMatrix) -> Self {
        Self {
            inner,
            reads: Cell::new(0),
        }
    }

    /// The whole matrix, charged as one read of every row.
    pub fn full_pass(&self) -> &'a DenseMatrix {
        self.reads.set(self.reads.get() + self.inner.rows() as u64);
        self.inner
    }

    pub fn reads(&self) -> u64 {
        self.reads.get()
    }

    /// Returns the count so far and resets it.
    pub fn take_reads(&self) -> u64 {
        self.reads.replace(0)
    }
}

impl RowSource for CountingMatrix<'_> {
    fn n_rows(&self) -> usize {
        self.inner.rows()
    }

    fn n_cols(&self) -> usize {
        self.inner.cols()
    }

    fn row(&self, i: usize) -> &[f64] {
        self.reads.set(self.reads.get() + 1);
        self.inner.row(i)
    }
}
