//! Empirical checks of the guarantees a sketch must provide, and approximation
//! ratios against the exact solvers.
//!
//! All statistics are computed from the `m`-row products `SU`, `SA`, `SB`;
//! no `n × n` matrix is formed.

use serde::Serialize;

use crate::densemat::{spectral_norm, DenseMatrix};
use crate::error::{Error, Result};
use crate::fmt::serialize_f64;
use crate::rng::derive_seed;
use crate::sketch::{apply_sketch, SketchOperator};

/// Trials per batch when a caller does not choose.
pub const DEFAULT_TRIALS: usize = 100;
/// Fraction of passing trials a batch needs by default.
pub const DEFAULT_MIN_PASS: f64 = 0.95;

const ORTHONORMAL_TOL: f64 = 1e-8;
const CONSISTENT_ORACLE_TOL: f64 = 1e-14;
const CONSISTENT_CANDIDATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckKind {
    #[serde(rename = "SE")]
    Se,
    #[serde(rename = "FAMP")]
    Famp,
    #[serde(rename = "SAMP")]
    Samp,
    #[serde(rename = "ratio")]
    Ratio,
}

/// Outcome of one check. `passed` is exactly `statistic <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub kind: CheckKind,
    #[serde(serialize_with = "serialize_f64")]
    pub statistic: f64,
    #[serde(serialize_with = "serialize_f64")]
    pub threshold: f64,
    pub passed: bool,
    pub trials: usize,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub details: String,
}

impl VerificationReport {
    fn new(kind: CheckKind, statistic: f64, threshold: f64, seed: Option<u64>) -> Self {
        Self {
            kind,
            statistic,
            threshold,
            passed: statistic <= threshold,
            trials: 1,
            seed,
            details: String::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

fn same_rows(what: &str, a: &DenseMatrix, s: &SketchOperator) -> Result<()> {
    if a.rows() != s.source_rows() {
        return Err(Error::DimensionMismatch(format!(
            "{what} has {} rows, sketch covers {}",
            a.rows(),
            s.source_rows()
        )));
    }
    Ok(())
}

/// Subspace embedding: `‖(SU)ᵀ(SU) − I‖ ≤ ε` for orthonormal `U`.
pub fn check_se(u: &DenseMatrix, s: &SketchOperator, eps: f64) -> Result<VerificationReport> {
    same_rows("U", u, s)?;
    let k = u.cols();
    let identity = DenseMatrix::identity(k);
    let off = u.gram().sub(&identity)?.max_abs();
    if off > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal(off));
    }
    let su = apply_sketch(s, u)?;
    let dev = su.gram().sub(&identity)?;
    Ok(VerificationReport::new(CheckKind::Se, spectral_norm(&dev), eps, s.seed()))
}

fn product_error(a: &DenseMatrix, b: &DenseMatrix, s: &SketchOperator) -> Result<DenseMatrix> {
    same_rows("A", a, s)?;
    same_rows("B", b, s)?;
    if a.frobenius_sq() == 0.0 {
        return Err(Error::ZeroNormInput("A"));
    }
    if b.frobenius_sq() == 0.0 {
        return Err(Error::ZeroNormInput("B"));
    }
    let sketched = apply_sketch(s, a)?.t_matmul(&apply_sketch(s, b)?)?;
    sketched.sub(&a.t_matmul(b)?)
}

/// Frobenius approximate matrix product:
/// `‖(SA)ᵀ(SB) − AᵀB‖_F² / (‖A‖_F² ‖B‖_F²) ≤ ε′²`.
pub fn check_famp(
    a: &DenseMatrix,
    b: &DenseMatrix,
    s: &SketchOperator,
    eps_prime: f64,
) -> Result<VerificationReport> {
    let err = product_error(a, b, s)?;
    let stat = err.frobenius_sq() / (a.frobenius_sq() * b.frobenius_sq());
    Ok(VerificationReport::new(CheckKind::Famp, stat, eps_prime * eps_prime, s.seed()))
}

/// Spectral approximate matrix product:
/// `‖(SA)ᵀ(SB) − AᵀB‖ / (‖A‖ ‖B‖) ≤ ε′`.
pub fn check_samp(
    a: &DenseMatrix,
    b: &DenseMatrix,
    s: &SketchOperator,
    eps_prime: f64,
) -> Result<VerificationReport> {
    let err = product_error(a, b, s)?;
    let stat = spectral_norm(&err) / (spectral_norm(a) * spectral_norm(b));
    Ok(VerificationReport::new(CheckKind::Samp, stat, eps_prime, s.seed()))
}

fn ratio_report(candidate: f64, oracle: f64, scale: f64, threshold: f64) -> VerificationReport {
    if oracle <= CONSISTENT_ORACLE_TOL * scale {
        let (stat, details) = if candidate <= CONSISTENT_CANDIDATE_TOL * scale {
            (1.0, "consistent system")
        } else {
            (f64::INFINITY, "ConsistentSystemMiss")
        };
        let mut r = VerificationReport::new(CheckKind::Ratio, stat, threshold, None);
        r.details = details.into();
        return r;
    }
    VerificationReport::new(CheckKind::Ratio, candidate / oracle, threshold, None)
}

/// `‖A X − B‖_F²` for a candidate `X`.
pub fn regression_objective(a: &DenseMatrix, b: &DenseMatrix, x: &DenseMatrix) -> Result<f64> {
    if a.cols() != x.rows() || a.rows() != b.rows() || x.cols() != b.cols() {
        return Err(Error::DimensionMismatch(format!(
            "A {}x{}, X {}x{}, B {}x{}",
            a.rows(),
            a.cols(),
            x.rows(),
            x.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(a.matmul(x)?.sub(b)?.frobenius_sq())
}

/// `‖A x − b‖² + λ ‖x‖²`.
pub fn ridge_objective(a: &DenseMatrix, b: &[f64], lambda: f64, x: &[f64]) -> Result<f64> {
    let resid = regression_objective(a, &DenseMatrix::column_vector(b), &DenseMatrix::column_vector(x))?;
    Ok(resid + lambda * x.iter().map(|v| v * v).sum::<f64>())
}

/// Ratio of the candidate's regression objective to the oracle's.
///
/// When the oracle objective is below `1e-14 ‖B‖_F²` the system counts as
/// consistent: the ratio is 1 if the candidate is below `1e-12 ‖B‖_F²` and
/// `+∞` (flagged `ConsistentSystemMiss`) otherwise.
pub fn approx_ratio(
    a: &DenseMatrix,
    b: &DenseMatrix,
    candidate: &DenseMatrix,
    oracle: &DenseMatrix,
    threshold: f64,
) -> Result<VerificationReport> {
    let c = regression_objective(a, b, candidate)?;
    let o = regression_objective(a, b, oracle)?;
    Ok(ratio_report(c, o, b.frobenius_sq(), threshold))
}

/// Ridge-objective counterpart of [`approx_ratio`].
pub fn ridge_ratio(
    a: &DenseMatrix,
    b: &[f64],
    lambda: f64,
    candidate: &[f64],
    oracle: &[f64],
    threshold: f64,
) -> Result<VerificationReport> {
    let c = ridge_objective(a, b, lambda, candidate)?;
    let o = ridge_objective(a, b, lambda, oracle)?;
    let scale: f64 = b.iter().map(|v| v * v).sum();
    Ok(ratio_report(c, o, scale, threshold))
}

/// Aggregate of a seeded batch of checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub kind: CheckKind,
    pub trials: usize,
    pub passes: usize,
    #[serde(serialize_with = "serialize_f64")]
    pub pass_fraction: f64,
    #[serde(serialize_with = "serialize_f64")]
    pub min_pass: f64,
    pub passed: bool,
    pub base_seed: u64,
    #[serde(serialize_with = "serialize_f64")]
    pub max_statistic: f64,
}

impl TrialSummary {
    /// Summarizes reports in trial order. Order-independent in value.
    pub fn from_reports(reports: &[VerificationReport], base_seed: u64, min_pass: f64) -> Self {
        let trials = reports.len();
        let passes = reports.iter().filter(|r| r.passed).count();
        let pass_fraction = if trials == 0 { 0.0 } else { passes as f64 / trials as f64 };
        Self {
            kind: reports.first().map_or(CheckKind::Ratio, |r| r.kind),
            trials,
            passes,
            pass_fraction,
            min_pass,
            passed: trials > 0 && pass_fraction >= min_pass,
            base_seed,
            max_statistic: reports.iter().map(|r| r.statistic).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn failure_rate(&self) -> f64 {
        1.0 - self.pass_fraction
    }
}

/// Runs `check` once per trial with seed `derive_seed(base_seed, t)`.
pub fn run_trials<F>(
    trials: usize,
    base_seed: u64,
    min_pass: f64,
    mut check: F,
) -> Result<(Vec<VerificationReport>, TrialSummary)>
where
    F: FnMut(u64) -> Result<VerificationReport>,
{
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let reports = (0..trials as u64)
        .map(|t| check(derive_seed(base_seed, t)))
        .collect::<Result<Vec<_>>>()?;
    let summary = TrialSummary::from_reports(&reports, base_seed, min_pass);
    Ok((reports, summary))
}
