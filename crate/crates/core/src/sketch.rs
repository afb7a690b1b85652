//! Leverage-score sampling distributions and the sampling-and-rescaling
//! operator.
//!
//! A [`SketchOperator`] holds `m` independent draws `(i_t, w_t)` with
//! `w_t = 1 / √(m q_{i_t})`. As a linear map it is the `m × n` matrix whose row
//! `t` is `w_t e_{i_t}ᵀ`, which satisfies `E[SᵀS] = I_n`. The `n × n` diagonal
//! form is never built.

use std::fmt::Write as _;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::densemat::{DenseMatrix, RowSource};
use crate::error::{Error, Result};
use crate::fmt::sig17;
use crate::leverage::{check_eps0, LeverageProfile, ScoreMode};
use crate::rng::stream_rng;

pub const DEFAULT_C_SE: f64 = 40.0;
pub const DEFAULT_C_AMP: f64 = 40.0;

/// Sample-count constants and seed for one sketch.
///
/// `c_se` multiplies the `d ln d` embedding term and `c_amp` the `d / ε`
/// matrix-product term of the sample count. `oversample_c` scales the raw
/// probabilities `c σ_i / d`; it cancels once they are normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchConfig {
    pub oversample_c: f64,
    /// Fixed sample count; `None` uses [`SketchConfig::recommended_m`].
    pub m: Option<usize>,
    pub c_se: f64,
    pub c_amp: f64,
    pub seed: u64,
    /// Replace sampling by the identity sketch (every row once, weight 1).
    pub identity: bool,
}

impl Default for SketchConfig {
    fn default() -> Self {
        Self {
            oversample_c: 1.0,
            m: None,
            c_se: DEFAULT_C_SE,
            c_amp: DEFAULT_C_AMP,
            seed: 0,
            identity: false,
        }
    }
}

impl SketchConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let constants_ok = [self.oversample_c, self.c_se, self.c_amp]
            .iter()
            .all(|&c| c >= 1.0 && c.is_finite());
        if !constants_ok {
            return Err(Error::InvalidParameter("sketch constants must be finite and >= 1".into()));
        }
        if self.m == Some(0) {
            return Err(Error::InvalidParameter("m must be at least 1".into()));
        }
        Ok(())
    }

    /// `⌈c_se · k ln(k + 2) + c_amp · k / ε⌉` with `k = d`, or `k = sd` when a
    /// statistical dimension is given (ridge). Never below 1.
    pub fn recommended_m(&self, d: usize, eps: f64, sd: Option<f64>) -> Result<usize> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::EpsOutOfRange(eps));
        }
        if d == 0 {
            return Err(Error::NonPositiveDimension);
        }
        let k = sd.unwrap_or(d as f64);
        let m = (self.c_se * k * (k + 2.0).ln() + self.c_amp * k / eps).ceil();
        Ok((m as usize).max(1))
    }

    pub fn sample_count(&self, d: usize, eps: f64, sd: Option<f64>) -> Result<usize> {
        match self.m {
            Some(m) => Ok(m),
            None => self.recommended_m(d, eps, sd),
        }
    }
}

/// [`SketchConfig::recommended_m`] with the default constants.
pub fn recommended_m(d: usize, eps: f64, sd: Option<f64>) -> Result<usize> {
    SketchConfig::default().recommended_m(d, eps, sd)
}

/// Sampling distribution from a leverage profile.
///
/// Exact scores normalize directly. Approximate scores are first inflated by
/// `1 / (1 - eps0)` so they dominate the exact ones, then normalized.
pub fn build_distribution(profile: &LeverageProfile) -> Result<Vec<f64>> {
    let eps0 = match profile.mode {
        ScoreMode::Exact => 0.0,
        ScoreMode::Approximate => profile.eps0,
    };
    distribution_from_scores(&profile.scores, eps0, 1.0)
}

/// Normalizes `c · s_i / (1 - eps0)`. `eps0 = 0` means the scores are exact.
pub fn distribution_from_scores(scores: &[f64], eps0: f64, oversample_c: f64) -> Result<Vec<f64>> {
    if eps0 != 0.0 {
        check_eps0(eps0)?;
    }
    if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidParameter("scores must be finite and nonnegative".into()));
    }
    let inflation = oversample_c / (1.0 - eps0);
    let raw: Vec<f64> = scores.iter().map(|s| s * inflation).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllZeroScores);
    }
    Ok(raw.into_iter().map(|p| p / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchOperator {
    source_rows: usize,
    samples: Vec<Sample>,
    /// Distribution the samples were drawn from; absent for explicit sketches.
    q: Option<Vec<f64>>,
    seed: Option<u64>,
}

fn validate_distribution(q: &[f64]) -> Result<()> {
    if q.is_empty() {
        return Err(Error::InvalidParameter("empty distribution".into()));
    }
    if q.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidParameter("distribution entries must be finite and nonnegative".into()));
    }
    let total: f64 = q.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("distribution sums to {total}")));
    }
    Ok(())
}

/// `m` i.i.d. draws from `q` by inverse CDF on the seeded stream.
pub fn draw_sketch(q: &[f64], m: usize, seed: u64) -> Result<SketchOperator> {
    validate_distribution(q)?;
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let mut cdf = Vec::with_capacity(q.len());
    let mut acc = 0.0;
    for &p in q {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    let last_positive = q.iter().rposition(|&p| p > 0.0).expect("distribution has mass");
    let mut rng = stream_rng(seed);
    let samples = (0..m)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            // First index whose cumulative mass exceeds u; zero-mass rows are
            // never selected because their cdf equals the predecessor's.
            let index = cdf.partition_point(|&c| c <= u).min(last_positive);
            Sample {
                index,
                weight: 1.0 / (m as f64 * q[index]).sqrt(),
            }
        })
        .collect();
    Ok(SketchOperator {
        source_rows: q.len(),
        samples,
        q: Some(q.to_vec()),
        seed: Some(seed),
    })
}

/// Rows `w_t · M_{i_t,*}` stacked into an `m × cols` matrix.
pub fn apply_sketch<M: RowSource + ?Sized>(s: &SketchOperator, m: &M) -> Result<DenseMatrix> {
    if m.n_rows() != s.source_rows {
        return Err(Error::DimensionMismatch(format!(
            "sketch over {} rows applied to a matrix with {}",
            s.source_rows,
            m.n_rows()
        )));
    }
    let cols = m.n_cols();
    let mut data = Vec::with_capacity(s.samples.len() * cols);
    for sample in &s.samples {
        data.extend(m.row(sample.index).iter().map(|x| x * sample.weight));
    }
    DenseMatrix::new(s.samples.len(), cols, data)
}

impl SketchOperator {
    /// Every row once with weight 1: `S = I_n`, consistent with uniform `q`.
    pub fn identity(n: usize) -> Self {
        Self {
            source_rows: n,
            samples: (0..n).map(|index| Sample { index, weight: 1.0 }).collect(),
            q: Some(vec![1.0 / n as f64; n]),
            seed: None,
        }
    }

    /// An explicit sketch with arbitrary weights, not tied to a distribution.
    pub fn from_samples(source_rows: usize, samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("a sketch needs at least one sample".into()));
        }
        if let Some(s) = samples.iter().find(|s| s.index >= source_rows) {
            return Err(Error::DimensionMismatch(format!(
                "sample index {} outside {source_rows} rows",
                s.index
            )));
        }
        Ok(Self {
            source_rows,
            samples,
            q: None,
            seed: None,
        })
    }

    pub fn source_rows(&self) -> usize {
        self.source_rows
    }

    pub fn m(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn distribution(&self) -> Option<&[f64]> {
        self.q.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Short SHA-256 fingerprint of the distribution's bit patterns.
    pub fn distribution_hash(&self) -> Option<String> {
        self.q.as_ref().map(|q| {
            let mut h = Sha256::new();
            for p in q {
                h.update(p.to_le_bytes());
            }
            hex::encode(&h.finalize()[..8])
        })
    }

    /// Diagonal of `SᵀS` (row multiplicities times squared weights), length `n`.
    pub fn gram_diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.source_rows];
        for s in &self.samples {
            diag[s.index] += s.weight * s.weight;
        }
        diag
    }

    /// `# m=…, seed=…, q_hash=…` then one `t,i,w` line per sample.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.samples.len() * 32 + 64);
        let seed = self.seed.map_or("none".to_string(), |x| x.to_string());
        let hash = self.distribution_hash().unwrap_or_else(|| "none".into());
        let _ = writeln!(s, "# m={}, seed={seed}, q_hash={hash}", self.m());
        for (t, sample) in self.samples.iter().enumerate() {
            let _ = writeln!(s, "{t},{},{}", sample.index, sig17(sample.weight));
        }
        s
    }
}
