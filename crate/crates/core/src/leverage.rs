//! Leverage scores, ridge leverage scores, and statistical dimension.

use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

use crate::densemat::{norm_sq, orthonormal_basis, spectral_norm, svd_factor, DenseMatrix};
use crate::error::{Error, Result};
use crate::fmt::{serialize_f64, sig17};
use crate::rng::stream_rng;

/// Estimator accuracy used when callers ask for approximate scores without
/// naming one.
pub const DEFAULT_EPS0: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Exact,
    Approximate,
}

/// Per-row leverage scores of a matrix.
///
/// In exact mode the scores are squared row norms of an orthonormal basis and
/// sum to the rank. In approximate mode every score is within a factor
/// `1 ± eps0` of the exact one.
#[derive(Debug, Clone, PartialEq)]
pub struct LeverageProfile {
    pub scores: Vec<f64>,
    pub mode: ScoreMode,
    pub eps0: f64,
    pub rank: usize,
    pub score_sum: f64,
}

impl LeverageProfile {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// CSV lines `row_index,score` with 0-based indices.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.scores.len() * 28);
        for (i, &v) in self.scores.iter().enumerate() {
            let _ = writeln!(s, "{i},{}", sig17(v));
        }
        s
    }

    /// Applies independent multiplicative noise `u_i ~ U[1 - eps0, 1 + eps0]`.
    pub fn perturbed(&self, eps0: f64, seed: u64) -> Result<Self> {
        let scores = perturb_scores(&self.scores, eps0, seed)?;
        Ok(Self {
            score_sum: scores.iter().sum(),
            scores,
            mode: ScoreMode::Approximate,
            eps0,
            rank: self.rank,
        })
    }
}

pub(crate) fn check_eps0(eps0: f64) -> Result<()> {
    if eps0 > 0.0 && eps0 < 1.0 {
        Ok(())
    } else {
        Err(Error::Eps0OutOfRange(eps0))
    }
}

/// Scales each score by an independent uniform draw from `[1 - eps0, 1 + eps0]`.
pub fn perturb_scores(scores: &[f64], eps0: f64, seed: u64) -> Result<Vec<f64>> {
    check_eps0(eps0)?;
    let mut rng = stream_rng(seed);
    Ok(scores
        .iter()
        .map(|&s| s * rng.random_range(1.0 - eps0..=1.0 + eps0))
        .collect())
}

/// `σ_i = ‖U_{i,*}‖²` for the pivoted-QR orthonormal basis `U` of `a`.
pub fn exact_leverage_scores(a: &DenseMatrix) -> Result<LeverageProfile> {
    let basis = orthonormal_basis(a)?;
    Ok(profile_from_basis(&basis.basis, basis.rank))
}

pub(crate) fn profile_from_basis(u: &DenseMatrix, rank: usize) -> LeverageProfile {
    let scores: Vec<f64> = (0..u.rows()).map(|i| norm_sq(u.row(i))).collect();
    LeverageProfile {
        score_sum: scores.iter().sum(),
        scores,
        mode: ScoreMode::Exact,
        eps0: 0.0,
        rank,
    }
}

/// Classical stand-in for a `(1 ± eps0)` leverage-score estimator: exact
/// scores times seeded uniform noise. Deterministic in `(a, eps0, seed)`.
pub fn approx_leverage_scores(a: &DenseMatrix, eps0: f64, seed: u64) -> Result<LeverageProfile> {
    check_eps0(eps0)?;
    exact_leverage_scores(a)?.perturbed(eps0, seed)
}

/// `sd_λ = Σ 1 / (1 + λ / σ_i²)` over the given singular values.
pub fn statistical_dimension(singular_values: &[f64], lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::NegativeLambda(lambda));
    }
    Ok(singular_values
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| 1.0 / (1.0 + lambda / (s * s)))
        .sum())
}

/// Top block `U₁` of the orthonormal basis of `[A; √λ I]` and the quantities
/// derived from it.
///
/// Built from the thin SVD `A = U Σ Vᵀ` as `U₁ = U Σ (Σ² + λ)^{-1/2}`, without
/// forming the stacked matrix.
#[derive(Debug, Clone)]
pub struct RidgeBasis {
    /// `n × k`, `k = rank(A)`. Null directions of `A` contribute zero columns
    /// and are dropped.
    pub u1: DenseMatrix,
    pub lambda: f64,
    pub singular_values: Vec<f64>,
    pub sd: f64,
    /// `τ_i = ‖(U₁)_{i,*}‖²`.
    pub ridge_scores: Vec<f64>,
    /// Diagonal of `(ΣᵀΣ + λ I_d)^{-1/2}`, length `d`.
    pub shrink: Vec<f64>,
    right_singular: DenseMatrix,
}

/// JSON summary of a [`RidgeBasis`].
#[derive(Debug, Clone, Serialize)]
pub struct RidgeSummary {
    #[serde(serialize_with = "serialize_f64")]
    pub lambda: f64,
    #[serde(serialize_with = "serialize_f64")]
    pub sd: f64,
    #[serde(serialize_with = "serialize_f64")]
    pub spectral_norm_u1: f64,
    #[serde(serialize_with = "serialize_f64")]
    pub frob_sq_u1: f64,
}

pub fn ridge_basis(a: &DenseMatrix, lambda: f64) -> Result<RidgeBasis> {
    if !(lambda > 0.0) {
        return Err(Error::NegativeLambda(lambda));
    }
    let f = svd_factor(a)?;
    let sv = f.singular_values.expect("svd route");
    let v = f.right_singular.expect("svd route");
    let d = a.cols();
    let shrink: Vec<f64> = (0..d)
        .map(|i| {
            let s = sv.get(i).copied().unwrap_or(0.0);
            1.0 / (s * s + lambda).sqrt()
        })
        .collect();
    let col_scale: Vec<f64> = sv.iter().zip(&shrink).map(|(s, dd)| s * dd).collect();
    let mut u1 = f.basis;
    for i in 0..u1.rows() {
        for (x, c) in u1.row_mut(i).iter_mut().zip(&col_scale) {
            *x *= c;
        }
    }
    let ridge_scores = (0..u1.rows()).map(|i| norm_sq(u1.row(i))).collect();
    Ok(RidgeBasis {
        sd: statistical_dimension(&sv, lambda)?,
        u1,
        lambda,
        singular_values: sv,
        ridge_scores,
        shrink,
        right_singular: v,
    })
}

impl RidgeBasis {
    /// `1 / √(1 + λ / σ₁²)`, the spectral norm `U₁` must have.
    pub fn predicted_spectral_norm(&self) -> f64 {
        let s1 = self.singular_values[0];
        1.0 / (1.0 + self.lambda / (s1 * s1)).sqrt()
    }

    /// Stacked `[U Σ D; V √λ D]` restricted to the rank of `A`; its columns
    /// are orthonormal.
    pub fn augmented_basis(&self) -> DenseMatrix {
        let k = self.singular_values.len();
        let root = self.lambda.sqrt();
        let mut bottom = self.right_singular.clone();
        for i in 0..bottom.rows() {
            for (x, dd) in bottom.row_mut(i).iter_mut().zip(&self.shrink[..k]) {
                *x *= root * dd;
            }
        }
        self.u1.vstack(&bottom).expect("both blocks have k columns")
    }

    pub fn summary(&self) -> RidgeSummary {
        RidgeSummary {
            lambda: self.lambda,
            sd: self.sd,
            spectral_norm_u1: spectral_norm(&self.u1),
            frob_sq_u1: self.u1.frobenius_sq(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `a_iᵀ (AᵀA)⁻¹ a_i` via an explicit inverse, independent of the QR path.
    fn hat_diagonal(a: &DenseMatrix) -> Vec<f64> {
        let g = a.gram().to_nalgebra().try_inverse().unwrap();
        (0..a.rows())
            .map(|i| {
                let r = nalgebra::DVector::from_row_slice(a.row(i));
                r.dot(&(&g * &r))
            })
            .collect()
    }

    fn random(seed: u64, n: usize, d: usize) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn exact_examples() {
        let p = exact_leverage_scores(&DenseMatrix::identity(3)).unwrap();
        assert!(p.scores.iter().all(|&s| (s - 1.0).abs() < 1e-15));
        assert_eq!(p.rank, 3);

        let p = exact_leverage_scores(&DenseMatrix::from_rows(&[&[1.0], &[1.0]])).unwrap();
        assert!(p.scores.iter().all(|&s| (s - 0.5).abs() < 1e-15));

        let a = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let oracle = hat_diagonal(&a);
        let p = exact_leverage_scores(&a).unwrap();
        for (s, o) in p.scores.iter().zip(&oracle) {
            assert!((o - 2.0 / 3.0).abs() < 1e-14);
            assert!((s - o).abs() < 1e-14);
        }
        assert_eq!(exact_leverage_scores(&DenseMatrix::zeros(2, 2)).unwrap_err(), Error::AllZeroMatrix);
    }

    #[test]
    fn matches_hat_matrix_oracle_on_random_inputs() {
        for seed in 0..20 {
            let a = random(seed, 40, 6);
            let p = exact_leverage_scores(&a).unwrap();
            for (s, o) in p.scores.iter().zip(hat_diagonal(&a)) {
                assert!((s - o).abs() < 1e-12);
            }
            assert!((p.score_sum - 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficient_scores_sum_to_rank() {
        let base = random(1, 30, 3);
        let a = DenseMatrix::from_fn(30, 5, |i, j| if j < 3 { base[(i, j)] } else { base[(i, 0)] - base[(i, j - 2)] });
        let p = exact_leverage_scores(&a).unwrap();
        assert_eq!(p.rank, 3);
        assert!((p.score_sum - 3.0).abs() < 1e-10);
    }

    #[test]
    fn approximate_examples() {
        let a = random(2, 50, 4);
        let exact = exact_leverage_scores(&a).unwrap();
        let tiny = approx_leverage_scores(&a, 1e-12, 9).unwrap();
        for (t, e) in tiny.scores.iter().zip(&exact.scores) {
            assert!(((t - e) / e).abs() <= 1e-10);
        }
        let p = approx_leverage_scores(&a, 0.3, 1).unwrap();
        assert_eq!(p.mode, ScoreMode::Approximate);
        for (t, e) in p.scores.iter().zip(&exact.scores) {
            let r = t / e;
            assert!((0.7..=1.3).contains(&r), "{r}");
        }
        assert_eq!(p, approx_leverage_scores(&a, 0.3, 1).unwrap());
        assert_ne!(p, approx_leverage_scores(&a, 0.3, 2).unwrap());
        for bad in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(matches!(approx_leverage_scores(&a, bad, 1), Err(Error::Eps0OutOfRange(_))));
        }
    }

    #[test]
    fn statistical_dimension_examples() {
        assert_eq!(statistical_dimension(&[3.0, 2.0, 1.0], 0.0).unwrap(), 3.0);
        assert!((statistical_dimension(&[1.0; 4], 1.0).unwrap() - 2.0).abs() < 1e-15);
        // 1/(1 + 2/4) + 1/(1 + 2/1) = 2/3 + 1/3.
        assert!((statistical_dimension(&[2.0, 1.0], 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(statistical_dimension(&[1.0], -1.0), Err(Error::NegativeLambda(_))));
    }

    #[test]
    fn ridge_identity_example() {
        let rb = ridge_basis(&DenseMatrix::identity(2), 1.0).unwrap();
        assert!(rb.ridge_scores.iter().all(|&t| (t - 0.5).abs() < 1e-15));
        assert!((rb.sd - 1.0).abs() < 1e-15);
        assert!((spectral_norm(&rb.u1) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ridge_diagonal_example() {
        let rb = ridge_basis(&DenseMatrix::from_diagonal(&[2.0, 1.0]), 2.0).unwrap();
        assert!((spectral_norm(&rb.u1) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((rb.u1.frobenius_sq() - 1.0).abs() < 1e-15);
        let s = rb.summary();
        assert!((s.frob_sq_u1 - s.sd).abs() < 1e-15);
        let json = serde_json::to_value(&s).unwrap();
        assert!(json.get("spectral_norm_u1").is_some());
    }

    #[test]
    fn ridge_small_lambda_recovers_leverage() {
        let a = random(4, 60, 5);
        let f = svd_factor(&a).unwrap();
        let smin = *f.singular_values.unwrap().last().unwrap();
        let rb = ridge_basis(&a, 1e-14 * smin * smin).unwrap();
        let lev = exact_leverage_scores(&a).unwrap();
        for (t, s) in rb.ridge_scores.iter().zip(&lev.scores) {
            assert!((t - s).abs() < 1e-6);
        }
    }

    #[test]
    fn ridge_rejects_nonpositive_lambda() {
        let a = random(5, 10, 2);
        assert!(matches!(ridge_basis(&a, 0.0), Err(Error::NegativeLambda(_))));
        assert!(matches!(ridge_basis(&a, -1.0), Err(Error::NegativeLambda(_))));
        assert_eq!(ridge_basis(&DenseMatrix::zeros(3, 2), 1.0).unwrap_err(), Error::AllZeroMatrix);
    }

    #[test]
    fn sd_decreases_in_lambda() {
        let a = random(6, 40, 5);
        let sds: Vec<f64> = [0.01, 0.1, 1.0, 10.0].iter().map(|&l| ridge_basis(&a, l).unwrap().sd).collect();
        assert!(sds.windows(2).all(|w| w[0] > w[1]), "{sds:?}");
        assert!(sds[0] <= 5.0);
    }

    #[test]
    fn profile_csv_lines() {
        let p = exact_leverage_scores(&DenseMatrix::from_rows(&[&[1.0], &[1.0]])).unwrap();
        let csv = p.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("1,"));
    }
}
