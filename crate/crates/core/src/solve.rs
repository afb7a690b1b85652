//! Sketch-and-solve for linear, multiple, and ridge regression.
//!
//! Each solver reads `A` once to get (ridge) leverage scores, samples
//! `m` rows from the induced distribution, and solves the `m`-row problem
//! exactly. Objectives are always reported on the full problem.

use serde::Serialize;

use crate::densemat::{exact_least_squares, DenseMatrix, PivotedQr};
use crate::error::{Error, Result};
use crate::fmt::{serialize_f64, serialize_opt_f64};
use crate::leverage::{exact_leverage_scores, perturb_scores, ridge_basis};
use crate::qcost::{rows_quantum, CostModelInputs, CountingMatrix, QueryLedger};
use crate::rng::{derive_seed, stream};
use crate::sketch::{apply_sketch, distribution_from_scores, draw_sketch, SketchConfig, SketchOperator};
use crate::verify::{regression_objective, ridge_objective};

/// Fresh sketches drawn after the first before giving up on a rank collapse.
pub const MAX_RETRIES: usize = 3;

/// Ledger stage names.
pub mod stage {
    pub const LEVERAGE: &str = "leverage_scores";
    pub const RIDGE_BASIS: &str = "ridge_basis";
    pub const SKETCH: &str = "sketch_rows";
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ScoresMode {
    #[default]
    Exact,
    /// Scores perturbed within `1 ± eps0`.
    Approximate { eps0: f64 },
}

impl ScoresMode {
    fn eps0(self) -> f64 {
        match self {
            ScoresMode::Exact => 0.0,
            ScoresMode::Approximate { eps0 } => eps0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionMode {
    Linear,
    Multiple,
    Ridge,
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::EpsOutOfRange(eps))
    }
}

/// `min_X ‖A X − B‖_F` with target accuracy `ε`.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub eps: f64,
}

impl RegressionProblem {
    pub fn new(a: DenseMatrix, b: DenseMatrix, eps: f64) -> Result<Self> {
        if a.rows() != b.rows() {
            return Err(Error::DimensionMismatch(format!(
                "A has {} rows, B has {}",
                a.rows(),
                b.rows()
            )));
        }
        check_eps(eps)?;
        Ok(Self { a, b, eps })
    }

    pub fn mode(&self) -> RegressionMode {
        if self.b.cols() == 1 {
            RegressionMode::Linear
        } else {
            RegressionMode::Multiple
        }
    }
}

/// `min_x ‖A x − b‖² + λ‖x‖²` with `λ > 0`.
#[derive(Debug, Clone)]
pub struct RidgeProblem {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub lambda: f64,
    pub eps: f64,
}

impl RidgeProblem {
    pub fn new(a: DenseMatrix, b: Vec<f64>, lambda: f64, eps: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::NegativeLambda(lambda));
        }
        if a.rows() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "A has {} rows, b has length {}",
                a.rows(),
                b.len()
            )));
        }
        check_eps(eps)?;
        Ok(Self { a, b, lambda, eps })
    }
}

#[derive(Debug, Clone)]
pub struct RegressionSolution {
    /// `d × N` (`d × 1` for linear and ridge).
    pub x: DenseMatrix,
    /// Full-problem objective of `x` (squared; ridge includes the penalty).
    pub objective: f64,
    pub m_used: usize,
    pub retries: usize,
    pub seed: u64,
    pub ledger: QueryLedger,
    /// The sketch that produced `x`.
    pub sketch: SketchOperator,
}

/// Flat JSON record of a solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    pub mode: RegressionMode,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    #[serde(serialize_with = "serialize_f64")]
    pub eps: f64,
    #[serde(serialize_with = "serialize_opt_f64", skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub m_used: usize,
    pub retries: usize,
    pub seed: u64,
    #[serde(serialize_with = "serialize_f64")]
    pub objective: f64,
    #[serde(serialize_with = "serialize_opt_f64", skip_serializing_if = "Option::is_none")]
    pub oracle_objective: Option<f64>,
    #[serde(serialize_with = "serialize_opt_f64", skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    pub row_queries_classical: u64,
    #[serde(serialize_with = "serialize_f64")]
    pub row_queries_quantum_model: f64,
}

impl SolutionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

impl RegressionSolution {
    pub fn report(&self, mode: RegressionMode, n: usize, eps: f64, lambda: Option<f64>) -> SolutionReport {
        SolutionReport {
            mode,
            n,
            d: self.x.rows(),
            big_n: self.x.cols(),
            eps,
            lambda,
            m_used: self.m_used,
            retries: self.retries,
            seed: self.seed,
            objective: self.objective,
            oracle_objective: None,
            ratio: None,
            row_queries_classical: self.ledger.rows_read_classical(),
            row_queries_quantum_model: self.ledger.rows_quantum_model,
        }
    }
}

/// Sampling distribution and sample count shared by the retry loop.
struct Plan {
    q: Vec<f64>,
    m: usize,
    /// A sketch whose `SA` has lower rank than this is resampled.
    required_rank: usize,
}

fn quantum_model(n: usize, d: usize, eps: f64, m: usize) -> f64 {
    let mut inputs = CostModelInputs::new(n as u64, d as u64, eps);
    inputs.m = Some(m as u64);
    rows_quantum(&inputs)
}

/// Draws sketches until `rank(SA)` reaches the plan's requirement, then hands
/// `SA` and its QR to `finish`.
fn sample_until_full_rank<T>(
    counting: &CountingMatrix<'_>,
    plan: &Plan,
    seed: u64,
    ledger: &mut QueryLedger,
    rank_floor: impl Fn(&SketchOperator) -> usize,
    mut finish: impl FnMut(&SketchOperator, DenseMatrix, PivotedQr) -> Result<T>,
) -> Result<(T, SketchOperator, usize)> {
    let mut last_rank = 0;
    for attempt in 0..=MAX_RETRIES {
        let s = draw_sketch(&plan.q, plan.m, derive_seed(seed, stream::SKETCH + attempt as u64))?;
        let sa = apply_sketch(&s, counting)?;
        ledger.record(stage::SKETCH, counting.take_reads());
        let qr = PivotedQr::new(&sa);
        let needed = plan.required_rank.min(rank_floor(&s));
        if qr.rank() < needed {
            last_rank = qr.rank();
            continue;
        }
        let out = finish(&s, sa, qr)?;
        return Ok((out, s, attempt));
    }
    Err(Error::SketchRankCollapse {
        retries: MAX_RETRIES,
        sketched_rank: last_rank,
        rank: plan.required_rank,
    })
}

/// `X′ = (SA)†(SB)` for `S` drawn from the leverage-score distribution of `A`.
///
/// A sketch with `rank(SA) < rank(A)` is redrawn with a fresh derived seed,
/// at most [`MAX_RETRIES`] times.
pub fn solve_multiple(
    p: &RegressionProblem,
    cfg: &SketchConfig,
    scores: ScoresMode,
) -> Result<RegressionSolution> {
    cfg.validate()?;
    let (n, d) = p.a.shape();
    let counting = CountingMatrix::new(&p.a);
    let mut ledger = QueryLedger::default();

    if cfg.identity {
        let s = SketchOperator::identity(n);
        let sa = apply_sketch(&s, &counting)?;
        ledger.record(stage::SKETCH, counting.take_reads());
        let x = exact_least_squares(&sa, &p.b)?;
        ledger.rows_quantum_model = quantum_model(n, d, p.eps, n);
        return Ok(RegressionSolution {
            objective: regression_objective(&p.a, &p.b, &x)?,
            x,
            m_used: n,
            retries: 0,
            seed: cfg.seed,
            ledger,
            sketch: s,
        });
    }

    let mut profile = exact_leverage_scores(counting.full_pass())?;
    ledger.record(stage::LEVERAGE, counting.take_reads());
    if let ScoresMode::Approximate { eps0 } = scores {
        profile = profile.perturbed(eps0, derive_seed(cfg.seed, stream::SCORE_NOISE))?;
    }
    let plan = Plan {
        q: distribution_from_scores(&profile.scores, scores.eps0(), cfg.oversample_c)?,
        m: cfg.sample_count(d, p.eps, None)?,
        required_rank: profile.rank,
    };

    let (x, sketch, retries) = sample_until_full_rank(
        &counting,
        &plan,
        cfg.seed,
        &mut ledger,
        |_| usize::MAX,
        |s, sa, qr| {
            let sb = apply_sketch(s, &p.b)?;
            if qr.rank() == d {
                Ok(qr.solve(&sb))
            } else {
                exact_least_squares(&sa, &sb)
            }
        },
    )?;
    ledger.rows_quantum_model = quantum_model(n, d, p.eps, plan.m);
    Ok(RegressionSolution {
        objective: regression_objective(&p.a, &p.b, &x)?,
        x,
        m_used: plan.m,
        retries,
        seed: cfg.seed,
        ledger,
        sketch,
    })
}

/// [`solve_multiple`] restricted to a single right-hand side.
pub fn solve_linear(
    p: &RegressionProblem,
    cfg: &SketchConfig,
    scores: ScoresMode,
) -> Result<RegressionSolution> {
    if p.b.cols() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "linear regression takes one right-hand side, got {}",
            p.b.cols()
        )));
    }
    solve_multiple(p, cfg, scores)
}

/// Ridge regression by sampling rows of `A` with probability proportional to
/// the ridge leverage scores `τ_i`, then solving
/// `min ‖(SA) x − S b‖² + λ‖x‖²` through the stacked system `[SA; √λ I]`.
///
/// The `√λ I` block is never sampled. Because `λ > 0` keeps the sketched
/// problem well posed even when `m < d`, a sketch is only redrawn when its
/// rows span fewer directions than they could: `rank(SA) < min(rank(A),
/// distinct sampled rows)`.
pub fn solve_ridge(p: &RidgeProblem, cfg: &SketchConfig, scores: ScoresMode) -> Result<RegressionSolution> {
    cfg.validate()?;
    let (n, d) = p.a.shape();
    let counting = CountingMatrix::new(&p.a);
    let mut ledger = QueryLedger::default();
    let root = p.lambda.sqrt();
    let penalty_block = DenseMatrix::identity(d).scale(root);
    let zeros = DenseMatrix::zeros(d, 1);
    let b = DenseMatrix::column_vector(&p.b);

    let solve_sketched = |s: &SketchOperator, sa: DenseMatrix| -> Result<DenseMatrix> {
        let sb = apply_sketch(s, &b)?;
        let stacked = sa.vstack(&penalty_block)?;
        Ok(PivotedQr::new(&stacked).solve(&sb.vstack(&zeros)?))
    };

    if cfg.identity {
        let s = SketchOperator::identity(n);
        let sa = apply_sketch(&s, &counting)?;
        ledger.record(stage::SKETCH, counting.take_reads());
        let x = solve_sketched(&s, sa)?;
        ledger.rows_quantum_model = quantum_model(n, d, p.eps, n);
        return Ok(RegressionSolution {
            objective: ridge_objective(&p.a, &p.b, p.lambda, x.as_slice())?,
            x,
            m_used: n,
            retries: 0,
            seed: cfg.seed,
            ledger,
            sketch: s,
        });
    }

    let rb = ridge_basis(counting.full_pass(), p.lambda)?;
    ledger.record(stage::RIDGE_BASIS, counting.take_reads());
    let tau = match scores {
        ScoresMode::Exact => rb.ridge_scores.clone(),
        ScoresMode::Approximate { eps0 } => {
            perturb_scores(&rb.ridge_scores, eps0, derive_seed(cfg.seed, stream::SCORE_NOISE))?
        }
    };
    let plan = Plan {
        q: distribution_from_scores(&tau, scores.eps0(), cfg.oversample_c)?,
        m: cfg.sample_count(d, p.eps, Some(rb.sd))?,
        required_rank: rb.singular_values.len(),
    };

    let distinct_rows = |s: &SketchOperator| {
        let mut idx: Vec<usize> = s.samples().iter().map(|x| x.index).collect();
        idx.sort_unstable();
        idx.dedup();
        idx.len()
    };
    let (x, sketch, retries) = sample_until_full_rank(
        &counting,
        &plan,
        cfg.seed,
        &mut ledger,
        distinct_rows,
        |s, sa, _| solve_sketched(s, sa),
    )?;
    let mut inputs = CostModelInputs::new(n as u64, d as u64, p.eps);
    inputs.m = Some(plan.m as u64);
    ledger.rows_quantum_model = rows_quantum(&inputs);
    Ok(RegressionSolution {
        objective: ridge_objective(&p.a, &p.b, p.lambda, x.as_slice())?,
        x,
        m_used: plan.m,
        retries,
        seed: cfg.seed,
        ledger,
        sketch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densemat::{exact_ridge, spectral_norm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(seed: u64, n: usize, d: usize) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
    }

    fn noisy_rhs(a: &DenseMatrix, cols: usize, seed: u64) -> DenseMatrix {
        let x = gaussian(seed, a.cols(), cols);
        a.matmul(&x).unwrap().add(&gaussian(seed + 1, a.rows(), cols)).unwrap()
    }

    #[test]
    fn identity_override_matches_oracle() {
        let a = gaussian(1, 200, 5);
        let b = noisy_rhs(&a, 3, 2);
        let p = RegressionProblem::new(a.clone(), b.clone(), 0.5).unwrap();
        let cfg = SketchConfig {
            identity: true,
            ..SketchConfig::default()
        };
        let sol = solve_multiple(&p, &cfg, ScoresMode::Exact).unwrap();
        let oracle = exact_least_squares(&a, &b).unwrap();
        assert!(sol.x.sub(&oracle).unwrap().frobenius() <= 1e-10 * oracle.frobenius());
        assert_eq!(sol.m_used, 200);
    }

    #[test]
    fn consistent_system_has_tiny_objective() {
        let a = gaussian(3, 300, 4);
        let p = RegressionProblem::new(a.clone(), a.clone(), 0.5).unwrap();
        let sol = solve_multiple(&p, &SketchConfig::with_seed(1), ScoresMode::Exact).unwrap();
        assert!(sol.objective <= 1e-16 * a.frobenius_sq() * 100.0, "{}", sol.objective);

        let xs = DenseMatrix::column_vector(&[1.0, -2.0, 0.5, 3.0]);
        let b = a.matmul(&xs).unwrap();
        let p = RegressionProblem::new(a, b.clone(), 0.5).unwrap();
        let sol = solve_linear(&p, &SketchConfig::with_seed(2), ScoresMode::Exact).unwrap();
        assert!(sol.objective <= 1e-16 * b.frobenius_sq() * 100.0);
    }

    #[test]
    fn orthogonal_rhs_gives_zero_solution() {
        let a = DenseMatrix::from_rows(&[&[1.0], &[0.0]]);
        let b = DenseMatrix::column_vector(&[0.0, 1.0]);
        let p = RegressionProblem::new(a, b, 0.5).unwrap();
        for seed in 0..5 {
            let sol = solve_linear(&p, &SketchConfig::with_seed(seed), ScoresMode::Exact).unwrap();
            assert!(sol.x[(0, 0)].abs() < 1e-15);
            assert!((sol.objective - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_rejects_multiple_columns() {
        let a = gaussian(4, 20, 2);
        let p = RegressionProblem::new(a.clone(), gaussian(5, 20, 2), 0.5).unwrap();
        assert!(matches!(
            solve_linear(&p, &SketchConfig::default(), ScoresMode::Exact),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(RegressionProblem::new(a.clone(), gaussian(5, 19, 1), 0.5).is_err());
        assert!(matches!(RegressionProblem::new(a, gaussian(5, 20, 1), 1.5), Err(Error::EpsOutOfRange(_))));
    }

    #[test]
    fn sketched_normal_equations_hold() {
        let a = gaussian(6, 2000, 6);
        let b = noisy_rhs(&a, 2, 7);
        let p = RegressionProblem::new(a, b.clone(), 0.5).unwrap();
        let sol = solve_multiple(&p, &SketchConfig::with_seed(3), ScoresMode::Exact).unwrap();
        let sa = apply_sketch(&sol.sketch, &p.a).unwrap();
        let sb = apply_sketch(&sol.sketch, &b).unwrap();
        let lhs = sa.gram().matmul(&sol.x).unwrap();
        let rhs = sa.t_matmul(&sb).unwrap();
        assert!(lhs.sub(&rhs).unwrap().frobenius() <= 1e-8 * rhs.frobenius());
        // Sketched answer cannot beat the oracle.
        let oracle = regression_objective(&p.a, &b, &exact_least_squares(&p.a, &b).unwrap()).unwrap();
        assert!(sol.objective >= oracle - 1e-10);
    }

    #[test]
    fn same_seed_same_bits() {
        let a = gaussian(8, 500, 4);
        let b = noisy_rhs(&a, 1, 9);
        let p = RegressionProblem::new(a, b, 0.25).unwrap();
        for mode in [ScoresMode::Exact, ScoresMode::Approximate { eps0: 0.1 }] {
            let x1 = solve_linear(&p, &SketchConfig::with_seed(11), mode).unwrap().x;
            let x2 = solve_linear(&p, &SketchConfig::with_seed(11), mode).unwrap().x;
            let bits = |m: &DenseMatrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&x1), bits(&x2));
        }
    }

    #[test]
    fn rank_collapse_is_reported() {
        // One heavy row plus rows along a second direction; m = 1 can never
        // give rank 2.
        let a = DenseMatrix::from_fn(50, 2, |i, j| if i == 0 { [1.0, 0.0][j] } else { [0.0, 1.0][j] });
        let p = RegressionProblem::new(a, DenseMatrix::zeros(50, 1).add(&DenseMatrix::from_fn(50, 1, |i, _| i as f64)).unwrap(), 0.5).unwrap();
        let cfg = SketchConfig {
            m: Some(1),
            ..SketchConfig::default()
        };
        match solve_linear(&p, &cfg, ScoresMode::Exact) {
            Err(Error::SketchRankCollapse { retries, rank, .. }) => {
                assert_eq!(retries, MAX_RETRIES);
                assert_eq!(rank, 2);
            }
            other => panic!("expected collapse, got {other:?}"),
        }
    }

    #[test]
    fn ledger_counts_rows() {
        let a = gaussian(10, 1024, 8);
        let b = noisy_rhs(&a, 1, 11);
        let p = RegressionProblem::new(a, b, 0.5).unwrap();
        let sol = solve_linear(&p, &SketchConfig::with_seed(4), ScoresMode::Exact).unwrap();
        assert_eq!(sol.ledger.stage(stage::LEVERAGE), 1024);
        assert_eq!(sol.ledger.stage(stage::SKETCH), (sol.m_used * (sol.retries + 1)) as u64);
        let total: u64 = sol.ledger.stages.iter().map(|s| s.rows).sum();
        assert_eq!(total, sol.ledger.rows_read_classical());
        assert!(sol.ledger.rows_quantum_model > 0.0);
    }

    #[test]
    fn ridge_identity_matches_oracle() {
        let a = gaussian(12, 150, 5);
        let b = gaussian(13, 150, 1).into_vec();
        let lambda = 3.0;
        let p = RidgeProblem::new(a.clone(), b.clone(), lambda, 0.5).unwrap();
        let cfg = SketchConfig {
            identity: true,
            ..SketchConfig::default()
        };
        let sol = solve_ridge(&p, &cfg, ScoresMode::Exact).unwrap();
        let oracle = exact_ridge(&a, &b, lambda).unwrap();
        let diff: f64 = sol.x.as_slice().iter().zip(&oracle).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = oracle.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(diff <= 1e-10 * scale);
    }

    #[test]
    fn ridge_regularization_dominated_limit() {
        let a = gaussian(14, 400, 4);
        let b = gaussian(15, 400, 1).into_vec();
        let norm = spectral_norm(&a);
        let lambda = 1e12 * norm * norm;
        let p = RidgeProblem::new(a.clone(), b.clone(), lambda, 0.5).unwrap();
        let sol = solve_ridge(&p, &SketchConfig::with_seed(5), ScoresMode::Exact).unwrap();
        let atb = a.t_matmul(&DenseMatrix::column_vector(&b)).unwrap().frobenius();
        assert!(sol.x.frobenius() <= 1e-5 * atb / (norm * norm));
        let bb: f64 = b.iter().map(|v| v * v).sum();
        assert!(((sol.objective - bb) / bb).abs() <= 1e-6);
    }

    #[test]
    fn ridge_sample_count_shrinks_with_lambda() {
        let a = gaussian(16, 1000, 8);
        let b = gaussian(17, 1000, 1).into_vec();
        let norm2 = spectral_norm(&a).powi(2);
        let m_at = |scale: f64| {
            let p = RidgeProblem::new(a.clone(), b.clone(), scale * norm2, 0.25).unwrap();
            solve_ridge(&p, &SketchConfig::with_seed(1), ScoresMode::Exact).unwrap().m_used
        };
        assert!(m_at(1.0) <= m_at(0.01));
    }

    #[test]
    fn ridge_rejects_bad_lambda() {
        let a = gaussian(18, 10, 2);
        assert!(matches!(RidgeProblem::new(a.clone(), vec![0.0; 10], 0.0, 0.5), Err(Error::NegativeLambda(_))));
        assert!(matches!(RidgeProblem::new(a, vec![0.0; 9], 1.0, 0.5), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn report_json_fields() {
        let a = gaussian(19, 300, 3);
        let b = noisy_rhs(&a, 1, 20);
        let p = RegressionProblem::new(a, b, 0.5).unwrap();
        let sol = solve_linear(&p, &SketchConfig::with_seed(6), ScoresMode::Exact).unwrap();
        let json = sol.report(p.mode(), 300, 0.5, None).to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["mode", "n", "d", "N", "eps", "m_used", "retries", "seed", "objective", "row_queries_classical", "row_queries_quantum_model"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v.get("lambda").is_none());
        assert_eq!(v["mode"], "linear");
    }
}
