use lever_sketch_core::densemat::{exact_least_squares, exact_ridge, orthonormal_basis, spectral_norm, svd_factor};
use lever_sketch_core::leverage::{exact_leverage_scores, ridge_basis, statistical_dimension};
use lever_sketch_core::qcost::{rows_quantum, CostModelInputs};
use lever_sketch_core::sketch::{apply_sketch, build_distribution, draw_sketch, Sample};
use lever_sketch_core::verify::{approx_ratio, check_famp, check_samp, check_se, run_trials};
use lever_sketch_core::{DenseMatrix, SketchOperator};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

/// Random `n × d` matrix of rank at most `k`, scaled per column.
fn low_rank(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize) -> DenseMatrix {
    let scale: Vec<f64> = (0..d).map(|_| 10f64.powf(rng.random_range(-2.0..2.0))).collect();
    gaussian(rng, n, k)
        .matmul(&gaussian(rng, k, d))
        .unwrap()
        .matmul(&DenseMatrix::from_diagonal(&scale))
        .unwrap()
}

fn random_shape(rng: &mut ChaCha8Rng, max_n: usize, max_d: usize) -> DenseMatrix {
    let d = rng.random_range(1..=max_d);
    let n = rng.random_range(d..=max_n);
    let k = if rng.random_bool(0.3) { rng.random_range(1..=d) } else { d };
    low_rank(rng, n, d, k)
}

fn projector(u: &DenseMatrix) -> DenseMatrix {
    u.matmul(&u.transpose()).unwrap()
}

#[test]
fn norm_inequalities() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let a = random_shape(&mut rng, 256, 32);
        let k = orthonormal_basis(&a).unwrap().rank as f64;
        let spec = spectral_norm(&a);
        let frob = a.frobenius();
        assert!(spec <= frob * (1.0 + 1e-12), "{spec} > {frob}");
        assert!(frob <= k.sqrt() * spec * (1.0 + 1e-12), "{frob} > sqrt({k}) {spec}");
    }
}

#[test]
fn qr_and_svd_span_the_same_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..40 {
        let a = random_shape(&mut rng, 128, 16);
        let qr = orthonormal_basis(&a).unwrap();
        let svd = svd_factor(&a).unwrap();
        assert_eq!(qr.rank, svd.rank);
        let diff = projector(&qr.basis).sub(&projector(&svd.basis)).unwrap();
        assert!(spectral_norm(&diff) <= 1e-8);
    }
}

#[test]
fn least_squares_residual_is_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..60 {
        let a = random_shape(&mut rng, 200, 20);
        let cols = rng.random_range(1..4);
        let b = gaussian(&mut rng, a.rows(), cols);
        let x = exact_least_squares(&a, &b).unwrap();
        let resid = a.matmul(&x).unwrap().sub(&b).unwrap();
        let g = a.t_matmul(&resid).unwrap().frobenius();
        assert!(g <= 1e-8 * a.frobenius() * b.frobenius(), "{g}");
    }
}

#[test]
fn ridge_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..60 {
        let a = random_shape(&mut rng, 200, 20);
        let b = gaussian(&mut rng, a.rows(), 1).into_vec();
        let norm2 = spectral_norm(&a).powi(2);
        let lambda = norm2 * 10f64.powf(rng.random_range(-4.0..2.0));
        let x = exact_ridge(&a, &b, lambda).unwrap();
        let xm = DenseMatrix::column_vector(&x);
        let lhs = a.gram().matmul(&xm).unwrap().add(&xm.scale(lambda)).unwrap();
        let rhs = a.t_matmul(&DenseMatrix::column_vector(&b)).unwrap();
        let err = lhs.sub(&rhs).unwrap().frobenius();
        assert!(err <= 1e-8 * (norm2 + lambda) * xm.frobenius() + 1e-12, "{err}");
    }
}

#[test]
fn orthonormal_basis_norms() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let a = random_shape(&mut rng, 128, 16);
        let f = orthonormal_basis(&a).unwrap();
        assert!((f.basis.frobenius_sq() - f.rank as f64).abs() <= 1e-8);
        assert!((spectral_norm(&f.basis) - 1.0).abs() <= 1e-8);
    }
}

#[test]
fn ridge_basis_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let a = random_shape(&mut rng, 128, 16);
        let sv = svd_factor(&a).unwrap().singular_values.unwrap();
        let lambda = sv[0] * sv[0] * 10f64.powf(rng.random_range(-4.0..3.0));
        let rb = ridge_basis(&a, lambda).unwrap();
        let sd = statistical_dimension(&sv, lambda).unwrap();
        assert!((rb.u1.frobenius_sq() - sd).abs() <= 1e-8 * sd.max(1.0));
        let want = 1.0 / (1.0 + lambda / (sv[0] * sv[0])).sqrt();
        assert!((spectral_norm(&rb.u1) - want).abs() <= 1e-8);
        let ah = rb.augmented_basis();
        let k = ah.cols();
        assert!(ah.gram().sub(&DenseMatrix::identity(k)).unwrap().max_abs() <= 1e-8);
    }
}

#[test]
fn leverage_invariant_under_column_mixing() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let d = rng.random_range(1..=12);
        let n = rng.random_range(d..=200);
        let a = gaussian(&mut rng, n, d);
        // I + 0.2 G / √d has singular values near 1.
        let g = DenseMatrix::identity(d).add(&gaussian(&mut rng, d, d).scale(0.2 / (d as f64).sqrt())).unwrap();
        let s1 = exact_leverage_scores(&a).unwrap().scores;
        let s2 = exact_leverage_scores(&a.matmul(&g).unwrap()).unwrap().scores;
        for (x, y) in s1.iter().zip(&s2) {
            assert!((x - y).abs() <= 1e-8);
        }
    }
}

#[test]
fn leverage_range_and_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let a = random_shape(&mut rng, 200, 24);
        let p = exact_leverage_scores(&a).unwrap();
        assert!(p.scores.iter().all(|&s| (0.0..=1.0 + 1e-12).contains(&s)));
        assert!((p.scores.iter().sum::<f64>() - p.rank as f64).abs() <= 1e-8);
    }
}

/// `(AᵀA)^{-1/2}` through a symmetric eigendecomposition.
fn inv_sqrt(m: &DenseMatrix) -> DenseMatrix {
    let eig = SymmetricEigen::new(m.to_nalgebra());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    DenseMatrix::from_nalgebra(&(&eig.eigenvectors * d * eig.eigenvectors.transpose()))
}

#[test]
fn qr_equivalence_of_embedding_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for t in 0..30 {
        let d = rng.random_range(2..=8);
        let n = rng.random_range(100..=400);
        let a = gaussian(&mut rng, n, d);
        let u = orthonormal_basis(&a).unwrap().basis;
        let q = build_distribution(&exact_leverage_scores(&a).unwrap()).unwrap();
        let s = draw_sketch(&q, rng.random_range(d..=4 * d * d), t).unwrap();
        let eps_u = check_se(&u, &s, 0.5).unwrap().statistic;

        let w = inv_sqrt(&a.gram());
        let sa = apply_sketch(&s, &a).unwrap();
        let m = w.matmul(&sa.gram()).unwrap().matmul(&w).unwrap();
        let eig = SymmetricEigen::new(m.to_nalgebra());
        let eps_a = eig.eigenvalues.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        assert!((eps_u - eps_a).abs() <= 1e-8, "{eps_u} vs {eps_a}");
    }
}

#[test]
fn embedding_probes_bounded_by_spectral_deviation() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let a = gaussian(&mut rng, 300, 3);
    let u = orthonormal_basis(&a).unwrap().basis;
    let q = build_distribution(&exact_leverage_scores(&a).unwrap()).unwrap();
    let s = draw_sketch(&q, 20, 11).unwrap();
    let stat = check_se(&u, &s, 0.5).unwrap().statistic;
    let su = apply_sketch(&s, &u).unwrap();
    let mut best: f64 = 0.0;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let x = DenseMatrix::column_vector(&x.iter().map(|v| v / norm).collect::<Vec<_>>());
        let sux = su.matmul(&x).unwrap().frobenius_sq();
        let ux = u.matmul(&x).unwrap().frobenius_sq();
        let dev = (sux - ux).abs();
        assert!(dev <= stat + 1e-12);
        best = best.max(dev);
    }
    assert!(best >= 0.95 * stat, "{best} vs {stat}");
}

#[test]
fn famp_invariant_under_row_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 150;
    let a = gaussian(&mut rng, n, 4);
    let b = gaussian(&mut rng, n, 3);
    let q = build_distribution(&exact_leverage_scores(&a).unwrap()).unwrap();
    let s = draw_sketch(&q, 40, 13).unwrap();
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    // Row i of the permuted matrices is row perm[i] of the originals.
    let mut inverse = vec![0; n];
    for (i, &p) in perm.iter().enumerate() {
        inverse[p] = i;
    }
    let permute = |m: &DenseMatrix| DenseMatrix::from_fn(n, m.cols(), |i, j| m[(perm[i], j)]);
    let samples = s
        .samples()
        .iter()
        .map(|x| Sample {
            index: inverse[x.index],
            weight: x.weight,
        })
        .collect();
    let sp = SketchOperator::from_samples(n, samples).unwrap();
    let before = check_famp(&a, &b, &s, 0.5).unwrap().statistic;
    let after = check_famp(&permute(&a), &permute(&b), &sp, 0.5).unwrap().statistic;
    assert!((before - after).abs() <= 1e-12 * before.max(1e-300), "{before} vs {after}");
}

#[test]
fn ratio_never_below_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for t in 0..50 {
        let a = gaussian(&mut rng, 200, 5);
        let b = gaussian(&mut rng, 200, 2);
        let q = build_distribution(&exact_leverage_scores(&a).unwrap()).unwrap();
        let s = draw_sketch(&q, 12, t).unwrap();
        let sa = apply_sketch(&s, &a).unwrap();
        let sb = apply_sketch(&s, &b).unwrap();
        let x = exact_least_squares(&sa, &sb).unwrap();
        let oracle = exact_least_squares(&a, &b).unwrap();
        let r = approx_ratio(&a, &b, &x, &oracle, 1.5).unwrap();
        assert!(r.statistic >= 1.0 - 1e-10);
    }
}

#[test]
fn sketch_is_unbiased() {
    // Average of (SM)ᵀ(SM) over many sketches against MᵀM, entrywise within
    // three standard errors.
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let m_mat = gaussian(&mut rng, 20, 3);
    let q = build_distribution(&exact_leverage_scores(&m_mat).unwrap()).unwrap();
    let trials = 20_000;
    let mut sum = [0.0; 9];
    let mut sum_sq = [0.0; 9];
    for t in 0..trials {
        let s = draw_sketch(&q, 5, t).unwrap();
        let g = apply_sketch(&s, &m_mat).unwrap().gram();
        for (k, v) in g.as_slice().iter().enumerate() {
            sum[k] += v;
            sum_sq[k] += v * v;
        }
    }
    let target = m_mat.gram();
    let tn = trials as f64;
    for k in 0..9 {
        let mean = sum[k] / tn;
        let var = (sum_sq[k] / tn - mean * mean) * tn / (tn - 1.0);
        let se = (var / tn).sqrt();
        let want = target.as_slice()[k];
        assert!((mean - want).abs() <= 3.0 * se, "entry {k}: {mean} vs {want} (se {se})");
    }
}

#[test]
fn samp_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let a = gaussian(&mut rng, 2000, 5);
    let b = gaussian(&mut rng, 2000, 2);
    let q = build_distribution(&exact_leverage_scores(&a).unwrap()).unwrap();
    let (_, summary) = run_trials(50, 17, 0.9, |seed| check_samp(&a, &b, &draw_sketch(&q, 800, seed)?, 0.25)).unwrap();
    assert!(summary.passed, "{summary:?}");
}

#[test]
fn ridge_rows_quantum_nonincreasing_in_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let a = gaussian(&mut rng, 300, 10);
    let sv = svd_factor(&a).unwrap().singular_values.unwrap();
    let mut last = f64::INFINITY;
    for e in -3..=3 {
        let lambda = 10f64.powi(e) * sv[0] * sv[0];
        let mut inputs = CostModelInputs::new(1 << 20, 10, 0.1);
        inputs.sd = Some(statistical_dimension(&sv, lambda).unwrap());
        inputs.lambda = Some(lambda);
        let r = rows_quantum(&inputs);
        assert!(r <= last);
        last = r;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_weights_satisfy_identity(seed in any::<u64>(), n in 2usize..60, m in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(&mut rng, n, 1.max(n / 4));
        let q = build_distribution(&exact_leverage_scores(&a).unwrap()).unwrap();
        let s = draw_sketch(&q, m, seed).unwrap();
        for x in s.samples() {
            prop_assert!((m as f64 * q[x.index] * x.weight * x.weight - 1.0).abs() <= 1e-12);
        }
        let again = draw_sketch(&q, m, seed).unwrap();
        prop_assert_eq!(s.samples(), again.samples());
    }
}
