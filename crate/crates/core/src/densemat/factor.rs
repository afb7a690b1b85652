use nalgebra::{DMatrix, DVector, SVD};

use super::{DenseMatrix, PivotedQr};
use crate::error::{Error, Result};

/// Relative cutoff below which a singular value (or pivoted `|R_kk|`) counts
/// as zero: `max(n, d) · 2⁻⁵²`.
pub fn rank_tolerance(n: usize, d: usize) -> f64 {
    n.max(d) as f64 * f64::EPSILON
}

/// Above this smaller dimension the spectral norm switches to power iteration.
const SPECTRAL_SVD_LIMIT: usize = 512;
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;

/// Orthonormal basis of a column space together with the factors that
/// produced it.
///
/// `orthonormal_basis` fills the QR fields (`right_factor`, `permutation`);
/// `svd_factor` fills the SVD fields (`singular_values`, `right_singular`).
#[derive(Debug, Clone)]
pub struct FactorizationBundle {
    /// `n × k` with orthonormal columns.
    pub basis: DenseMatrix,
    /// Upper-trapezoidal `k × d` with `A P = U R`.
    pub right_factor: Option<DenseMatrix>,
    /// Column permutation `P`: position `j` holds original column `perm[j]`.
    pub permutation: Option<Vec<usize>>,
    /// Nonincreasing, all above the rank tolerance.
    pub singular_values: Option<Vec<f64>>,
    /// `d × k` right singular vectors.
    pub right_singular: Option<DenseMatrix>,
    pub rank: usize,
}

impl FactorizationBundle {
    /// Rebuilds `A` from whichever factors are present.
    pub fn reconstruct(&self) -> DenseMatrix {
        if let (Some(r), Some(perm)) = (&self.right_factor, &self.permutation) {
            let ur = self.basis.matmul(r).expect("factor shapes agree");
            let mut a = DenseMatrix::zeros(ur.rows(), ur.cols());
            for i in 0..ur.rows() {
                for (p, &c) in perm.iter().enumerate() {
                    a[(i, c)] = ur[(i, p)];
                }
            }
            return a;
        }
        let sv = self.singular_values.as_ref().expect("bundle has no factors");
        let v = self.right_singular.as_ref().expect("bundle has no factors");
        let mut us = self.basis.clone();
        for i in 0..us.rows() {
            for (x, s) in us.row_mut(i).iter_mut().zip(sv) {
                *x *= s;
            }
        }
        us.matmul(&v.transpose()).expect("factor shapes agree")
    }
}

/// Orthonormal basis for the column space of `a` by pivoted Householder QR.
///
/// The basis has `k` columns where `k` is the numerical rank, so rank-deficient
/// inputs get an `n × k` basis rather than an `n × d` one.
pub fn orthonormal_basis(a: &DenseMatrix) -> Result<FactorizationBundle> {
    if a.is_zero() {
        return Err(Error::AllZeroMatrix);
    }
    let qr = PivotedQr::new(a);
    Ok(FactorizationBundle {
        basis: qr.thin_q(),
        right_factor: Some(qr.r()),
        permutation: Some(qr.permutation().to_vec()),
        singular_values: None,
        right_singular: None,
        rank: qr.rank(),
    })
}

fn sorted_svd(a: &DenseMatrix, vectors: bool) -> (Vec<f64>, Option<DMatrix<f64>>, Option<DMatrix<f64>>) {
    let svd = SVD::new(a.to_nalgebra(), vectors, vectors);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = svd.u.map(|u| u.select_columns(order.iter()));
    let v = svd.v_t.map(|vt| vt.select_rows(order.iter()).transpose());
    (values, u, v)
}

/// Thin SVD truncated to the numerical rank.
pub fn svd_factor(a: &DenseMatrix) -> Result<FactorizationBundle> {
    if a.is_zero() {
        return Err(Error::AllZeroMatrix);
    }
    let (n, d) = a.shape();
    let (values, u, v) = sorted_svd(a, true);
    let cutoff = rank_tolerance(n, d) * values[0];
    let rank = values.iter().take_while(|&&s| s > cutoff).count();
    let u = u.expect("requested U");
    let v = v.expect("requested V");
    Ok(FactorizationBundle {
        basis: DenseMatrix::from_fn(n, rank, |i, j| u[(i, j)]),
        right_factor: None,
        permutation: None,
        singular_values: Some(values[..rank].to_vec()),
        right_singular: Some(DenseMatrix::from_fn(d, rank, |i, j| v[(i, j)])),
        rank,
    })
}

/// Largest singular value. Exact SVD when the smaller side is at most 512,
/// power iteration on the smaller Gram matrix otherwise.
pub fn spectral_norm(m: &DenseMatrix) -> f64 {
    if m.is_zero() {
        return 0.0;
    }
    let (n, d) = m.shape();
    if n.min(d) <= SPECTRAL_SVD_LIMIT {
        let (values, _, _) = sorted_svd(m, false);
        return values[0];
    }
    let g = if d <= n { m.gram() } else { m.transpose().gram() };
    power_iteration_top(&g.to_nalgebra()).sqrt()
}

fn power_iteration_top(g: &DMatrix<f64>) -> f64 {
    let k = g.nrows();
    // Deterministic, not orthogonal to any coordinate axis.
    let mut x = DVector::from_fn(k, |i, _| 1.0 + (i as f64 * 0.618_033_988_75).fract());
    x /= x.norm();
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let y = g * &x;
        let next = x.dot(&y);
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        x = y / norm;
        if (next - lambda).abs() <= POWER_TOL * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Minimum-norm least-squares solution `A†B`.
///
/// Full column rank goes through pivoted QR; rank-deficient systems fall back
/// to the truncated-SVD pseudoinverse.
pub fn exact_least_squares(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "A has {} rows, B has {}",
            a.rows(),
            b.rows()
        )));
    }
    if a.is_zero() {
        return Ok(DenseMatrix::zeros(a.cols(), b.cols()));
    }
    let qr = PivotedQr::new(a);
    if qr.rank() == a.cols() {
        return Ok(qr.solve(b));
    }
    Ok(pinv_solve(a, b))
}

fn pinv_solve(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let f = svd_factor(a).expect("nonzero input");
    let u = &f.basis;
    let sv = f.singular_values.as_ref().expect("svd route");
    let v = f.right_singular.as_ref().expect("svd route");
    let mut utb = u.t_matmul(b).expect("shapes checked");
    for (i, s) in sv.iter().enumerate() {
        for x in utb.row_mut(i) {
            *x /= s;
        }
    }
    v.matmul(&utb).expect("shapes agree")
}

/// Minimizer of `‖Ax − b‖² + λ‖x‖²`, solved as least squares on the stacked
/// system `[A; √λ I] x ≈ [b; 0]`.
pub fn exact_ridge(a: &DenseMatrix, b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::NegativeLambda(lambda));
    }
    if a.rows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "A has {} rows, b has length {}",
            a.rows(),
            b.len()
        )));
    }
    let rhs = DenseMatrix::column_vector(b);
    if lambda == 0.0 {
        return Ok(exact_least_squares(a, &rhs)?.into_vec());
    }
    let d = a.cols();
    let stacked = a.vstack(&DenseMatrix::identity(d).scale(lambda.sqrt()))?;
    let rhs = rhs.vstack(&DenseMatrix::zeros(d, 1))?;
    Ok(PivotedQr::new(&stacked).solve(&rhs).into_vec())
}
