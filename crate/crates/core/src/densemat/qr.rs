//! Householder QR with column pivoting.
//!
//! Factors `A P = Q R` where `P` permutes columns so that the diagonal of `R`
//! is nonincreasing in magnitude. The numerical rank is the number of leading
//! diagonal entries above the rank tolerance.

use super::{dot, DenseMatrix};

#[derive(Debug, Clone)]
pub struct PivotedQr {
    n: usize,
    d: usize,
    /// Column-major working storage: R above the diagonal, reflector tails below.
    packed: Vec<f64>,
    /// Reflector coefficients; `H_k = I - tau_k v_k v_kᵀ` with `v_k[k] = 1`.
    tau: Vec<f64>,
    /// `perm[j]` is the original column placed at position `j`.
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(a: &DenseMatrix) -> Self {
        let (n, d) = a.shape();
        let mut packed = vec![0.0; n * d];
        for i in 0..n {
            for (j, &x) in a.row(i).iter().enumerate() {
                packed[j * n + i] = x;
            }
        }
        let steps = n.min(d);
        let mut tau = vec![0.0; steps];
        let mut perm: Vec<usize> = (0..d).collect();

        for k in 0..steps {
            // Exact trailing norms each step; O(n d) per step is fine at d ≲ 10^3.
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..d {
                let col = &packed[j * n + k..(j + 1) * n];
                let nrm = dot(col, col);
                if nrm > best_norm {
                    best_norm = nrm;
                    best = j;
                }
            }
            if best != k {
                for i in 0..n {
                    packed.swap(k * n + i, best * n + i);
                }
                perm.swap(k, best);
            }

            let col = &mut packed[k * n + k..(k + 1) * n];
            let alpha = col[0];
            let tail_sq = dot(&col[1..], &col[1..]);
            if tail_sq == 0.0 {
                // Already upper triangular in this column.
                tau[k] = 0.0;
                continue;
            }
            let norm = (alpha * alpha + tail_sq).sqrt();
            let beta = if alpha >= 0.0 { -norm } else { norm };
            let v0 = alpha - beta;
            for x in col[1..].iter_mut() {
                *x /= v0;
            }
            col[0] = beta;
            tau[k] = (beta - alpha) / beta;

            let (head, rest) = packed.split_at_mut((k + 1) * n);
            let v_tail = &head[k * n + k + 1..(k + 1) * n];
            for j in (k + 1)..d {
                let c = &mut rest[(j - k - 1) * n + k..(j - k) * n];
                let s = tau[k] * (c[0] + dot(v_tail, &c[1..]));
                c[0] -= s;
                for (ci, vi) in c[1..].iter_mut().zip(v_tail) {
                    *ci -= s * vi;
                }
            }
        }

        let mut qr = Self {
            n,
            d,
            packed,
            tau,
            perm,
            rank: 0,
        };
        qr.rank = qr.rank_with_tolerance(super::rank_tolerance(n, d));
        qr
    }

    fn r_diag(&self, k: usize) -> f64 {
        self.packed[k * self.n + k]
    }

    /// Number of leading `|R_kk|` strictly above `rel_tol · |R_00|`.
    pub fn rank_with_tolerance(&self, rel_tol: f64) -> usize {
        let steps = self.n.min(self.d);
        if steps == 0 {
            return 0;
        }
        let top = self.r_diag(0).abs();
        if top == 0.0 {
            return 0;
        }
        (0..steps)
            .take_while(|&k| self.r_diag(k).abs() > rel_tol * top)
            .count()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// First `rank` columns of `Q` as an `n × rank` matrix.
    pub fn thin_q(&self) -> DenseMatrix {
        let (n, k) = (self.n, self.rank.max(1));
        // Column-major n×k, starting from the first k columns of I_n.
        let mut q = vec![0.0; n * k];
        for j in 0..k.min(n) {
            q[j * n + j] = 1.0;
        }
        for r in (0..self.rank).rev() {
            self.apply_reflector(r, &mut q, k);
        }
        DenseMatrix::from_fn(n, k, |i, j| q[j * n + i])
    }

    /// Upper-trapezoidal `rank × d` factor, columns in pivoted order.
    pub fn r(&self) -> DenseMatrix {
        let k = self.rank.max(1);
        DenseMatrix::from_fn(k, self.d, |i, j| {
            if j >= i {
                self.packed[j * self.n + i]
            } else {
                0.0
            }
        })
    }

    /// Applies `H_r` to each of the `cols` column-major columns of `m`.
    fn apply_reflector(&self, r: usize, m: &mut [f64], cols: usize) {
        let t = self.tau[r];
        if t == 0.0 {
            return;
        }
        let n = self.n;
        let v_tail = &self.packed[r * n + r + 1..(r + 1) * n];
        for j in 0..cols {
            let c = &mut m[j * n + r..(j + 1) * n];
            let s = t * (c[0] + dot(v_tail, &c[1..]));
            c[0] -= s;
            for (ci, vi) in c[1..].iter_mut().zip(v_tail) {
                *ci -= s * vi;
            }
        }
    }

    /// Basic least-squares solution `P R⁻¹ Qᵀ B` using the leading `rank`
    /// columns. Unique minimizer when `rank == d`.
    pub fn solve(&self, b: &DenseMatrix) -> DenseMatrix {
        let (n, k, nb) = (self.n, self.rank, b.cols());
        assert_eq!(b.rows(), n, "right-hand side has wrong row count");
        let mut work = vec![0.0; n * nb];
        for i in 0..n {
            for (j, &x) in b.row(i).iter().enumerate() {
                work[j * n + i] = x;
            }
        }
        for r in 0..k {
            self.apply_reflector(r, &mut work, nb);
        }
        let mut x = DenseMatrix::zeros(self.d, nb);
        for j in 0..nb {
            let rhs = &work[j * n..j * n + k];
            let mut y = vec![0.0; k];
            for i in (0..k).rev() {
                let tail: f64 = ((i + 1)..k).map(|l| self.packed[l * n + i] * y[l]).sum();
                y[i] = (rhs[i] - tail) / self.r_diag(i);
            }
            for (p, &yi) in y.iter().enumerate() {
                x[(self.perm[p], j)] = yi;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(qr: &PivotedQr) -> DenseMatrix {
        let qrp = qr.thin_q().matmul(&qr.r()).unwrap();
        let mut a = DenseMatrix::zeros(qrp.rows(), qrp.cols());
        for i in 0..qrp.rows() {
            for (p, &c) in qr.permutation().iter().enumerate() {
                a[(i, c)] = qrp[(i, p)];
            }
        }
        a
    }

    #[test]
    fn reconstructs_full_rank() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0, 0.0], &[0.0, 1.0, 3.0], &[4.0, 0.0, 1.0], &[1.0, 1.0, 1.0]]);
        let qr = PivotedQr::new(&a);
        assert_eq!(qr.rank(), 3);
        let err = reconstruct(&qr).sub(&a).unwrap().frobenius() / a.frobenius();
        assert!(err < 1e-14, "{err}");
        let q = qr.thin_q();
        let gram = q.gram().sub(&DenseMatrix::identity(3)).unwrap();
        assert!(gram.max_abs() < 1e-14);
    }

    #[test]
    fn detects_rank_deficiency() {
        // Third column = first + second.
        let a = DenseMatrix::from_rows(&[&[1.0, 0.0, 1.0], &[0.0, 1.0, 1.0], &[2.0, 1.0, 3.0], &[1.0, 1.0, 2.0]]);
        let qr = PivotedQr::new(&a);
        assert_eq!(qr.rank(), 2);
        let err = reconstruct(&qr).sub(&a).unwrap().frobenius();
        assert!(err < 1e-13, "{err}");
    }

    #[test]
    fn pivoted_diagonal_is_nonincreasing() {
        let a = DenseMatrix::from_rows(&[&[0.1, 5.0, 1.0], &[0.2, 1.0, 2.0], &[0.1, 3.0, 0.5]]);
        let qr = PivotedQr::new(&a);
        let diag: Vec<f64> = (0..3).map(|k| qr.r_diag(k).abs()).collect();
        assert!(diag.windows(2).all(|w| w[0] >= w[1] - 1e-12), "{diag:?}");
    }

    #[test]
    fn solves_square_system() {
        let a = DenseMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let b = DenseMatrix::column_vector(&[3.0, 5.0]);
        let x = PivotedQr::new(&a).solve(&b);
        assert!((x[(0, 0)] - 0.8).abs() < 1e-14);
        assert!((x[(1, 0)] - 1.4).abs() < 1e-14);
    }
}
