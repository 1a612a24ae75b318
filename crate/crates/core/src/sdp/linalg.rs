//! Small dense kernels the solver needs beyond what nalgebra ships.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Householder QR with column pivoting of an `m × n` matrix.
#[derive(Clone, Debug)]
pub(crate) struct PivotedQr {
    /// Full orthogonal factor, `m × m`.
    pub q: DMatrix<f64>,
    /// Upper-trapezoidal factor of the permuted matrix, `m × n`.
    pub r: DMatrix<f64>,
    /// `perm[k]` is the original column placed at position `k`.
    pub perm: Vec<usize>,
    pub rank: usize,
}

impl PivotedQr {
    pub fn new(a: &DMatrix<f64>, rel_tol: f64) -> Self {
        let (m, n) = a.shape();
        let mut r = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let steps = m.min(n);
        let mut reflectors: Vec<(DVector<f64>, f64)> = Vec::with_capacity(steps);
        let mut first_pivot = 0.0f64;
        let mut rank = steps;
        for k in 0..steps {
            // choose the column with the largest trailing norm
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..n {
                let nrm = r.view((k, j), (m - k, 1)).norm_squared();
                if nrm > best_norm {
                    best_norm = nrm;
                    best = j;
                }
            }
            if best != k {
                r.swap_columns(k, best);
                perm.swap(k, best);
            }
            let norm = best_norm.max(0.0).sqrt();
            if k == 0 {
                first_pivot = norm;
            }
            if norm <= rel_tol * first_pivot.max(f64::MIN_POSITIVE) {
                rank = k;
                break;
            }
            let mut v: DVector<f64> = r.view((k, k), (m - k, 1)).column(0).into_owned();
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vnorm2 = v.norm_squared();
            let beta = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
            if beta != 0.0 {
                let mut block = r.view_mut((k, k), (m - k, n - k));
                let w = block.tr_mul(&v);
                block.ger(-beta, &v, &w, 1.0);
            }
            for i in k + 1..m {
                r[(i, k)] = 0.0;
            }
            reflectors.push((v, beta));
        }
        let mut q = DMatrix::<f64>::identity(m, m);
        for (k, (v, beta)) in reflectors.iter().enumerate().rev() {
            if *beta == 0.0 {
                continue;
            }
            let mut block = q.view_mut((k, 0), (m - k, m));
            let w = block.tr_mul(v);
            block.ger(-beta, v, &w, 1.0);
        }
        Self { q, r, perm, rank }
    }

    /// Orthonormal basis of the orthogonal complement of the column space.
    pub fn null_left(&self) -> DMatrix<f64> {
        let m = self.q.nrows();
        self.q.columns(self.rank, m - self.rank).into_owned()
    }

    /// Least-squares solution of `A x = rhs` using the first `rank` pivots;
    /// dependent columns get zero.
    pub fn solve_ls(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = self.perm.len();
        let k = self.rank;
        let qtb = self.q.columns(0, k).tr_mul(rhs);
        let mut z = DVector::zeros(k);
        for i in (0..k).rev() {
            let mut s = qtb[i];
            for j in i + 1..k {
                s -= self.r[(i, j)] * z[j];
            }
            z[i] = s / self.r[(i, i)];
        }
        let mut x = DVector::zeros(n);
        for i in 0..k {
            x[self.perm[i]] = z[i];
        }
        x
    }
}

/// Diagonally pivoted Cholesky of a symmetric PSD matrix, stopping once the
/// largest remaining pivot drops below `abs_tol`.
pub(crate) struct PivotedCholesky {
    /// Pivot order; the first `rank` entries are the independent indices.
    pub perm: Vec<usize>,
    pub rank: usize,
    /// Lower factor in pivoted order, `rank` columns are meaningful.
    pub l: DMatrix<f64>,
}

impl PivotedCholesky {
    pub fn new(k: &DMatrix<f64>, abs_tol: f64) -> Self {
        let n = k.nrows();
        let mut a = k.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rank = n;
        for j in 0..n {
            let mut best = j;
            for i in j + 1..n {
                if a[(i, i)] > a[(best, best)] {
                    best = i;
                }
            }
            if a[(best, best)] <= abs_tol {
                rank = j;
                break;
            }
            if best != j {
                a.swap_rows(j, best);
                a.swap_columns(j, best);
                perm.swap(j, best);
            }
            let d = a[(j, j)].sqrt();
            a[(j, j)] = d;
            for i in j + 1..n {
                a[(i, j)] /= d;
                a[(j, i)] = a[(i, j)];
            }
            for c in j + 1..n {
                let lcj = a[(c, j)];
                if lcj == 0.0 {
                    continue;
                }
                for i in c..n {
                    let v = a[(i, c)] - a[(i, j)] * lcj;
                    a[(i, c)] = v;
                    a[(c, i)] = v;
                }
            }
        }
        for c in 0..n {
            for i in 0..c {
                a[(i, c)] = 0.0;
            }
        }
        Self { perm, rank, l: a }
    }

    /// Expresses each dependent index as a combination of the independent ones:
    /// returns `coeffs` with `K[dep, :] ≈ coeffs · K[indep, :]`.
    pub fn dependent_combinations(&self, k: &DMatrix<f64>) -> Vec<(usize, DVector<f64>)> {
        let r = self.rank;
        let indep = &self.perm[..r];
        let l11 = self.l.view((0, 0), (r, r)).into_owned();
        self.perm[r..]
            .iter()
            .map(|&d| {
                let rhs = DVector::from_iterator(r, indep.iter().map(|&i| k[(i, d)]));
                // K11 c = K1d with K11 = L11 L11ᵀ
                let z = l11.solve_lower_triangular(&rhs).unwrap_or(rhs.clone());
                let c = l11.tr_solve_lower_triangular(&z).unwrap_or(z);
                (d, c)
            })
            .collect()
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(sym(m)).eigenvalues.min()
}

pub(crate) fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    SymmetricEigen::new(sym(m)).eigenvalues.max()
}

pub(crate) fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_null_space_of_rank_deficient() {
        // third column = first + second
        let a = DMatrix::from_row_slice(4, 3, &[1., 0., 1., 0., 1., 1., 1., 1., 2., 2., 0., 2.]);
        let qr = PivotedQr::new(&a, 1e-12);
        assert_eq!(qr.rank, 2);
        let n = qr.null_left();
        assert_eq!(n.ncols(), 2);
        assert!((n.transpose() * &a).norm() < 1e-12);
        assert!((n.transpose() * &n - DMatrix::identity(2, 2)).norm() < 1e-12);
        let x = DVector::from_vec(vec![1.0, -2.0, 0.0]);
        let b = &a * &x;
        let sol = qr.solve_ls(&b);
        assert!((&a * sol - b).norm() < 1e-12);
    }

    #[test]
    fn pivoted_cholesky_finds_dependence() {
        let rows = DMatrix::from_row_slice(3, 2, &[1., 0., 0., 1., 2., 3.]);
        let k = &rows * rows.transpose();
        let pc = PivotedCholesky::new(&k, 1e-10);
        assert_eq!(pc.rank, 2);
        let combos = pc.dependent_combinations(&k);
        let (d, c) = &combos[0];
        let indep = &pc.perm[..2];
        let mut rebuilt = DVector::zeros(2);
        for (t, &i) in indep.iter().enumerate() {
            rebuilt += rows.row(i).transpose() * c[t];
        }
        assert!((rebuilt - rows.row(*d).transpose()).norm() < 1e-10);
    }
}
