//! Dense LU with partial pivoting and a 1-norm condition estimate.
//!
//! The factorization is delegated to `faer`; inputs and outputs stay
//! `nalgebra` matrices.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, MatRef};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

fn as_faer(m: &DMatrix<f64>) -> MatRef<'_, f64> {
    MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols())
}

fn to_nalgebra(m: &Mat<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        out.column_mut(j).copy_from_slice(m.col_as_slice(j));
    }
    out
}

/// Column sum norm.
pub fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU factorization of a square matrix.
pub struct DenseLu {
    lu: PartialPivLu<f64>,
    n: usize,
    norm1: f64,
}

impl DenseLu {
    pub fn new(a: &DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "LU needs a square matrix");
        Self {
            lu: PartialPivLu::new(as_faer(a)),
            n: a.nrows(),
            norm1: norm1(a),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        to_nalgebra(&self.lu.solve(as_faer(b)))
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let x = self.lu.solve(MatRef::from_column_major_slice(b.as_slice(), b.len(), 1));
        DVector::from_column_slice(x.col_as_slice(0))
    }

    /// Solves `A^T X = B`.
    pub fn solve_transpose(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        to_nalgebra(&self.lu.solve_transpose(as_faer(b)))
    }

    fn solve_transpose_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let x = self
            .lu
            .solve_transpose(MatRef::from_column_major_slice(b.as_slice(), b.len(), 1));
        DVector::from_column_slice(x.col_as_slice(0))
    }

    /// Explicit inverse.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve(&DMatrix::identity(self.n, self.n))
    }

    /// Smallest `|U_ii|` relative to the largest, with its (pivoted) row.
    pub fn weakest_pivot(&self) -> (usize, f64) {
        let u = self.lu.U();
        let mut max = 0.0f64;
        let mut min = (0, f64::INFINITY);
        for i in 0..self.n {
            let d = u[(i, i)].abs();
            max = max.max(d);
            if d < min.1 {
                min = (i, d);
            }
        }
        let row = self.lu.P().arrays().0[min.0];
        (row, if max > 0.0 { min.1 / max } else { 0.0 })
    }

    /// Hager–Higham estimate of the 1-norm condition number.
    ///
    /// Returns `inf` when the factorization produced non-finite values.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut est = 0.0;
        for iter in 0..5 {
            let y = self.solve_vec(&x);
            if !y.iter().all(|v| v.is_finite()) {
                return f64::INFINITY;
            }
            est = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve_transpose_vec(&xi);
            let (j, zmax) = z.iamax_full_abs();
            if iter > 0 && zmax <= z.dot(&x) {
                break;
            }
            x = DVector::zeros(n);
            x[j] = 1.0;
        }
        est * self.norm1
    }
}

trait IamaxAbs {
    fn iamax_full_abs(&self) -> (usize, f64);
}

impl IamaxAbs for DVector<f64> {
    fn iamax_full_abs(&self) -> (usize, f64) {
        let i = self.iamax();
        (i, self[i].abs())
    }
}

/// Moore–Penrose pseudo-inverse via SVD with a relative singular value cutoff.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    svd.pseudo_inverse(eps).expect("SVD computed with both factors")
}

/// Numerical rank using the same cutoff as [`pseudo_inverse`].
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let sv = a.singular_values();
    let smax = sv.max();
    let eps = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    sv.iter().filter(|&&s| s > eps).count()
}

/// Dot product accumulator carrying the rounding error of every product and
/// sum, so the result is as accurate as if computed in twice the precision.
#[derive(Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    err: f64,
}

impl Compensated {
    #[inline]
    fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let ep = a.mul_add(b, -p);
        let s = self.sum + p;
        let z = s - self.sum;
        self.err += ep + ((self.sum - (s - z)) + (p - z));
        self.sum = s;
    }

    /// Leading double and remainder.
    fn split(self) -> (f64, f64) {
        let hi = self.sum + self.err;
        (hi, self.err - (hi - self.sum))
    }
}

/// `(V V^T)^-1` and the condition estimate of `V V^T`.
///
/// The LU inverse is polished by one refinement step whose residual uses the
/// Gram matrix and the product accumulated in doubled precision. Without it
/// the rounding of `V V^T` itself is baked into the inverse, which matters
/// when the inverse is then carried along by rank-one updates.
pub fn refined_gram_inverse(v: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let n = v.nrows();
    let vt = v.transpose();
    let cols: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let b = vt.column(j);
            (0..n)
                .map(|i| {
                    let a = vt.column(i);
                    let mut acc = Compensated::default();
                    a.iter().zip(b.iter()).for_each(|(&x, &y)| acc.add_product(x, y));
                    acc.split()
                })
                .unzip()
        })
        .collect();
    let hi = DMatrix::from_fn(n, n, |i, j| cols[j].0[i]);
    let lo = DMatrix::from_fn(n, n, |i, j| cols[j].1[i]);

    let lu = DenseLu::new(&hi);
    let condition = lu.condition_estimate();
    let x = lu.inverse();
    let x = (&x + x.transpose()) * 0.5;
    if !condition.is_finite() {
        return (x, condition);
    }
    // R = I - G X, with G symmetric so row i of G is column i
    let res: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let xj = x.column(j);
            (0..n)
                .map(|i| {
                    let mut acc = Compensated {
                        sum: if i == j { 1.0 } else { 0.0 },
                        err: 0.0,
                    };
                    for k in 0..n {
                        acc.add_product(-hi[(k, i)], xj[k]);
                        acc.add_product(-lo[(k, i)], xj[k]);
                    }
                    acc.split().0
                })
                .collect()
        })
        .collect();
    let r = DMatrix::from_fn(n, n, |i, j| res[j][i]);
    let refined = &x + &x * r;
    ((&refined + refined.transpose()) * 0.5, condition)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refined_gram_inverse_of_offset_data() {
        // large common offset plus small spread, like voltage records
        let v = DMatrix::from_fn(12, 30, |i, j| 1.0 + 1e-3 * (((i * 31 + j * 17) % 13) as f64 - 6.0));
        let g = &v * v.transpose();
        let (x, cond) = refined_gram_inverse(&v);
        assert!(cond > 1e6);
        let plain = DenseLu::new(&g).inverse();
        let err = |m: &DMatrix<f64>| (m * &g - DMatrix::identity(12, 12)).amax();
        assert!(err(&x) <= 2.0 * err(&plain) + 1e-12, "{} {}", err(&x), err(&plain));
        assert!((&x - x.transpose()).amax() == 0.0);
    }

    #[test]
    fn solves_small_system() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 2.0, 3.0]);
        let lu = DenseLu::new(&a);
        let x = lu.solve_vec(&DVector::from_vec(vec![1.0, 2.0]));
        assert!((&a * &x - DVector::from_vec(vec![1.0, 2.0])).amax() < 1e-15);
        assert!((lu.inverse() * &a - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn condition_of_diagonal_is_exact() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-3, 10.0]));
        let c = DenseLu::new(&a).condition_estimate();
        assert!((c - 1e4).abs() / 1e4 < 1e-12);
    }

    #[test]
    fn singular_matrix_reports_huge_condition() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let lu = DenseLu::new(&a);
        assert!(lu.condition_estimate() > 1e12);
        assert!(lu.weakest_pivot().1 < 1e-12);
    }

    #[test]
    fn pinv_of_rank_one() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = pseudo_inverse(&a);
        assert!((&a * &p * &a - &a).amax() < 1e-14);
        assert_eq!(numerical_rank(&a), 1);
    }
}
