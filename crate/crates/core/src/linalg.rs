//! Dense real linear algebra: LU with partial pivoting, determinants,
//! a 1-norm condition estimate, and a small symmetric eigensolver.
//!
//! The systems in this crate are modest (rank-n soliton systems with n ≤ 8,
//! Nystrom matrices up to a few thousand), so a self-contained solver keeps
//! the whole crate generic over the scalar type.

use crate::error::{KdvError, Result};
use crate::float::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug)]
pub struct Matrix<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix {
            n_rows,
            n_cols,
            data: vec![T::zero(); n_rows * n_cols],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows[0].len();
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols);
            data.extend_from_slice(r);
        }
        Matrix { n_rows, n_cols, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut T {
        &mut self.data[i * self.n_cols + j]
    }

    /// 1-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> T {
        let mut best = T::zero();
        for j in 0..self.n_cols {
            let mut s = T::zero();
            for i in 0..self.n_rows {
                s = s + self.at(i, j).abs();
            }
            if s > best {
                best = s;
            }
        }
        best
    }
}

/// LU factorization with partial pivoting (`PA = LU`).
pub struct Lu<T> {
    lu: Matrix<T>,
    piv: Vec<usize>,
    sign: T,
}

impl<T: Real> Lu<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        assert_eq!(a.n_rows, a.n_cols);
        let n = a.n_rows;
        let mut lu = a.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        let mut sign = T::one();
        for col in 0..n {
            let mut p = col;
            let mut best = lu.at(col, col).abs();
            for r in col + 1..n {
                let v = lu.at(r, col).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == T::zero() {
                return Err(KdvError::SingularSystem { cond: f64::INFINITY });
            }
            if p != col {
                for j in 0..n {
                    let tmp = lu.at(col, j);
                    *lu.at_mut(col, j) = lu.at(p, j);
                    *lu.at_mut(p, j) = tmp;
                }
                piv.swap(col, p);
                sign = -sign;
            }
            let pivot = lu.at(col, col);
            let (top, bottom) = lu.data.split_at_mut((col + 1) * n);
            let pivot_row = &top[col * n + col + 1..col * n + n];
            for r in 0..n - col - 1 {
                let row = &mut bottom[r * n + col..r * n + n];
                let f = row[0] / pivot;
                row[0] = f;
                for (t, &p) in row[1..].iter_mut().zip(pivot_row) {
                    *t = *t - f * p;
                }
            }
        }
        Ok(Lu { lu, piv, sign })
    }

    pub fn det(&self) -> T {
        let n = self.lu.n_rows;
        let mut d = self.sign;
        for i in 0..n {
            d = d * self.lu.at(i, i);
        }
        d
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.n_rows;
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - self.lu.at(i, j) * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s = s - self.lu.at(i, j) * x[j];
            }
            x[i] = s / self.lu.at(i, i);
        }
        x
    }

    /// Solve `A^T x = b` (used by the condition estimator).
    pub fn solve_transposed(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.n_rows;
        assert_eq!(b.len(), n);
        // A^T = U^T L^T P, so solve U^T y = b, L^T z = y, then x = P^T z.
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s = s - self.lu.at(j, i) * y[j];
            }
            y[i] = s / self.lu.at(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s = s - self.lu.at(j, i) * y[j];
            }
            y[i] = s;
        }
        let mut x = vec![T::zero(); n];
        for (i, &p) in self.piv.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Hager-style estimate of the 1-norm condition number.
    pub fn cond_estimate(&self, a_norm_one: T) -> T {
        let n = self.lu.n_rows;
        if n == 0 {
            return T::one();
        }
        let mut x = vec![T::one() / T::of_usize(n); n];
        let mut est = T::zero();
        for _ in 0..3 {
            let y = self.solve(&x);
            est = y.iter().fold(T::zero(), |s, v| s + v.abs());
            let xi: Vec<T> = y
                .iter()
                .map(|&v| if v >= T::zero() { T::one() } else { -T::one() })
                .collect();
            let z = self.solve_transposed(&xi);
            let (mut jbest, mut zbest) = (0usize, T::zero());
            for (j, &v) in z.iter().enumerate() {
                if v.abs() > zbest {
                    zbest = v.abs();
                    jbest = j;
                }
            }
            let xz: T = x.iter().zip(&z).map(|(&a, &b)| a * b).fold(T::zero(), |s, v| s + v);
            if zbest <= xz.abs() {
                break;
            }
            x = vec![T::zero(); n];
            x[jbest] = T::one();
        }
        est * a_norm_one
    }
}

/// Solve a dense system, rejecting nearly singular matrices.
pub fn solve_checked<T: Real>(a: &Matrix<T>, b: &[T], cond_limit: T) -> Result<Vec<T>> {
    let lu = Lu::factor(a)?;
    let cond = lu.cond_estimate(a.norm_one());
    if cond > cond_limit {
        return Err(KdvError::SingularSystem { cond: cond.as_f64() });
    }
    Ok(lu.solve(b))
}

/// Determinant of a small matrix.
pub fn det<T: Real>(a: &Matrix<T>) -> T {
    match Lu::factor(a) {
        Ok(lu) => lu.det(),
        Err(_) => T::zero(),
    }
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigenvalues<T: Real>(a: &Matrix<T>) -> Vec<T> {
    assert_eq!(a.n_rows, a.n_cols);
    let n = a.n_rows;
    let mut m = a.clone();
    for _sweep in 0..64 {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off = off + m.at(i, j).abs();
            }
        }
        if off < T::of(1e-30) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.at(p, q);
                if apq.abs() < T::of(1e-300) {
                    continue;
                }
                let theta = (m.at(q, q) - m.at(p, p)) / (T::of(2.0) * apq);
                let t = {
                    let s = if theta >= T::zero() { T::one() } else { -T::one() };
                    s / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m.at(k, p);
                    let akq = m.at(k, q);
                    *m.at_mut(k, p) = c * akp - s * akq;
                    *m.at_mut(k, q) = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m.at(p, k);
                    let aqk = m.at(q, k);
                    *m.at_mut(p, k) = c * apk - s * aqk;
                    *m.at_mut(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<T> = (0..n).map(|i| m.at(i, i)).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_known_system() {
        let a = Matrix::from_rows(&[
            vec![2.0f64, 1.0, -1.0],
            vec![-3.0, -1.0, 2.0],
            vec![-2.0, 1.0, 2.0],
        ]);
        let b = [8.0, -11.0, -3.0];
        let x = solve_checked(&a, &b, 1e12).unwrap();
        let expect = [2.0, 3.0, -1.0];
        for (xi, ei) in x.iter().zip(expect.iter()) {
            assert!((xi - ei).abs() < 1e-12);
        }
    }

    #[test]
    fn det_of_triangular() {
        let a = Matrix::from_rows(&[vec![2.0, 5.0], vec![0.0, 3.0]]);
        assert!((det(&a) - 6.0f64).abs() < 1e-14);
    }

    #[test]
    fn transposed_solve_consistent() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0], vec![2.0, 3.0]]);
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve_transposed(&[1.0, 2.0]);
        // A^T x = b
        assert!((4.0 * x[0] + 2.0 * x[1] - 1.0f64).abs() < 1e-13);
        assert!((1.0 * x[0] + 3.0 * x[1] - 2.0f64).abs() < 1e-13);
    }

    #[test]
    fn jacobi_eigenvalues_of_diag_plus_rank1() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let ev = sym_eigenvalues(&a);
        assert!((ev[0] - 1.0f64).abs() < 1e-12);
        assert!((ev[1] - 3.0f64).abs() < 1e-12);
    }

    #[test]
    fn cond_estimate_flags_near_singular() {
        let a = Matrix::from_rows(&[vec![1.0f64, 1.0], vec![1.0, 1.0 + 1e-14]]);
        let lu = Lu::factor(&a).unwrap();
        assert!(lu.cond_estimate(a.norm_one()) > 1e12);
    }
}
