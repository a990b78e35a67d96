//! Small dense integer and rational matrices.
//!
//! Everything in the group layer is at most 6x6, so we keep a plain
//! row-major `Vec` representation and checked `i64` arithmetic.  Overflow is
//! an error, not a panic: orbit enumerations in the subgroup detector rely on
//! it as a cap signal.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatrixError {
    #[error("integer overflow in matrix arithmetic")]
    Overflow,
    #[error("matrix is not invertible over the integers (det = {0})")]
    NotUnimodular(i64),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    Shape(usize, usize, usize, usize),
    #[error("matrix is singular")]
    Singular,
}

/// Row-major integer matrix with checked arithmetic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i64>,
}

impl IMat {
    pub fn new(rows: usize, cols: usize, data: Vec<i64>) -> Self {
        assert_eq!(rows * cols, data.len());
        IMat { rows, cols, data }
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        IMat { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_identity(&self) -> bool {
        self.rows == self.cols && *self == Self::identity(self.rows)
    }

    pub fn transpose(&self) -> IMat {
        let mut out = IMat::zero(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn mul(&self, other: &IMat) -> Result<IMat, MatrixError> {
        if self.cols != other.rows {
            return Err(MatrixError::Shape(self.rows, self.cols, other.rows, other.cols));
        }
        let mut out = IMat::zero(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc: i64 = 0;
                for k in 0..self.cols {
                    let p = self
                        .get(i, k)
                        .checked_mul(other.get(k, j))
                        .ok_or(MatrixError::Overflow)?;
                    acc = acc.checked_add(p).ok_or(MatrixError::Overflow)?;
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[i64]) -> Result<Vec<i64>, MatrixError> {
        if self.cols != v.len() {
            return Err(MatrixError::Shape(self.rows, self.cols, v.len(), 1));
        }
        let mut out = vec![0i64; self.rows];
        for i in 0..self.rows {
            let mut acc: i64 = 0;
            for k in 0..self.cols {
                let p = self.get(i, k).checked_mul(v[k]).ok_or(MatrixError::Overflow)?;
                acc = acc.checked_add(p).ok_or(MatrixError::Overflow)?;
            }
            out[i] = acc;
        }
        Ok(out)
    }

    pub fn add(&self, other: &IMat) -> Result<IMat, MatrixError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(MatrixError::Shape(self.rows, self.cols, other.rows, other.cols));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a = a.checked_add(*b).ok_or(MatrixError::Overflow)?;
        }
        Ok(out)
    }

    pub fn neg(&self) -> Result<IMat, MatrixError> {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a = a.checked_neg().ok_or(MatrixError::Overflow)?;
        }
        Ok(out)
    }

    pub fn scale(&self, s: i64) -> Result<IMat, MatrixError> {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a = a.checked_mul(s).ok_or(MatrixError::Overflow)?;
        }
        Ok(out)
    }

    /// Determinant by cofactor expansion (dimensions here are tiny).
    pub fn det(&self) -> Result<i64, MatrixError> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        match n {
            0 => Ok(1),
            1 => Ok(self.get(0, 0)),
            2 => {
                let ad = self.get(0, 0).checked_mul(self.get(1, 1)).ok_or(MatrixError::Overflow)?;
                let bc = self.get(0, 1).checked_mul(self.get(1, 0)).ok_or(MatrixError::Overflow)?;
                ad.checked_sub(bc).ok_or(MatrixError::Overflow)
            }
            _ => {
                let mut acc: i64 = 0;
                for j in 0..n {
                    let minor = self.minor(0, j);
                    let c = self
                        .get(0, j)
                        .checked_mul(minor.det()?)
                        .ok_or(MatrixError::Overflow)?;
                    if j % 2 == 0 {
                        acc = acc.checked_add(c).ok_or(MatrixError::Overflow)?;
                    } else {
                        acc = acc.checked_sub(c).ok_or(MatrixError::Overflow)?;
                    }
                }
                Ok(acc)
            }
        }
    }

    fn minor(&self, row: usize, col: usize) -> IMat {
        let n = self.rows;
        let mut data = Vec::with_capacity((n - 1) * (n - 1));
        for i in 0..n {
            if i == row {
                continue;
            }
            for j in 0..n {
                if j == col {
                    continue;
                }
                data.push(self.get(i, j));
            }
        }
        IMat::new(n - 1, n - 1, data)
    }

    /// Inverse of a matrix with determinant +-1, via the adjugate.
    pub fn inverse_unimodular(&self) -> Result<IMat, MatrixError> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let d = self.det()?;
        if d != 1 && d != -1 {
            return Err(MatrixError::NotUnimodular(d));
        }
        if n == 0 {
            return Ok(IMat::identity(0));
        }
        let mut adj = IMat::zero(n, n);
        for i in 0..n {
            for j in 0..n {
                let m = self.minor(i, j).det()?;
                let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
                // adjugate = transpose of cofactors
                adj.set(j, i, sign * m * d);
            }
        }
        Ok(adj)
    }

    /// Operator 2-norm, computed from the symmetric eigenproblem of `M^T M`.
    pub fn op_norm(&self) -> f64 {
        let f: Vec<f64> = self.data.iter().map(|&x| x as f64).collect();
        op_norm_f64(self.rows, self.cols, &f)
    }

    pub fn max_abs(&self) -> i64 {
        self.data.iter().map(|x| x.abs()).max().unwrap_or(0)
    }
}

/// Operator 2-norm of a row-major `r x c` float matrix.
pub fn op_norm_f64(r: usize, c: usize, data: &[f64]) -> f64 {
    // Gram matrix G = M^T M (c x c), then largest eigenvalue by Jacobi sweeps.
    let mut g = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            let mut acc = 0.0;
            for k in 0..r {
                acc += data[k * c + i] * data[k * c + j];
            }
            g[i * c + j] = acc;
        }
    }
    max_eigen_sym(c, &mut g).max(0.0).sqrt()
}

/// Largest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
pub fn max_eigen_sym(n: usize, a: &mut [f64]) -> f64 {
    if n == 0 {
        return 0.0;
    }
    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cos = 1.0 / (t * t + 1.0).sqrt();
                let sin = t * cos;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = cos * akp - sin * akq;
                    a[k * n + q] = sin * akp + cos * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = cos * apk - sin * aqk;
                    a[q * n + k] = sin * apk + cos * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).fold(f64::NEG_INFINITY, f64::max)
}

/// Exact rational matrix (row-major), used for automorphism charts and
/// linear solves in the appendix lab.
#[derive(Debug, Clone, PartialEq)]
pub struct QMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<BigRational>,
}

impl QMat {
    pub fn zero(rows: usize, cols: usize) -> Self {
        QMat { rows, cols, data: vec![BigRational::zero(); rows * cols] }
    }

    pub fn from_imat(m: &IMat) -> Self {
        QMat {
            rows: m.rows,
            cols: m.cols,
            data: m.data.iter().map(|&x| BigRational::from_integer(BigInt::from(x))).collect(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &BigRational {
        &self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: BigRational) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mul_vec(&self, v: &[BigRational]) -> Vec<BigRational> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let mut acc = BigRational::zero();
                for k in 0..self.cols {
                    acc += self.get(i, k) * &v[k];
                }
                acc
            })
            .collect()
    }

    /// Exact determinant by Gaussian elimination.
    pub fn det(&self) -> BigRational {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = BigRational::one();
        for col in 0..n {
            let pivot = (col..n).find(|&r| !a[r * n + col].is_zero());
            let Some(p) = pivot else {
                return BigRational::zero();
            };
            if p != col {
                for j in 0..n {
                    a.swap(p * n + j, col * n + j);
                }
                det = -det;
            }
            let pv = a[col * n + col].clone();
            det *= &pv;
            for r in (col + 1)..n {
                let factor = &a[r * n + col] / &pv;
                if factor.is_zero() {
                    continue;
                }
                for j in col..n {
                    let sub = &factor * &a[col * n + j];
                    a[r * n + j] -= sub;
                }
            }
        }
        det
    }

    /// Solve `A x = b` exactly.  Returns `None` when singular.
    pub fn solve(&self, b: &[BigRational]) -> Option<Vec<BigRational>> {
        assert_eq!(self.rows, self.cols);
        assert_eq!(self.rows, b.len());
        let n = self.rows;
        let mut a = self.data.clone();
        let mut rhs = b.to_vec();
        for col in 0..n {
            let p = (col..n).find(|&r| !a[r * n + col].is_zero())?;
            if p != col {
                for j in 0..n {
                    a.swap(p * n + j, col * n + j);
                }
                rhs.swap(p, col);
            }
            let pv = a[col * n + col].clone();
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = &a[r * n + col] / &pv;
                if factor.is_zero() {
                    continue;
                }
                for j in col..n {
                    let sub = &factor * &a[col * n + j];
                    a[r * n + j] -= sub;
                }
                let sub = &factor * &rhs[col];
                rhs[r] -= sub;
            }
        }
        Some(
            (0..n)
                .map(|i| &rhs[i] / &a[i * n + i])
                .collect(),
        )
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|x| rational_to_f64(x)).collect()
    }

    pub fn add(&self, other: &QMat) -> QMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        QMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &QMat) -> QMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        QMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mul(&self, other: &QMat) -> QMat {
        assert_eq!(self.cols, other.rows);
        let mut out = QMat::zero(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = BigRational::zero();
                for k in 0..self.cols {
                    acc += self.get(i, k) * other.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| rational_to_f64(x).powi(2)).sum::<f64>().sqrt()
    }
}

pub fn rational_to_f64(x: &BigRational) -> f64 {
    x.numer().to_f64().unwrap_or(f64::NAN) / x.denom().to_f64().unwrap_or(f64::NAN)
}

/// Hermite normal form (row style, non-negative pivots) of the lattice
/// generated by the given integer row vectors.  Zero rows are dropped.
pub fn hnf_rows(vectors: &[Vec<i64>]) -> Result<Vec<Vec<i64>>, MatrixError> {
    if vectors.is_empty() {
        return Ok(vec![]);
    }
    let cols = vectors[0].len();
    let mut rows: Vec<Vec<i64>> = vectors.to_vec();
    let mut pivot_row = 0usize;
    for col in 0..cols {
        // Euclidean reduction of column `col` below pivot_row.
        loop {
            let mut best: Option<usize> = None;
            for r in pivot_row..rows.len() {
                if rows[r][col] != 0 {
                    best = match best {
                        None => Some(r),
                        Some(b) => {
                            if rows[r][col].abs() < rows[b][col].abs() {
                                Some(r)
                            } else {
                                Some(b)
                            }
                        }
                    };
                }
            }
            let Some(b) = best else { break };
            rows.swap(pivot_row, b);
            let mut done = true;
            let pv = rows[pivot_row][col];
            for r in (pivot_row + 1)..rows.len() {
                if rows[r][col] != 0 {
                    let q = div_round(rows[r][col], pv);
                    for j in 0..cols {
                        let s = q.checked_mul(rows[pivot_row][j]).ok_or(MatrixError::Overflow)?;
                        rows[r][j] = rows[r][j].checked_sub(s).ok_or(MatrixError::Overflow)?;
                    }
                    if rows[r][col] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        if rows[pivot_row..].iter().any(|r| r[col] != 0) {
            // pivot established at pivot_row
            if rows[pivot_row][col] < 0 {
                for j in 0..cols {
                    rows[pivot_row][j] = -rows[pivot_row][j];
                }
            }
            // reduce entries above the pivot
            let pv = rows[pivot_row][col];
            for r in 0..pivot_row {
                let q = rows[r][col].div_euclid(pv);
                if q != 0 {
                    for j in 0..cols {
                        let s = q.checked_mul(rows[pivot_row][j]).ok_or(MatrixError::Overflow)?;
                        rows[r][j] = rows[r][j].checked_sub(s).ok_or(MatrixError::Overflow)?;
                    }
                }
            }
            pivot_row += 1;
            if pivot_row == rows.len() {
                break;
            }
        }
    }
    rows.truncate(pivot_row);
    Ok(rows)
}

fn div_round(a: i64, b: i64) -> i64 {
    // round-to-nearest division, used to shrink remainders fast
    let q = a as f64 / b as f64;
    q.round() as i64
}

/// Does `v` lie in the lattice spanned by the HNF basis `basis`?
pub fn in_lattice(basis: &[Vec<i64>], v: &[i64]) -> bool {
    let mut v = v.to_vec();
    for row in basis {
        let col = match row.iter().position(|&x| x != 0) {
            Some(c) => c,
            None => continue,
        };
        if v[col] != 0 {
            if v[col] % row[col] != 0 {
                return false;
            }
            let q = v[col] / row[col];
            for j in 0..v.len() {
                v[j] -= q * row[j];
            }
        }
    }
    v.iter().all(|&x| x == 0)
}
