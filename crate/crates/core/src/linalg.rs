//! Small dense linear algebra: row-major matrices, Householder least squares,
//! and LU solves. Problem sizes here are at most a few dozen columns.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math::{abs, sqrt};

/// Relative tolerance on `|R_kk|` below which a column is declared dependent.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    DimensionMismatch { expected: usize, found: usize },
    /// Column `column` is (numerically) a combination of the columns before it.
    RankDeficient { column: usize },
    Singular { pivot: usize },
    Underdetermined { rows: usize, cols: usize },
}

impl core::error::Error for LinalgError {}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Self::RankDeficient { column } => {
                write!(f, "design is rank deficient at column {column}")
            }
            Self::Singular { pivot } => write!(f, "matrix is singular at pivot {pivot}"),
            Self::Underdetermined { rows, cols } => {
                write!(f, "{rows} rows cannot determine {cols} coefficients")
            }
        }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from a flat row-major buffer.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(LinalgError::DimensionMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if v.len() != self.cols {
            return Err(LinalgError::DimensionMismatch { expected: self.cols, found: v.len() });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| abs(self[(i, j)] - self[(j, i)]) <= tol))
    }

    /// `Xᵀ diag(w) X`; unit weights when `w` is `None`.
    pub fn gram(&self, w: Option<&[f64]>) -> Matrix {
        let p = self.cols;
        let mut g = Matrix::zeros(p, p);
        for i in 0..self.rows {
            let wi = w.map_or(1.0, |w| w[i]);
            if wi == 0.0 {
                continue;
            }
            let r = self.row(i);
            for a in 0..p {
                let ra = wi * r[a];
                for b in 0..=a {
                    g.data[a * p + b] += ra * r[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                g.data[b * p + a] = g.data[a * p + b];
            }
        }
        g
    }

    /// `Xᵀ diag(w) y`.
    pub fn cross(&self, y: &[f64], w: Option<&[f64]>) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let wi = w.map_or(1.0, |w| w[i]) * y[i];
            if wi == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(self.row(i)) {
                *o += wi * x;
            }
        }
        out
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weighted least squares `argmin Σ wᵢ (yᵢ − xᵢᵀβ)²` by Householder QR of
/// `diag(√w) X`. Weights must be non-negative.
///
/// Reports the first column whose diagonal entry of `R` falls below
/// [`RANK_TOL`] times the largest column norm seen so far.
pub fn least_squares(x: &Matrix, y: &[f64], w: Option<&[f64]>) -> Result<Vec<f64>, LinalgError> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, found: y.len() });
    }
    if let Some(w) = w {
        if w.len() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, found: w.len() });
        }
    }
    if n < p {
        return Err(LinalgError::Underdetermined { rows: n, cols: p });
    }
    // Column-major working copy of the scaled system.
    let mut a = vec![0.0; n * p];
    let mut b = vec![0.0; n];
    for i in 0..n {
        let s = w.map_or(1.0, |w| sqrt(w[i]));
        let r = x.row(i);
        for j in 0..p {
            a[j * n + i] = s * r[j];
        }
        b[i] = s * y[i];
    }
    let mut diag = vec![0.0; p];
    let mut scale = 0.0f64;
    for k in 0..p {
        let col = &mut a[k * n..(k + 1) * n];
        let norm = sqrt(col[k..].iter().map(|v| v * v).sum::<f64>());
        scale = scale.max(norm);
        if norm <= RANK_TOL * scale || norm == 0.0 {
            return Err(LinalgError::RankDeficient { column: k });
        }
        let alpha = if col[k] > 0.0 { -norm } else { norm };
        col[k] -= alpha;
        let vnorm2: f64 = col[k..].iter().map(|v| v * v).sum();
        diag[k] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        let (head, tail) = a.split_at_mut((k + 1) * n);
        let v = &head[k * n + k..(k + 1) * n];
        for j in 0..p - k - 1 {
            let cj = &mut tail[j * n + k..j * n + n];
            let s = 2.0 * dot(v, cj) / vnorm2;
            for (c, vi) in cj.iter_mut().zip(v) {
                *c -= s * vi;
            }
        }
        let s = 2.0 * dot(v, &b[k..]) / vnorm2;
        for (bi, vi) in b[k..].iter_mut().zip(v) {
            *bi -= s * vi;
        }
    }
    // Back substitution with R (diag holds R_kk, upper part in a[j*n + k], k < j).
    let mut beta = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = b[k];
        for j in k + 1..p {
            s -= a[j * n + k] * beta[j];
        }
        beta[k] = s / diag[k];
    }
    Ok(beta)
}

/// Solves `A x = b` for square `A` by LU with partial pivoting.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, found: a.cols() });
    }
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, found: b.len() });
    }
    let lu = Lu::factor(a)?;
    Ok(lu.solve(b))
}

/// Inverse of a square matrix.
pub fn inverse(a: &Matrix) -> Result<Matrix, LinalgError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, found: a.cols() });
    }
    let lu = Lu::factor(a)?;
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = lu.solve(&e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Ok(inv)
}

struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(a: &Matrix) -> Result<Self, LinalgError> {
        let n = a.rows();
        let mut lu = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = lu.iter().fold(0.0f64, |m, v| m.max(abs(*v)));
        for k in 0..n {
            let (mut piv, mut best) = (k, abs(lu[k * n + k]));
            for i in k + 1..n {
                let v = abs(lu[i * n + k]);
                if v > best {
                    piv = i;
                    best = v;
                }
            }
            if best <= 1e-14 * scale || best == 0.0 {
                return Err(LinalgError::Singular { pivot: k });
            }
            if piv != k {
                for j in 0..n {
                    lu.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Greedy choice of linearly independent columns, scanning left to right
/// (modified Gram-Schmidt). A column is kept when its component orthogonal
/// to the kept ones retains more than `tol` of its own norm.
pub fn independent_columns(x: &Matrix, tol: f64) -> Vec<usize> {
    let (n, p) = (x.rows(), x.cols());
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for j in 0..p {
        let mut v: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
        let norm0 = sqrt(dot(&v, &v));
        if norm0 == 0.0 {
            continue;
        }
        for q in &basis {
            let s = dot(q, &v);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= s * qi;
            }
        }
        let norm = sqrt(dot(&v, &v));
        if norm > tol * norm0 {
            v.iter_mut().for_each(|vi| *vi /= norm);
            basis.push(v);
            kept.push(j);
        }
    }
    kept
}

/// Solves the weighted normal equations `Xᵀ W X β = Xᵀ W y` for weights of
/// arbitrary sign, followed by two rounds of iterative refinement so that
/// the equations hold to near machine precision.
pub fn weighted_normal_solve(x: &Matrix, y: &[f64], w: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let g = x.gram(Some(w));
    let rhs = x.cross(y, Some(w));
    let lu = Lu::factor(&g)?;
    let mut beta = lu.solve(&rhs);
    for _ in 0..2 {
        let fitted = x.mul_vec(&beta)?;
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let r = x.cross(&resid, Some(w));
        let delta = lu.solve(&r);
        for (b, d) in beta.iter_mut().zip(&delta) {
            *b += d;
        }
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]]).unwrap();
        let b = least_squares(&x, &[1.0, 3.0, 5.0], None).unwrap();
        assert!(abs(b[0] - 1.0) < 1e-14 && abs(b[1] - 2.0) < 1e-14);
    }

    #[test]
    fn rank_deficiency_names_column() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 0.0], [1.0, 2.0, 1.0], [1.0, 2.0, 3.0], [1.0, 2.0, 4.0]]).unwrap();
        assert_eq!(least_squares(&x, &[0.0; 4], None), Err(LinalgError::RankDeficient { column: 1 }));
    }

    #[test]
    fn inverse_roundtrip() {
        let a = Matrix::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, -0.2], [0.5, -0.2, 2.0]]).unwrap();
        let inv = inverse(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a[(i, k)] * inv[(k, j)]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!(abs(s - e) < 1e-14);
            }
        }
    }

    #[test]
    fn singular_solve_fails() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        assert!(matches!(solve(&a, &[1.0, 1.0]), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn independent_columns_drops_duplicates_and_zeros() {
        let x = Matrix::from_rows(&[[1.0, 0.0, 1.0, 2.0], [1.0, 0.0, 1.0, 3.0], [1.0, 0.0, 1.0, 5.0]]).unwrap();
        assert_eq!(independent_columns(&x, 1e-9), vec![0, 3]);
    }

    #[test]
    fn signed_weights_satisfy_normal_equations() {
        let x = Matrix::from_rows(&[[1.0, 0.3], [1.0, -1.2], [1.0, 2.2], [1.0, 0.9], [1.0, -0.4]]).unwrap();
        let y = [1.0, -2.0, 0.5, 3.0, 0.1];
        let w = [1.0, -0.5, 2.0, 0.7, -0.1];
        let beta = weighted_normal_solve(&x, &y, &w).unwrap();
        let fitted = x.mul_vec(&beta).unwrap();
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        for v in x.cross(&resid, Some(&w)) {
            assert!(abs(v) < 1e-13);
        }
    }
}
