//! Small dense linear algebra: row-major real matrices, a cyclic Jacobi
//! eigensolver for symmetric matrices, Cholesky factors, and in-place
//! inversion of complex blocks.
//!
//! Everything here operates on matrices of at most a few hundred rows, which
//! covers per-quadrature-point tangents, per-frequency blocks, and the dense
//! oracles used on tiny grids.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::math::sqrt;

/// Dense row-major real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                what: "matrix data",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    what: "matrix row",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        let mut m = Self::identity(n);
        m.scale(scale);
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add_scaled(&mut self, other: &Matrix, s: f64) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (r, yr) in y.iter_mut().enumerate().take(self.rows) {
            *yr = dot(self.row(r), x);
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest |A - Aᵀ| entry relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst = 0.0_f64;
        for r in 0..self.rows {
            for c in r + 1..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)]).abs());
            }
        }
        worst / scale
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
    pub fn cholesky(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::NotPositiveDefinite("non-square matrix"));
        }
        let n = self.rows;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite("Cholesky pivot not positive"));
            }
            let d = sqrt(d);
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::NotPositiveDefinite("non-square matrix"));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Matrix::identity(n);
        let scale = self.max_abs();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[(x, col)].abs().total_cmp(&a[(y, col)].abs()))
                .unwrap_or(col);
            if a[(pivot, col)].abs() <= 1e-14 * scale {
                return Err(Error::NotPositiveDefinite("singular matrix"));
            }
            if pivot != col {
                a.swap_rows(pivot, col);
                inv.swap_rows(pivot, col);
            }
            let p = a[(col, col)];
            for c in 0..n {
                a[(col, c)] /= p;
                inv[(col, c)] /= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f == 0.0 {
                    continue;
                }
                for c in 0..n {
                    a[(r, c)] -= f * a[(col, c)];
                    inv[(r, c)] -= f * inv[(col, c)];
                }
            }
        }
        Ok(inv)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    /// Eigen-decomposition of a symmetric matrix (only the upper triangle is
    /// trusted). Returns eigenvalues sorted ascending and the matching
    /// eigenvectors as columns.
    pub fn symmetric_eigen(&self) -> (Vec<f64>, Matrix) {
        symmetric_jacobi(self)
    }

    pub fn symmetric_eigenvalues(&self) -> Vec<f64> {
        self.symmetric_eigen().0
    }

    /// Moore-Penrose pseudo-inverse of a symmetric matrix, dropping
    /// eigenvalues below `rel_tol` times the spectral radius.
    pub fn symmetric_pseudo_inverse(&self, rel_tol: f64) -> Matrix {
        let (vals, vecs) = self.symmetric_eigen();
        let radius = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for (k, &lam) in vals.iter().enumerate() {
            if lam.abs() <= rel_tol * radius {
                continue;
            }
            for i in 0..n {
                let vi = vecs[(i, k)] / lam;
                if vi == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += vi * vecs[(j, k)];
                }
            }
        }
        out
    }

    /// Extreme generalized eigenvalues of the symmetric-definite pencil
    /// `(self, reference)`, i.e. of `reference⁻¹ · self`.
    pub fn generalized_extremes(&self, reference_cholesky: &Matrix) -> (f64, f64) {
        let reduced = congruence_by_inverse_cholesky(self, reference_cholesky);
        let vals = reduced.symmetric_eigenvalues();
        (vals[0], vals[vals.len() - 1])
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

/// `L⁻¹ A L⁻ᵀ` for a lower-triangular `L`.
pub fn congruence_by_inverse_cholesky(a: &Matrix, l: &Matrix) -> Matrix {
    let n = a.rows();
    // Y = L⁻¹ A, column by column of A.
    let mut y = Matrix::zeros(n, n);
    for c in 0..n {
        for i in 0..n {
            let mut s = a[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * y[(k, c)];
            }
            y[(i, c)] = s / l[(i, i)];
        }
    }
    // Z = Y L⁻ᵀ  <=>  Zᵀ = L⁻¹ Yᵀ.
    let mut z = Matrix::zeros(n, n);
    for r in 0..n {
        for i in 0..n {
            let mut s = y[(r, i)];
            for k in 0..i {
                s -= l[(i, k)] * z[(r, k)];
            }
            z[(r, i)] = s / l[(i, i)];
        }
    }
    z
}

fn symmetric_jacobi(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut m = a.clone();
    for r in 0..n {
        for c in 0..r {
            m[(r, c)] = m[(c, r)];
        }
    }
    let mut v = Matrix::identity(n);
    let total = m.frobenius_norm();
    if n > 1 && total > 0.0 {
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += m[(p, q)] * m[(p, q)];
                }
            }
            if sqrt(off) <= 1e-17 * total {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = m[(p, p)];
                    let aqq = m[(q, q)];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + sqrt(theta * theta + 1.0));
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / sqrt(t * t + 1.0);
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[(k, p)];
                        let mkq = m[(k, q)];
                        m[(k, p)] = c * mkp - s * mkq;
                        m[(k, q)] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[(p, k)];
                        let mqk = m[(q, k)];
                        m[(p, k)] = c * mpk - s * mqk;
                        m[(q, k)] = s * mpk + c * mqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, dst)] = v[(r, src)];
        }
    }
    (values, vectors)
}

/// Eigenvalues of a Hermitian `n × n` complex matrix (row-major), via the
/// real symmetric embedding `[[Re, -Im], [Im, Re]]` whose spectrum repeats
/// each eigenvalue twice.
pub fn hermitian_eigenvalues(n: usize, a: &[Complex64]) -> Vec<f64> {
    let mut emb = Matrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            let z = a[r * n + c];
            emb[(r, c)] = z.re;
            emb[(r + n, c + n)] = z.re;
            emb[(r, c + n)] = -z.im;
            emb[(r + n, c)] = z.im;
        }
    }
    let vals = emb.symmetric_eigenvalues();
    vals.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

/// Inverts a complex `n × n` matrix in place (row-major) by Gauss-Jordan
/// elimination with partial pivoting. Fails when a pivot drops below
/// `rel_tol` times the largest entry.
pub fn invert_complex_in_place(n: usize, a: &mut [Complex64], rel_tol: f64) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    let scale = a.iter().fold(0.0_f64, |m, z| m.max(z.norm_sqr()));
    let scale = sqrt(scale);
    let mut inv = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        inv[i * n + i] = Complex64::new(1.0, 0.0);
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x * n + col].norm_sqr().total_cmp(&a[y * n + col].norm_sqr()))
            .unwrap_or(col);
        if sqrt(a[pivot * n + col].norm_sqr()) <= rel_tol * scale || scale == 0.0 {
            return Err(Error::NotPositiveDefinite("singular complex block"));
        }
        if pivot != col {
            for c in 0..n {
                a.swap(pivot * n + c, col * n + c);
                inv.swap(pivot * n + c, col * n + c);
            }
        }
        let p = a[col * n + col].inv();
        for c in 0..n {
            a[col * n + c] *= p;
            inv[col * n + c] *= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col];
            if f.re == 0.0 && f.im == 0.0 {
                continue;
            }
            for c in 0..n {
                let ac = a[col * n + c];
                let ic = inv[col * n + c];
                a[r * n + c] -= f * ac;
                inv[r * n + c] -= f * ic;
            }
        }
    }
    a.copy_from_slice(&inv);
    Ok(())
}
