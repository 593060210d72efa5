//! Dense kernels: Householder thin QR, least squares, leverage scores and
//! Cholesky factorization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on the diagonal of `R` below which a design is
/// treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Dense row-major matrix of finite values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix must have at least one row and column, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (m, v) in means.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            if i >= self.rows {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} out of range for {} rows",
                    self.rows
                )));
            }
            values.extend_from_slice(self.row(i));
        }
        Self::new(idx.len(), self.cols, values)
    }

    pub fn select_columns(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&j) = idx.iter().find(|&&j| j >= self.cols) {
            return Err(Error::DimensionMismatch(format!(
                "column {j} out of range for {} columns",
                self.cols
            )));
        }
        let mut values = Vec::with_capacity(self.rows * idx.len());
        for i in 0..self.rows {
            let row = self.row(i);
            values.extend(idx.iter().map(|&j| row[j]));
        }
        Self::new(self.rows, idx.len(), values)
    }

    /// `(1, X)`: prepend a column of ones.
    pub fn with_intercept(&self) -> Self {
        let cols = self.cols + 1;
        let mut values = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            values.push(1.0);
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: self.rows,
            cols,
            values,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                values[j * self.rows + i] = self.get(i, j);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.values[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Thin Householder QR of an `n x c` matrix (`n >= c`).
///
/// Reflectors are kept in compact form; `Q` is only materialised on request.
#[derive(Clone, Debug)]
pub struct ThinQr {
    n: usize,
    c: usize,
    // column-major reflector vectors, v_j occupies rows j..n of column j
    reflectors: Vec<f64>,
    // upper triangle, row-major c x c
    r: Vec<f64>,
}

impl ThinQr {
    pub fn factor(z: &DenseMatrix) -> Result<Self> {
        let (n, c) = (z.rows, z.cols);
        if n < c {
            return Err(Error::DimensionMismatch(format!(
                "QR needs rows >= cols, got {n}x{c}"
            )));
        }
        let mut a = vec![0.0; n * c];
        for i in 0..n {
            for j in 0..c {
                a[j * n + i] = z.get(i, j);
            }
        }
        let mut r = vec![0.0; c * c];
        for j in 0..c {
            let (head, tail) = a.split_at_mut((j + 1) * n);
            let col = &mut head[j * n + j..];
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            let alpha = if col[0] > 0.0 { -norm } else { norm };
            col[0] -= alpha;
            let vnorm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if vnorm > 0.0 {
                col.iter_mut().for_each(|v| *v /= vnorm);
                for k in (j + 1)..c {
                    let target = &mut tail[(k - j - 1) * n + j..(k - j) * n];
                    let s = 2.0 * dot(col, target);
                    for (t, v) in target.iter_mut().zip(col.iter()) {
                        *t -= s * v;
                    }
                    r[j * c + k] = target[0];
                }
            } else {
                for k in (j + 1)..c {
                    r[j * c + k] = tail[(k - j - 1) * n + j];
                }
            }
            r[j * c + j] = alpha;
        }
        Ok(Self {
            n,
            c,
            reflectors: a,
            r,
        })
    }

    fn reflector(&self, j: usize) -> &[f64] {
        &self.reflectors[j * self.n + j..(j + 1) * self.n]
    }

    /// Fails with `RankDeficient` when `min |r_jj| < RANK_TOL * max |r_jj|`.
    pub fn check_rank(&self) -> Result<()> {
        let diag: Vec<f64> = (0..self.c).map(|j| self.r[j * self.c + j].abs()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if max == 0.0 || min < RANK_TOL * max {
            return Err(Error::RankDeficient {
                ratio: if max > 0.0 { min / max } else { 0.0 },
            });
        }
        Ok(())
    }

    /// `log |det R|`.
    pub fn log_abs_det_r(&self) -> f64 {
        (0..self.c).map(|j| self.r[j * self.c + j].abs().ln()).sum()
    }

    /// `Q^T y` (first `c` entries).
    pub fn qt_apply(&self, y: &[f64]) -> Vec<f64> {
        let mut w = y.to_vec();
        for j in 0..self.c {
            let v = self.reflector(j);
            let seg = &mut w[j..];
            let s = 2.0 * dot(v, seg);
            for (t, vi) in seg.iter_mut().zip(v) {
                *t -= s * vi;
            }
        }
        w.truncate(self.c);
        w
    }

    /// Solve `R x = b` by back substitution.
    pub fn solve_r(&self, b: &[f64]) -> Vec<f64> {
        let c = self.c;
        let mut x = b.to_vec();
        for i in (0..c).rev() {
            let mut s = x[i];
            for k in (i + 1)..c {
                s -= self.r[i * c + k] * x[k];
            }
            x[i] = s / self.r[i * c + i];
        }
        x
    }

    /// Thin orthonormal factor as a row-major `n x c` matrix.
    pub fn thin_q(&self) -> DenseMatrix {
        let (n, c) = (self.n, self.c);
        // column-major work buffer holding the first c columns of I_n
        let mut q = vec![0.0; n * c];
        for j in 0..c {
            q[j * n + j] = 1.0;
        }
        for j in (0..c).rev() {
            let v = self.reflector(j);
            for k in 0..c {
                let seg = &mut q[k * n + j..(k + 1) * n];
                let s = 2.0 * dot(v, seg);
                if s != 0.0 {
                    for (t, vi) in seg.iter_mut().zip(v) {
                        *t -= s * vi;
                    }
                }
            }
        }
        let mut values = vec![0.0; n * c];
        for j in 0..c {
            for i in 0..n {
                values[i * c + j] = q[j * n + i];
            }
        }
        DenseMatrix {
            rows: n,
            cols: c,
            values,
        }
    }

    /// `(R^T R)^{-1} = R^{-1} R^{-T}`.
    pub fn gram_inverse(&self) -> DenseMatrix {
        let c = self.c;
        // R^{-1}, upper triangular, by solving R x = e_k column by column
        let mut rinv = vec![0.0; c * c];
        for k in 0..c {
            let mut e = vec![0.0; c];
            e[k] = 1.0;
            let x = self.solve_r(&e);
            for i in 0..c {
                rinv[i * c + k] = x[i];
            }
        }
        let mut out = DenseMatrix::zeros(c, c);
        for i in 0..c {
            for j in i..c {
                let s: f64 = (j..c).map(|k| rinv[i * c + k] * rinv[j * c + k]).sum();
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        out
    }
}

/// Result of an ordinary least squares solve.
#[derive(Clone, Debug)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub gram_inverse: Option<DenseMatrix>,
}

/// Least squares `argmin ||y - Z b||^2` via thin QR. When `with_gram_inverse`
/// is set, `(Z^T Z)^{-1}` is also returned.
pub fn ols_fit(z: &DenseMatrix, y: &[f64], with_gram_inverse: bool) -> Result<OlsFit> {
    if z.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows but response has {}",
            z.rows(),
            y.len()
        )));
    }
    if z.rows() < z.cols() {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let qr = ThinQr::factor(z)?;
    qr.check_rank()?;
    let coefficients = qr.solve_r(&qr.qt_apply(y));
    Ok(OlsFit {
        coefficients,
        gram_inverse: with_gram_inverse.then(|| qr.gram_inverse()),
    })
}

/// Diagonal of the hat matrix `Z (Z^T Z)^{-1} Z^T`, computed as squared row
/// norms of the thin orthonormal factor.
pub fn leverage_scores(z: &DenseMatrix) -> Result<Vec<f64>> {
    if z.rows() < z.cols() {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let qr = ThinQr::factor(z)?;
    qr.check_rank()?;
    let q = qr.thin_q();
    Ok((0..q.rows())
        .map(|i| q.row(i).iter().map(|v| v * v).sum())
        .collect())
}

/// Lower-triangular `L` with `L L^T = S`.
pub fn cholesky_factor(s: &DenseMatrix) -> Result<DenseMatrix> {
    let n = s.rows();
    if s.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            s.cols()
        )));
    }
    for i in 0..n {
        for j in 0..i {
            if (s.get(i, j) - s.get(j, i)).abs() > 1e-12 {
                return Err(Error::InvalidParam(format!(
                    "matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = s.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l.set(j, j, djj);
        for i in (j + 1)..n {
            let mut v = s.get(i, j);
            for k in 0..j {
                v -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, v / djj);
        }
    }
    Ok(l)
}
