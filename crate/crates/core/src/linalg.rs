//! Dense row-major matrices, SPD Cholesky factorization with a jitter
//! escalation ladder, and triangular solves.
//!
//! Everything is plain `f64`; matrices here are small (kernel Gram matrices
//! over measurement points, mass matrices), so a straightforward O(n^3)
//! factorization is all we need.

use crate::error::{Error, Result};

/// Relative symmetry tolerance accepted by [`cholesky`].
pub const SYMMETRY_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        DenseMatrix::new(r, c, data)
    }

    /// Single-column matrix from a vector.
    pub fn column(v: &[f64]) -> Self {
        DenseMatrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, o) in dst.iter_mut().zip(orow) {
                    *d += a * o;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.cols != x.len() {
            return Err(Error::DimensionMismatch(format!(
                "matvec {}x{} by len {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mean_diag(&self) -> f64 {
        let n = self.rows.min(self.cols);
        if n == 0 {
            return 0.0;
        }
        (0..n).map(|i| self.get(i, i)).sum::<f64>() / n as f64
    }

    /// Vertically stack two matrices with equal column counts.
    pub fn vstack(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch("vstack column mismatch".into()));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        DenseMatrix::new(self.rows + other.rows, self.cols, data)
    }
}

/// Lower-triangular Cholesky factor of an SPD matrix, together with the
/// jitter that was added to the diagonal to make factorization succeed.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub l: DenseMatrix,
    pub jitter: f64,
}

fn try_cholesky(a: &DenseMatrix, jitter: f64) -> Option<DenseMatrix> {
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            if i == j {
                sum += jitter;
            }
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Some(l)
}

/// Cholesky factorization `L L^T = A + j I`.
///
/// Tries the caller-supplied jitter first. If that fails the jitter escalates
/// from `1e-6 * mean(diag(A))` by factors of 10 up to `1e-2 * mean(diag(A))`;
/// the smallest jitter that succeeds is recorded in the returned factor.
pub fn cholesky(a: &DenseMatrix, jitter: f64) -> Result<CholeskyFactor> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "cholesky of {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let norm = a.frobenius_norm();
    for i in 0..a.rows() {
        for j in 0..i {
            let d = (a.get(i, j) - a.get(j, i)).abs();
            if d > SYMMETRY_RTOL * norm.max(1.0) {
                return Err(Error::DimensionMismatch(format!(
                    "matrix not symmetric at ({i},{j}): |{} - {}|",
                    a.get(i, j),
                    a.get(j, i)
                )));
            }
        }
    }
    let scale = a.mean_diag().abs().max(f64::MIN_POSITIVE);
    let mut ladder = vec![jitter];
    let mut j = 1e-6 * scale;
    while j <= 1e-2 * scale * (1.0 + 1e-12) {
        if j > jitter {
            ladder.push(j);
        }
        j *= 10.0;
    }
    let max_jitter = *ladder.last().unwrap();
    for &j in &ladder {
        if let Some(l) = try_cholesky(a, j) {
            return Ok(CholeskyFactor { l, jitter: j });
        }
    }
    Err(Error::NotPositiveDefinite { max_jitter })
}

/// Solve `(L L^T) x = b` given a lower-triangular factor `L`.
pub fn solve_spd(l: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = l.rows();
    if l.cols() != n || b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "solve_spd with {}x{} factor and rhs of len {}",
            l.rows(),
            l.cols(),
            b.len()
        )));
    }
    // forward: L y = b
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l.get(i, k) * y[k];
        }
        y[i] = sum / l.get(i, i);
    }
    // backward: L^T x = y
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l.get(k, i) * x[k];
        }
        x[i] = sum / l.get(i, i);
    }
    Ok(x)
}

/// Log-determinant of `A + j I` from its Cholesky factor.
pub fn log_det(l: &DenseMatrix) -> f64 {
    (0..l.rows()).map(|i| 2.0 * l.get(i, i).ln()).sum()
}
