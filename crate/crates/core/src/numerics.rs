//! Small dense linear algebra and statistics kernel.
//!
//! Everything here is row-major `f64` and sized for desk-scale problems
//! (dimensions in the hundreds, samples in the thousands).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Stacks equally sized rows. Fails on an empty list or ragged rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyBatch)?.as_ref();
        let cols = first.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
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

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
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

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.row_iter().map(<[f64]>::to_vec).collect()
    }

    /// New matrix made of the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn col_means(&self) -> Result<Vec<f64>> {
        if self.rows == 0 {
            return Err(Error::EmptyBatch);
        }
        let mut mean = vec![0.0; self.cols];
        for r in self.row_iter() {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        let n = self.rows as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Ok(mean)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        self.row_iter().map(|r| dot(r, v)).collect()
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Componentwise arithmetic mean of a list of vectors.
pub fn mean_vector<R: AsRef<[f64]>>(samples: &[R]) -> Result<Vec<f64>> {
    Mat::from_rows(samples)?.col_means()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by n.
    Population,
    /// Divide by n - 1.
    Sample,
}

/// Centered second-moment matrix of the rows of `samples`.
pub fn covariance(samples: &Mat, normalization: Normalization) -> Result<Mat> {
    let n = samples.rows();
    let (needed, denom) = match normalization {
        Normalization::Population => (1, n as f64),
        Normalization::Sample => (2, n as f64 - 1.0),
    };
    if n < needed {
        return Err(Error::InsufficientSamples { needed, found: n });
    }
    let mean = samples.col_means()?;
    let scatter = scatter_about(samples, &mean);
    let mut cov = scatter;
    cov.as_mut_slice().iter_mut().for_each(|x| *x /= denom);
    Ok(cov)
}

/// Unnormalized scatter Σ (x - c)(x - c)ᵀ around a given center.
pub fn scatter_about(samples: &Mat, center: &[f64]) -> Mat {
    let d = samples.cols();
    let mut s = Mat::zeros(d, d);
    let mut centered = vec![0.0; d];
    for r in samples.row_iter() {
        for ((c, x), m) in centered.iter_mut().zip(r).zip(center) {
            *c = x - m;
        }
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            let row = s.row_mut(a);
            for b in a..d {
                row[b] += ca * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            s[(a, b)] = s[(b, a)];
        }
    }
    s
}

const PIVOT_TOL: f64 = 1e-12;

/// Solves `(A + lambda I) y = b`.
///
/// Symmetric systems go through an LDLᵀ factorization; anything else falls
/// back to LU with partial pivoting. A pivot smaller than `1e-12` times the
/// largest diagonal magnitude is reported as [`Error::SingularMatrix`].
pub fn ridge_solve(a: &Mat, b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.cols(),
        });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("ridge must be nonnegative, got {lambda}")));
    }
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] += lambda;
    }
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    let tol = PIVOT_TOL * scale.max(f64::MIN_POSITIVE);
    if a.is_symmetric(1e-12 * a.frobenius_norm().max(1.0)) {
        ldlt_solve(m, b, tol)
    } else {
        lu_solve(m, b, tol)
    }
}

fn ldlt_solve(mut m: Mat, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = m.rows();
    // In place: strict lower triangle holds L, diagonal holds D.
    for j in 0..n {
        let mut dj = m[(j, j)];
        for k in 0..j {
            let l = m[(j, k)];
            dj -= l * l * m[(k, k)];
        }
        if dj.abs() <= tol {
            return Err(Error::SingularMatrix);
        }
        m[(j, j)] = dj;
        for i in j + 1..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= m[(i, k)] * m[(j, k)] * m[(k, k)];
            }
            m[(i, j)] = v / dj;
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= m[(i, k)] * y[k];
        }
    }
    for i in 0..n {
        y[i] /= m[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= m[(k, i)] * y[k];
        }
    }
    Ok(y)
}

fn lu_solve(mut m: Mat, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = m.rows();
    let mut y = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .unwrap_or(col);
        if m[(piv, col)].abs() <= tol {
            return Err(Error::SingularMatrix);
        }
        if piv != col {
            for k in 0..n {
                let tmp = m[(col, k)];
                m[(col, k)] = m[(piv, k)];
                m[(piv, k)] = tmp;
            }
            y.swap(col, piv);
        }
        for i in col + 1..n {
            let f = m[(i, col)] / m[(col, col)];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[(i, k)] -= f * m[(col, k)];
            }
            y[i] -= f * y[col];
        }
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= m[(i, k)] * y[k];
        }
        y[i] /= m[(i, i)];
    }
    Ok(y)
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Rescales to mean 0 and population standard deviation 1.
pub fn standardize(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            found: values.len(),
        });
    }
    let (mean, std) = mean_and_std(values);
    if !(std > 0.0) || std <= 1e-300 {
        return Err(Error::DegenerateSpread);
    }
    Ok(values.iter().map(|v| (v - mean) / std).collect())
}

pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            found: xs.len(),
        });
    }
    let (mx, sx) = mean_and_std(xs);
    let (my, sy) = mean_and_std(ys);
    if !(sx > 0.0) || !(sy > 0.0) {
        return Err(Error::DegenerateSpread);
    }
    let n = xs.len() as f64;
    let cov = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / n;
    Ok((cov / (sx * sy)).clamp(-1.0, 1.0))
}
