//! Small dense linear algebra: covariance, Cholesky, Mahalanobis distances
//! and the per-arm OLS fit used by pilot-based designs.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::design::Sample;
use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Build from rows; all rows must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::LengthMismatch { what: "matrix row", expected: cols, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    /// Single-column matrix.
    pub fn column_vector(values: &[f64]) -> Self {
        Self { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for i in 0..self.rows {
            let row = self.row(i);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        Self { rows: self.rows, cols: idx.len(), data }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, got: other.rows });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = self.max_abs().max(1.0);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn add_scaled(&mut self, other: &Matrix, scale: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared Euclidean distance.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Covariance of the rows of `x` with the `1/n` divisor.
///
/// Accumulated in one streaming pass (Welford update of the mean and the
/// co-moment matrix).
pub fn sample_covariance(x: &Matrix) -> Result<Matrix> {
    let (n, p) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::InsufficientRows { needed: 2, got: n });
    }
    let mut mean = vec![0.0; p];
    let mut comoment = Matrix::zeros(p, p);
    let mut delta = vec![0.0; p];
    for i in 0..n {
        let row = x.row(i);
        let count = (i + 1) as f64;
        for j in 0..p {
            delta[j] = row[j] - mean[j];
            mean[j] += delta[j] / count;
        }
        for a in 0..p {
            let post = row[a] - mean[a];
            for b in 0..p {
                comoment[(a, b)] += delta[b] * post;
            }
        }
    }
    let mut cov = Matrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            // symmetrize: the two triangles accumulate in different orders
            let v = 0.5 * (comoment[(a, b)] + comoment[(b, a)]) / n as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

/// Upper-triangular `R` with `R'R = A + ridge * I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdFactor {
    pub dim: usize,
    pub upper_r: Matrix,
    pub ridge_applied: f64,
}

impl SpdFactor {
    /// Solve `R' y = v` (forward substitution). For a factor of `Σ`,
    /// `‖y‖²` is the Mahalanobis norm `v' Σ⁻¹ v`.
    pub fn whiten(&self, v: &[f64]) -> Vec<f64> {
        let r = &self.upper_r;
        let mut y = vec![0.0; self.dim];
        for i in 0..self.dim {
            let mut s = v[i];
            for k in 0..i {
                s -= r[(k, i)] * y[k];
            }
            y[i] = s / r[(i, i)];
        }
        y
    }

    /// `R v`; for a factor of `M`, `‖R v‖² = v' M v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let r = &self.upper_r;
        (0..self.dim).map(|i| (i..self.dim).map(|j| r[(i, j)] * v[j]).sum()).collect()
    }

    /// Solve `(R'R) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let y = self.whiten(b);
        let r = &self.upper_r;
        let mut x = vec![0.0; self.dim];
        for i in (0..self.dim).rev() {
            let mut s = y[i];
            for k in (i + 1)..self.dim {
                s -= r[(i, k)] * x[k];
            }
            x[i] = s / r[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> Matrix {
        let mut inv = Matrix::zeros(self.dim, self.dim);
        let mut e = vec![0.0; self.dim];
        for j in 0..self.dim {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..self.dim {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }

    /// `R'R`.
    pub fn reconstruct(&self) -> Matrix {
        let r = &self.upper_r;
        let mut a = Matrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                a[(i, j)] = (0..=i.min(j)).map(|k| r[(k, i)] * r[(k, j)]).sum();
            }
        }
        a
    }
}

const PIVOT_RTOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;
const RIDGE_SCALE: f64 = 1e-8;

fn try_cholesky(a: &Matrix) -> Option<Matrix> {
    let p = a.rows();
    let max_diag = (0..p).fold(0.0_f64, |m, i| m.max(a[(i, i)].abs()));
    let floor = PIVOT_RTOL * max_diag;
    let mut r = Matrix::zeros(p, p);
    for j in 0..p {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= r[(k, j)] * r[(k, j)];
        }
        if !(d > floor) {
            return None;
        }
        let rjj = libm::sqrt(d);
        r[(j, j)] = rjj;
        for i in (j + 1)..p {
            let mut s = a[(j, i)];
            for k in 0..j {
                s -= r[(k, j)] * r[(k, i)];
            }
            r[(j, i)] = s / rjj;
        }
    }
    Some(r)
}

/// Cholesky factor of a symmetric matrix. A matrix that is not numerically
/// positive definite gets one ridge of `1e-8 * trace / p` on the diagonal;
/// the ridge is recorded in the factor.
pub fn cholesky(a: &Matrix) -> Result<SpdFactor> {
    if !a.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric);
    }
    if !a.all_finite() {
        return Err(Error::NonFinite("matrix"));
    }
    let p = a.rows();
    if let Some(r) = try_cholesky(a) {
        return Ok(SpdFactor { dim: p, upper_r: r, ridge_applied: 0.0 });
    }
    let ridge = if p == 0 { 0.0 } else { RIDGE_SCALE * a.trace() / p as f64 };
    if ridge > 0.0 {
        let mut ridged = a.clone();
        for i in 0..p {
            ridged[(i, i)] += ridge;
        }
        if let Some(r) = try_cholesky(&ridged) {
            return Ok(SpdFactor { dim: p, upper_r: r, ridge_applied: ridge });
        }
    }
    Err(Error::Indefinite { ridge })
}

/// `(x1 - x2)' Σ⁻¹ (x1 - x2)` where `factor` factors `Σ`.
pub fn mahalanobis_sq(x1: &[f64], x2: &[f64], factor: &SpdFactor) -> Result<f64> {
    if x1.len() != factor.dim {
        return Err(Error::DimensionMismatch { expected: factor.dim, got: x1.len() });
    }
    if x2.len() != factor.dim {
        return Err(Error::DimensionMismatch { expected: factor.dim, got: x2.len() });
    }
    let diff: Vec<f64> = x1.iter().zip(x2).map(|(a, b)| a - b).collect();
    Ok(factor.whiten(&diff).iter().map(|v| v * v).sum())
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the matrix whose columns are eigenvectors.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let p = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(p);
    let scale = m.max_abs();
    for _sweep in 0..100 {
        let off: f64 = (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off <= (f64::EPSILON * scale) * (f64::EPSILON * scale) {
            break;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                let aij = m[(i, j)];
                if aij == 0.0 {
                    continue;
                }
                let theta = (m[(j, j)] - m[(i, i)]) / (2.0 * aij);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..p {
                    let (mki, mkj) = (m[(k, i)], m[(k, j)]);
                    m[(k, i)] = c * mki - s * mkj;
                    m[(k, j)] = s * mki + c * mkj;
                }
                for k in 0..p {
                    let (mik, mjk) = (m[(i, k)], m[(j, k)]);
                    m[(i, k)] = c * mik - s * mjk;
                    m[(j, k)] = s * mik + c * mjk;
                }
                for k in 0..p {
                    let (vki, vkj) = (v[(k, i)], v[(k, j)]);
                    v[(k, i)] = c * vki - s * vkj;
                    v[(k, j)] = s * vki + c * vkj;
                }
            }
        }
    }
    ((0..p).map(|i| m[(i, i)]).collect(), v)
}

/// Moore–Penrose inverse of a symmetric positive semidefinite matrix.
pub fn pseudo_inverse_psd(a: &Matrix) -> Matrix {
    let p = a.rows();
    let (values, vectors) = symmetric_eigen(a);
    let top = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cutoff = top * p.max(1) as f64 * 1e-12;
    let mut out = Matrix::zeros(p, p);
    for (k, &lambda) in values.iter().enumerate() {
        if lambda <= cutoff {
            continue;
        }
        for i in 0..p {
            for j in 0..p {
                out[(i, j)] += vectors[(i, k)] * vectors[(j, k)] / lambda;
            }
        }
    }
    out
}

/// OLS fit within one treatment arm of the pilot, with an intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmFit {
    pub n: usize,
    pub intercept: f64,
    pub slopes: Vec<f64>,
    /// Mean squared residual (divisor: arm size).
    pub nu2: f64,
    /// Homoskedastic variance of the slope coefficients.
    pub slope_variance: Matrix,
    pub rank_deficient: bool,
}

impl ArmFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + dot(&self.slopes, x)
    }
}

/// Pilot-based metric ingredients: `β̃ = β̃(1) + β̃(0)` and `Ω̃ = Ω̃(1) + Ω̃(0)`
/// restricted to the covariate slopes. The intercept drops out of every
/// difference `x1 - x2`, so only the slope block enters the metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotFit {
    pub beta_sum: Vec<f64>,
    pub omega_sum: Matrix,
    pub m_pilot: usize,
    /// Index `[control, treated]`.
    pub arms: [ArmFit; 2],
    pub rank_deficient: bool,
}

impl PilotFit {
    /// `x' β̃`, the plug-in estimate of the index function.
    pub fn index(&self, x: &[f64]) -> f64 {
        dot(&self.beta_sum, x)
    }

    /// `β̃ β̃' + Ω̃`.
    pub fn penalized_metric(&self) -> Matrix {
        let p = self.beta_sum.len();
        let mut m = self.omega_sum.clone();
        for i in 0..p {
            for j in 0..p {
                m[(i, j)] += self.beta_sum[i] * self.beta_sum[j];
            }
        }
        m
    }
}

fn fit_arm(x: &Matrix, y: &[f64], rows: &[usize], arm: u8) -> Result<ArmFit> {
    let p = x.cols();
    let q = p + 1;
    if rows.len() < q {
        return Err(Error::TooFewUnits { arm, got: rows.len(), needed: q });
    }
    let mut gram = Matrix::zeros(q, q);
    let mut xty = vec![0.0; q];
    let mut z = vec![0.0; q];
    for &i in rows {
        z[0] = 1.0;
        z[1..].copy_from_slice(x.row(i));
        for a in 0..q {
            xty[a] += z[a] * y[i];
            for b in 0..q {
                gram[(a, b)] += z[a] * z[b];
            }
        }
    }
    let (gram_inv, rank_deficient) = match try_cholesky(&gram) {
        Some(r) => (SpdFactor { dim: q, upper_r: r, ridge_applied: 0.0 }.inverse(), false),
        None => (pseudo_inverse_psd(&gram), true),
    };
    let coef = gram_inv.mul_vec(&xty);
    let ssr: f64 = rows
        .iter()
        .map(|&i| {
            let fitted = coef[0] + dot(&coef[1..], x.row(i));
            (y[i] - fitted) * (y[i] - fitted)
        })
        .sum();
    let nu2 = ssr / rows.len() as f64;
    let mut slope_variance = Matrix::zeros(p, p);
    for a in 0..p {
        for b in 0..p {
            slope_variance[(a, b)] = nu2 * gram_inv[(a + 1, b + 1)];
        }
    }
    Ok(ArmFit {
        n: rows.len(),
        intercept: coef[0],
        slopes: coef[1..].to_vec(),
        nu2,
        slope_variance,
        rank_deficient,
    })
}

/// Per-arm OLS of outcome on an intercept and all covariates.
pub fn ols_fit_pilot(pilot: &Sample) -> Result<PilotFit> {
    let y = pilot.outcomes.as_deref().ok_or(Error::Missing("outcomes"))?;
    let d = pilot.treatment.as_deref().ok_or(Error::Missing("treatment"))?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pilot outcomes"));
    }
    let x = &pilot.covariates;
    let control: Vec<usize> = (0..pilot.n_units()).filter(|&i| d[i] == 0).collect();
    let treated: Vec<usize> = (0..pilot.n_units()).filter(|&i| d[i] == 1).collect();
    let fit0 = fit_arm(x, y, &control, 0)?;
    let fit1 = fit_arm(x, y, &treated, 1)?;
    let beta_sum = fit0.slopes.iter().zip(&fit1.slopes).map(|(a, b)| a + b).collect();
    let mut omega_sum = fit0.slope_variance.clone();
    omega_sum.add_scaled(&fit1.slope_variance, 1.0);
    let rank_deficient = fit0.rank_deficient || fit1.rank_deficient;
    Ok(PilotFit { beta_sum, omega_sum, m_pilot: pilot.n_units(), arms: [fit0, fit1], rank_deficient })
}
