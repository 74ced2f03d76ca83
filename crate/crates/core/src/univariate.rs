//! Truncated univariate orthonormal systems and their re-orthonormalization
//! under the empirical inner product.
//!
//! Index 0 of every system is the constant function and is not counted in
//! the size `L`. An empirical system stores a lower-triangular change of
//! basis `T` so that `ϕ_k = Σ_{j ≤ k} T[k][j] f_j`, where `f_0 = 1` and
//! `f_1..f_L` are the raw family members.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HofdError, Result};
use crate::linalg::{emp_dot, mean};

/// Orthonormality tolerance asserted after empirical construction.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Relative norm below which a Gram-Schmidt residual counts as rank loss.
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// Normalized probabilists' Hermite polynomials in `(x - loc) / scale`.
    Hermite { loc: f64, scale: f64 },
    /// Clamped B-splines on `knots`; member `k` is the raw spline `B_k`,
    /// `B_0` is dropped since the splines sum to one.
    BSpline { degree: usize, knots: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "level", rename_all = "snake_case")]
pub enum Level {
    Theoretical,
    Empirical {
        /// Row `k` holds `T[k][0..=k]`.
        transform: Vec<Vec<f64>>,
        n: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateSystem {
    pub input: usize,
    pub size: usize,
    pub family: Family,
    pub level: Level,
}

impl UnivariateSystem {
    /// Hermite system of size `size` for standard normal input.
    pub fn hermite(input: usize, size: usize) -> Result<Self> {
        Self::hermite_affine(input, size, 0.0, 1.0)
    }

    /// Hermite system evaluated at `(x - loc) / scale`.
    pub fn hermite_affine(input: usize, size: usize, loc: f64, scale: f64) -> Result<Self> {
        if size == 0 {
            return Err(HofdError::Config("Hermite system needs L >= 1".into()));
        }
        if !(scale > 0.0) || !scale.is_finite() || !loc.is_finite() {
            return Err(HofdError::Config(format!(
                "Hermite standardization needs finite loc and positive scale, got ({loc}, {scale})"
            )));
        }
        Ok(Self {
            input,
            size,
            family: Family::Hermite { loc, scale },
            level: Level::Theoretical,
        })
    }

    /// Hermite system standardized by the column's empirical mean and
    /// standard deviation.
    pub fn hermite_for_column(input: usize, size: usize, column: &[f64]) -> Result<Self> {
        let m = mean(column);
        let var = column.iter().map(|v| (v - m).powi(2)).sum::<f64>() / column.len() as f64;
        Self::hermite_affine(input, size, m, var.sqrt())
    }

    /// B-spline system with interior knots at empirical quantiles of
    /// `column` and clamped boundary knots at its range.
    pub fn bspline(input: usize, size: usize, degree: usize, column: &[f64]) -> Result<Self> {
        if size == 0 {
            return Err(HofdError::Config("B-spline system needs L >= 1".into()));
        }
        if size < degree {
            return Err(HofdError::Config(format!(
                "B-spline system of degree {degree} needs L >= {degree}, got {size}"
            )));
        }
        let mut sorted: Vec<f64> = column.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let interior = size - degree;
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < interior + 2 {
            return Err(HofdError::Data(format!(
                "input {}: {} distinct values, B-spline system needs at least {}",
                input + 1,
                distinct.len(),
                interior + 2
            )));
        }
        let lo = sorted[0];
        let hi = sorted[sorted.len() - 1];
        let mut knots = vec![lo; degree + 1];
        for j in 1..=interior {
            knots.push(quantile(&sorted, j as f64 / (interior + 1) as f64));
        }
        knots.extend(std::iter::repeat(hi).take(degree + 1));
        for w in knots[degree..knots.len() - degree].windows(2) {
            if !(w[0] < w[1]) {
                return Err(HofdError::Data(format!(
                    "input {}: too few distinct values for {interior} interior knots",
                    input + 1
                )));
            }
        }
        Ok(Self {
            input,
            size,
            family: Family::BSpline { degree, knots },
            level: Level::Theoretical,
        })
    }

    pub fn is_empirical(&self) -> bool {
        matches!(self.level, Level::Empirical { .. })
    }

    /// Raw family values `f_0..f_L` at `x` (with `f_0 = 1`).
    pub fn eval_raw(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.size + 1);
        match &self.family {
            Family::Hermite { loc, scale } => hermite_values((x - loc) / scale, out),
            Family::BSpline { degree, knots } => {
                let mut all = vec![0.0; self.size + 1];
                bspline_values(x, *degree, knots, &mut all);
                out[0] = 1.0;
                out[1..].copy_from_slice(&all[1..]);
            }
        }
    }

    /// System values `ϕ_0..ϕ_L` at `x` (`ϕ_0 = 1`).
    pub fn eval(&self, x: f64, out: &mut [f64]) {
        match &self.level {
            Level::Theoretical => self.eval_raw(x, out),
            Level::Empirical { transform, .. } => {
                let mut raw = vec![0.0; self.size + 1];
                self.eval_raw(x, &mut raw);
                for (k, row) in transform.iter().enumerate() {
                    out[k] = row.iter().zip(&raw).map(|(t, f)| t * f).sum();
                }
            }
        }
    }

    /// `n x (L + 1)` matrix of system values over a column of inputs.
    pub fn eval_column(&self, xs: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(xs.len(), self.size + 1);
        let mut buf = vec![0.0; self.size + 1];
        for (s, &x) in xs.iter().enumerate() {
            self.eval(x, &mut buf);
            for k in 0..=self.size {
                out[(s, k)] = buf[k];
            }
        }
        out
    }

    fn raw_column(&self, xs: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(xs.len(), self.size + 1);
        let mut buf = vec![0.0; self.size + 1];
        for (s, &x) in xs.iter().enumerate() {
            self.eval_raw(x, &mut buf);
            for k in 0..=self.size {
                out[(s, k)] = buf[k];
            }
        }
        out
    }

    /// Lower-triangular change of basis of an empirical system.
    pub fn transform(&self) -> Option<&[Vec<f64>]> {
        match &self.level {
            Level::Empirical { transform, .. } => Some(transform),
            Level::Theoretical => None,
        }
    }

    /// Gram-Schmidt of `1, f_1..f_L` under the empirical inner product of
    /// `xs`, modified form with one re-orthogonalization pass.
    pub fn empirical_orthonormalize(&self, xs: &[f64]) -> Result<Self> {
        let n = xs.len();
        let dim = self.size + 1;
        if n <= self.size {
            return Err(HofdError::InsufficientSample {
                n,
                required: self.size,
            });
        }
        let raw = self.raw_column(xs);
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(dim);
        let mut t: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for k in 0..dim {
            let mut v: Vec<f64> = raw.column(k).iter().copied().collect();
            let raw_norm = emp_dot(&v, &v).sqrt();
            let mut coef = vec![0.0; k + 1];
            coef[k] = 1.0;
            for _pass in 0..2 {
                for j in 0..k {
                    let r = emp_dot(&q[j], &v);
                    for (vs, qs) in v.iter_mut().zip(&q[j]) {
                        *vs -= r * qs;
                    }
                    for (c, tj) in coef.iter_mut().zip(&t[j]) {
                        *c -= r * tj;
                    }
                }
            }
            let norm = emp_dot(&v, &v).sqrt();
            if !(norm > RANK_TOL * raw_norm) || !norm.is_finite() {
                return Err(HofdError::RankDeficient {
                    input: self.input + 1,
                    degree: k,
                });
            }
            v.iter_mut().for_each(|x| *x /= norm);
            coef.iter_mut().for_each(|c| *c /= norm);
            q.push(v);
            t.push(coef);
        }
        let system = Self {
            input: self.input,
            size: self.size,
            family: self.family.clone(),
            level: Level::Empirical { transform: t, n },
        };
        let violation = system.orthonormality_violation(xs);
        if violation > ORTHONORMAL_TOL {
            return Err(HofdError::Numerical(format!(
                "input {}: empirical orthonormalization violation {violation:.3e}",
                self.input + 1
            )));
        }
        Ok(system)
    }

    /// Largest of `|⟨ϕ_k, ϕ_l⟩ₙ − δ_kl|` and `|⟨ϕ_k, 1⟩ₙ|` over `k, l ≥ 1`.
    pub fn orthonormality_violation(&self, xs: &[f64]) -> f64 {
        let vals = self.eval_column(xs);
        let mut worst: f64 = 0.0;
        for k in 1..=self.size {
            let ck = vals.column(k);
            worst = worst.max(emp_dot(ck.as_slice(), vals.column(0).as_slice()).abs());
            for l in k..=self.size {
                let g = emp_dot(ck.as_slice(), vals.column(l).as_slice());
                let target = if k == l { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

/// Normalized probabilists' Hermite values `h_0..h_L` at `z`, with
/// `E[h_k(Z) h_l(Z)] = δ_kl` for standard normal `Z`.
pub fn hermite_values(z: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = z;
    }
    for k in 1..out.len().saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (z * out[k] - kf.sqrt() * out[k - 1]) / (kf + 1.0).sqrt();
    }
}

/// Values of all `knots.len() - degree - 1` clamped B-splines at `x`.
/// Points outside the knot span are clamped to the boundary.
pub fn bspline_values(x: f64, degree: usize, knots: &[f64], out: &mut [f64]) {
    let count = knots.len() - degree - 1;
    debug_assert_eq!(out.len(), count);
    out.iter_mut().for_each(|v| *v = 0.0);
    let lo = knots[degree];
    let hi = knots[count];
    let x = x.clamp(lo, hi);
    // span index k with knots[k] <= x < knots[k + 1]
    let span = if x >= hi {
        let mut k = count - 1;
        while k > degree && knots[k] >= hi {
            k -= 1;
        }
        k
    } else {
        let mut k = degree;
        while k + 1 < count && knots[k + 1] <= x {
            k += 1;
        }
        k
    };
    let mut n = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    n[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    for j in 0..=degree {
        out[span - degree + j] = n[j];
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}
