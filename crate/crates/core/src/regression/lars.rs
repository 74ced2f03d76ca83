//! Lasso solution path by least angle regression with the Lasso
//! modification (a variable leaves the active set when its coefficient
//! crosses zero), and k-fold cross-validated choice of the path point.
//!
//! The objective is `(1/2n) ‖ỹ - Zβ‖² + λ ‖β‖₁` over columns standardized to
//! zero mean and unit empirical norm; coefficients are mapped back to the
//! original column scale on output.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CoefficientVector, DesignMatrix, FitTrace, LarsConfig, Method};
use crate::error::{HofdError, Result};

/// Columns with empirical norm below this are never activated.
const NULL_COLUMN: f64 = 1e-12;
/// New active columns whose Cholesky pivot falls below this are collinear.
const COLLINEAR_PIVOT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "column", rename_all = "snake_case")]
pub enum PathEvent {
    Start,
    Join(usize),
    Drop(usize),
    /// Column reached the active correlation but lies in the active span.
    Collinear(usize),
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    /// Coefficients on the original column scale.
    pub beta: Vec<f64>,
    pub active: Vec<usize>,
    pub event: PathEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LarsPath {
    /// Breakpoints in decreasing `λ`.
    pub points: Vec<PathPoint>,
    pub truncated: bool,
    pub column_means: Vec<f64>,
    pub column_scales: Vec<f64>,
}

impl LarsPath {
    /// Coefficients at `lambda`, interpolated linearly between breakpoints.
    pub fn coefficients_at(&self, lambda: f64) -> Vec<f64> {
        let pts = &self.points;
        if lambda >= pts[0].lambda {
            return pts[0].beta.clone();
        }
        for w in pts.windows(2) {
            let (hi, lo) = (&w[0], &w[1]);
            if lambda >= lo.lambda {
                let span = hi.lambda - lo.lambda;
                let t = if span > 0.0 {
                    (hi.lambda - lambda) / span
                } else {
                    1.0
                };
                return hi
                    .beta
                    .iter()
                    .zip(&lo.beta)
                    .map(|(a, b)| a + t * (b - a))
                    .collect();
            }
        }
        pts[pts.len() - 1].beta.clone()
    }

    /// Standardized correlations `zⱼᵀ(ỹ - Zβ) / n` at a breakpoint.
    pub fn correlations(&self, design: &DesignMatrix, point: &PathPoint) -> Vec<f64> {
        let n = design.n() as f64;
        let mut fitted = DVector::zeros(design.n());
        for (j, b) in point.beta.iter().enumerate() {
            if *b != 0.0 {
                for s in 0..design.n() {
                    fitted[s] += (design.x[(s, j)] - self.column_means[j]) * b;
                }
            }
        }
        let r = &design.y - fitted;
        (0..design.m())
            .map(|j| {
                let w = self.column_scales[j];
                if w < NULL_COLUMN {
                    return 0.0;
                }
                let mut acc = 0.0;
                for s in 0..design.n() {
                    acc += (design.x[(s, j)] - self.column_means[j]) * r[s];
                }
                acc / w / n
            })
            .collect()
    }

    /// Largest deviation from the Lasso optimality conditions at `point`:
    /// active correlations equal `±λ`, inactive ones bounded by `λ`.
    pub fn kkt_violation(&self, design: &DesignMatrix, point: &PathPoint) -> f64 {
        let c = self.correlations(design, point);
        let mut worst: f64 = 0.0;
        for (j, cj) in c.iter().enumerate() {
            if point.active.contains(&j) {
                worst = worst.max((cj.abs() - point.lambda).abs());
                if point.lambda > 0.0 && point.beta[j] != 0.0 && point.beta[j].signum() != cj.signum() {
                    worst = f64::INFINITY;
                }
            } else {
                worst = worst.max(cj.abs() - point.lambda);
            }
        }
        worst
    }
}

/// Incrementally maintained Cholesky factor of the active Gram matrix.
struct ActiveGram {
    l: Vec<Vec<f64>>,
}

impl ActiveGram {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.l.len();
        let mut y = b.to_vec();
        for i in 0..k {
            let mut s = y[i];
            for j in 0..i {
                s -= self.l[i][j] * y[j];
            }
            y[i] = s / self.l[i][i];
        }
        for i in (0..k).rev() {
            let mut s = y[i];
            for j in (i + 1)..k {
                s -= self.l[j][i] * y[j];
            }
            y[i] = s / self.l[i][i];
        }
        y
    }

    /// Appends a column with cross products `g` and diagonal `gjj`; returns
    /// false when the pivot is too small.
    fn push(&mut self, g: &[f64], gjj: f64) -> bool {
        let k = self.l.len();
        let mut row = vec![0.0; k + 1];
        for i in 0..k {
            let mut s = g[i];
            for j in 0..i {
                s -= self.l[i][j] * row[j];
            }
            row[i] = s / self.l[i][i];
        }
        let d2 = gjj - row[..k].iter().map(|v| v * v).sum::<f64>();
        if !(d2 > COLLINEAR_PIVOT * gjj) {
            return false;
        }
        row[k] = d2.sqrt();
        self.l.push(row);
        true
    }
}

struct Standardized {
    z: DMatrix<f64>,
    means: Vec<f64>,
    scales: Vec<f64>,
}

fn standardize(x: &DMatrix<f64>) -> Standardized {
    let n = x.nrows() as f64;
    let mut z = x.clone();
    let mut means = Vec::with_capacity(x.ncols());
    let mut scales = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let mu = x.column(j).sum() / n;
        z.column_mut(j).add_scalar_mut(-mu);
        let w = (z.column(j).norm_squared() / n).sqrt();
        if w >= NULL_COLUMN {
            z.column_mut(j).unscale_mut(w);
        } else {
            z.column_mut(j).fill(0.0);
        }
        means.push(mu);
        scales.push(w);
    }
    Standardized { z, means, scales }
}

/// Full Lasso path of `design` by the modified LARS homotopy.
pub fn lars_path(design: &DesignMatrix, max_steps: Option<usize>) -> Result<LarsPath> {
    let (n, m) = (design.n(), design.m());
    let nf = n as f64;
    let std = standardize(&design.x);
    let z = &std.z;
    let y = &design.y;
    let usable: Vec<bool> = std.scales.iter().map(|&w| w >= NULL_COLUMN).collect();
    let rank_limit = usable.iter().filter(|u| **u).count().min(n.saturating_sub(1));
    let max_steps = max_steps.unwrap_or(8 * n.min(m).max(1));

    let to_original = |beta_std: &[f64]| -> Vec<f64> {
        beta_std
            .iter()
            .zip(&std.scales)
            .map(|(b, w)| if *b == 0.0 { 0.0 } else { b / w })
            .collect()
    };

    let mut beta = vec![0.0; m];
    let mut corr: DVector<f64> = z.tr_mul(y) / nf;
    let start = (0..m)
        .filter(|&j| usable[j])
        .max_by(|&a, &b| corr[a].abs().total_cmp(&corr[b].abs()));
    let mut points = Vec::new();
    let Some(first) = start else {
        points.push(PathPoint {
            lambda: 0.0,
            beta: vec![0.0; m],
            active: vec![],
            event: PathEvent::End,
        });
        return Ok(LarsPath {
            points,
            truncated: false,
            column_means: std.means,
            column_scales: std.scales,
        });
    };
    let mut lambda = corr[first].abs();
    let lambda_max = lambda;
    points.push(PathPoint {
        lambda,
        beta: vec![0.0; m],
        active: vec![],
        event: PathEvent::Start,
    });
    if lambda == 0.0 {
        return Ok(LarsPath {
            points,
            truncated: false,
            column_means: std.means,
            column_scales: std.scales,
        });
    }

    let gram_col = |a: usize, b: usize| -> f64 { z.column(a).dot(&z.column(b)) / nf };
    let mut active: Vec<usize> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    let mut chol = ActiveGram { l: Vec::new() };
    let mut excluded = vec![false; m];
    // a dropped column may not re-enter at once with its old sign
    let mut just_dropped: Option<(usize, f64)> = None;

    let add = |j: usize,
               sign: f64,
               active: &mut Vec<usize>,
               signs: &mut Vec<f64>,
               chol: &mut ActiveGram|
     -> bool {
        let g: Vec<f64> = active.iter().map(|&a| gram_col(a, j)).collect();
        if !chol.push(&g, gram_col(j, j)) {
            return false;
        }
        active.push(j);
        signs.push(sign);
        true
    };
    if !add(first, corr[first].signum(), &mut active, &mut signs, &mut chol) {
        return Err(HofdError::Numerical("first LARS column is degenerate".into()));
    }
    points[0].active = active.clone();

    let tiny = 1e-13 * lambda_max;
    let mut truncated = false;
    let mut steps = 0;
    loop {
        if steps >= max_steps {
            truncated = true;
            break;
        }
        steps += 1;

        let d = chol.solve(&signs);
        let mut u = DVector::zeros(n);
        for (k, &j) in active.iter().enumerate() {
            u.axpy(d[k], &z.column(j), 1.0);
        }
        let a: DVector<f64> = z.tr_mul(&u) / nf;
        let fitted = {
            let mut f = DVector::zeros(n);
            for &j in &active {
                f.axpy(beta[j], &z.column(j), 1.0);
            }
            f
        };
        corr = z.tr_mul(&(y - fitted)) / nf;

        let mut gamma_join = f64::INFINITY;
        let mut join = None;
        if active.len() < rank_limit {
            for j in 0..m {
                if !usable[j] || excluded[j] || active.contains(&j) {
                    continue;
                }
                let roots = [(1.0, lambda - corr[j], 1.0 - a[j]), (-1.0, lambda + corr[j], 1.0 + a[j])];
                for (sign, num, den) in roots {
                    if just_dropped == Some((j, sign)) {
                        continue;
                    }
                    if den > 1e-12 {
                        let g = num / den;
                        if g > tiny && g < gamma_join {
                            gamma_join = g;
                            join = Some(j);
                        }
                    }
                }
            }
        }
        let mut gamma_drop = f64::INFINITY;
        let mut drop = None;
        for (k, &j) in active.iter().enumerate() {
            if d[k] != 0.0 {
                let g = -beta[j] / d[k];
                if g > tiny && g < gamma_drop {
                    gamma_drop = g;
                    drop = Some(k);
                }
            }
        }
        let reached_end = lambda <= gamma_join.min(gamma_drop);
        let gamma = gamma_join.min(gamma_drop).min(lambda);
        for (k, &j) in active.iter().enumerate() {
            beta[j] += gamma * d[k];
        }
        lambda -= gamma;
        just_dropped = None;

        let event = if reached_end {
            lambda = 0.0;
            PathEvent::End
        } else if gamma_drop <= gamma_join {
            let k = drop.expect("drop index");
            let j = active[k];
            let old_sign = signs[k];
            beta[j] = 0.0;
            active.remove(k);
            signs.remove(k);
            chol = ActiveGram { l: Vec::new() };
            let (old_active, old_signs) = (std::mem::take(&mut active), std::mem::take(&mut signs));
            for (jj, s) in old_active.into_iter().zip(old_signs) {
                add(jj, s, &mut active, &mut signs, &mut chol);
            }
            just_dropped = Some((j, old_sign));
            PathEvent::Drop(j)
        } else {
            let j = join.expect("join index");
            let cj = corr[j] - gamma * a[j];
            if add(j, cj.signum(), &mut active, &mut signs, &mut chol) {
                PathEvent::Join(j)
            } else {
                excluded[j] = true;
                PathEvent::Collinear(j)
            }
        };
        points.push(PathPoint {
            lambda,
            beta: to_original(&beta),
            active: active.clone(),
            event,
        });
        if lambda <= tiny {
            if let Some(last) = points.last_mut() {
                last.lambda = 0.0;
                last.event = PathEvent::End;
            }
            break;
        }
    }
    Ok(LarsPath {
        points,
        truncated,
        column_means: std.means,
        column_scales: std.scales,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LarsFit {
    pub path: LarsPath,
    pub chosen: CoefficientVector,
    pub chosen_lambda: f64,
    pub cv_lambdas: Vec<f64>,
    pub cv_mse: Vec<f64>,
}

/// Lasso path on the full design, with the path point chosen by k-fold
/// cross-validated mean squared error.
pub fn fit_lars(design: &DesignMatrix, config: &LarsConfig, seed: u64) -> Result<LarsFit> {
    let n = design.n();
    let k = config.folds;
    if k < 2 || k > n {
        return Err(HofdError::Config(format!(
            "cannot run {k}-fold cross-validation on {n} observations"
        )));
    }
    let path = lars_path(design, config.max_steps)?;
    let grid: Vec<f64> = path.points.iter().map(|p| p.lambda).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let folds: Vec<Vec<usize>> = (0..k)
        .map(|f| {
            let mut rows: Vec<usize> = (0..n).filter(|&pos| pos % k == f).map(|pos| order[pos]).collect();
            rows.sort_unstable();
            rows
        })
        .collect();

    let fold_errors: Vec<Result<Vec<f64>>> = folds
        .par_iter()
        .map(|test| {
            let train: Vec<usize> = (0..n).filter(|s| test.binary_search(s).is_err()).collect();
            let sub = design.select_rows(&train);
            let fold_path = lars_path(&sub, config.max_steps)?;
            let y_train_mean = sub.y_mean;
            Ok(grid
                .iter()
                .map(|&lam| {
                    let beta = fold_path.coefficients_at(lam);
                    test.iter()
                        .map(|&s| {
                            let mut pred = y_train_mean;
                            for (j, b) in beta.iter().enumerate() {
                                if *b != 0.0 {
                                    pred += (design.x[(s, j)] - fold_path.column_means[j]) * b;
                                }
                            }
                            let obs = design.y[s] + design.y_mean;
                            (obs - pred).powi(2)
                        })
                        .sum::<f64>()
                })
                .collect())
        })
        .collect();
    let mut cv_mse = vec![0.0; grid.len()];
    for errs in fold_errors {
        for (acc, e) in cv_mse.iter_mut().zip(errs?) {
            *acc += e;
        }
    }
    cv_mse.iter_mut().for_each(|v| *v /= n as f64);
    let best = cv_mse
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v < cv_mse[best] { i } else { best });
    let chosen_lambda = grid[best];
    let beta = path.points[best].beta.clone();
    let chosen = CoefficientVector::new(
        design,
        Method::Lars,
        beta,
        FitTrace::Lars {
            path_len: path.points.len(),
            truncated: path.truncated,
            chosen_lambda,
            cv_lambdas: grid.clone(),
            cv_mse: cv_mse.clone(),
        },
    );
    Ok(LarsFit {
        path,
        chosen,
        chosen_lambda,
        cv_lambdas: grid,
        cv_mse,
    })
}
