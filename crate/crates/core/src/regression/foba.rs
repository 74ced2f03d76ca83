//! Adaptive forward-backward greedy selection.
//!
//! Forward steps add the column giving the largest drop of the empirical
//! squared residual; the run stops once that drop falls below `ε`. After
//! every forward step, active columns are deleted while the cheapest
//! deletion raises the loss by less than `ν` times the gain recorded for the
//! current model size.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ols::ridge_with_dof;
use super::{CoefficientVector, DesignMatrix, FitTrace, FobaConfig, Method};
use crate::error::Result;

/// Columns whose component orthogonal to the active set has squared norm
/// below this fraction of their own are treated as collinear.
const COLLINEAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum FobaEvent {
    Forward {
        column: usize,
        gain: f64,
        loss: f64,
    },
    Backward {
        column: usize,
        increase: f64,
        /// Forward gain the increase was compared against.
        reference_gain: f64,
        loss: f64,
    },
}

/// Default forward threshold `c σ̂² ln(m) / n`, with `σ̂²` the residual
/// variance of a preliminary ridge fit.
pub(crate) fn default_epsilon(design: &DesignMatrix, config: &FobaConfig) -> Result<f64> {
    let n = design.n() as f64;
    let m = design.m().max(2) as f64;
    let ridge = ridge_with_dof(design, config.prelim_ridge * n)?;
    let loss = design.loss(ridge.beta.as_slice());
    let sigma2 = loss * n / (n - ridge.dof).max(1.0);
    Ok(config.epsilon_scale * sigma2 * m.ln() / n)
}

struct ActiveSet<'a> {
    design: &'a DesignMatrix,
    columns: Vec<usize>,
    /// Orthonormal basis (standard inner product) of the active columns.
    q: Vec<DVector<f64>>,
    residual: DVector<f64>,
}

impl<'a> ActiveSet<'a> {
    fn new(design: &'a DesignMatrix) -> Self {
        Self {
            design,
            columns: Vec::new(),
            q: Vec::new(),
            residual: design.y.clone(),
        }
    }

    fn loss(&self) -> f64 {
        self.residual.norm_squared() / self.design.n() as f64
    }

    fn orthogonalize(&self, v: &mut DVector<f64>) {
        for _pass in 0..2 {
            for q in &self.q {
                let r = q.dot(v);
                v.axpy(-r, q, 1.0);
            }
        }
    }

    /// Best candidate `(column, gain)` among inactive columns.
    fn best_addition(&self) -> Option<(usize, f64)> {
        let n = self.design.n() as f64;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.design.m() {
            if self.columns.contains(&j) {
                continue;
            }
            let mut v = self.design.x.column(j).into_owned();
            let raw = v.norm_squared();
            if raw == 0.0 {
                continue;
            }
            self.orthogonalize(&mut v);
            let ns = v.norm_squared();
            if ns <= COLLINEAR_TOL * raw {
                continue;
            }
            let gain = v.dot(&self.residual).powi(2) / ns / n;
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        best
    }

    fn push(&mut self, j: usize) {
        let mut v = self.design.x.column(j).into_owned();
        self.orthogonalize(&mut v);
        let norm = v.norm();
        v /= norm;
        let r = v.dot(&self.residual);
        self.residual.axpy(-r, &v, 1.0);
        self.q.push(v);
        self.columns.push(j);
        let mut res = self.residual.clone();
        self.orthogonalize(&mut res);
        self.residual = res;
    }

    fn rebuild(&mut self, columns: Vec<usize>) {
        self.columns.clear();
        self.q.clear();
        self.residual = self.design.y.clone();
        for j in columns {
            self.push(j);
        }
    }

    /// Least-squares coefficients on the active columns.
    fn coefficients(&self) -> Vec<f64> {
        let k = self.columns.len();
        let mut beta = vec![0.0; self.design.m()];
        if k == 0 {
            return beta;
        }
        let sub = self.design.x.select_columns(&self.columns);
        let qr = sub.qr();
        let qty = qr.q().tr_mul(&self.design.y);
        if let Some(b) = qr.r().solve_upper_triangular(&qty) {
            for (c, &j) in self.columns.iter().enumerate() {
                beta[j] = b[c];
            }
        }
        beta
    }

    /// Cheapest deletion `(position, loss increase)`.
    fn cheapest_removal(&self) -> Option<(usize, f64)> {
        let k = self.columns.len();
        if k == 0 {
            return None;
        }
        let n = self.design.n() as f64;
        let sub: DMatrix<f64> = self.design.x.select_columns(&self.columns);
        let r = sub.qr().r();
        let rinv = r.try_inverse()?;
        let beta = self.coefficients();
        let mut best: Option<(usize, f64)> = None;
        for (pos, &j) in self.columns.iter().enumerate() {
            // [(XᵀX)⁻¹]_jj is the squared norm of row j of R⁻¹
            let d: f64 = rinv.row(pos).norm_squared();
            let increase = beta[j] * beta[j] / d / n;
            if best.is_none_or(|(_, b)| increase < b) {
                best = Some((pos, increase));
            }
        }
        best
    }
}

/// Forward-backward greedy fit.
pub fn fit_foba(design: &DesignMatrix, config: &FobaConfig) -> Result<CoefficientVector> {
    let epsilon = match config.epsilon {
        Some(e) => e,
        None => default_epsilon(design, config)?,
    };
    let max_active = design.m().min(design.n().saturating_sub(1));
    let max_iterations = 10 * (max_active + 1);
    let mut active = ActiveSet::new(design);
    let mut gains: Vec<f64> = Vec::new();
    let mut events = Vec::new();

    for _ in 0..max_iterations {
        if active.columns.len() >= max_active {
            break;
        }
        let Some((j, _)) = active.best_addition() else {
            break;
        };
        let before = active.loss();
        let mut trial = active.columns.clone();
        trial.push(j);
        active.rebuild(trial);
        let gain = before - active.loss();
        if !(gain >= epsilon) {
            active.columns.pop();
            let kept = active.columns.clone();
            active.rebuild(kept);
            break;
        }
        gains.push(gain);
        events.push(FobaEvent::Forward {
            column: j,
            gain,
            loss: active.loss(),
        });

        while active.columns.len() > 1 {
            let Some((pos, increase)) = active.cheapest_removal() else {
                break;
            };
            let reference = *gains.last().expect("gain per active column");
            if !(increase < config.nu * reference) {
                break;
            }
            let column = active.columns[pos];
            let mut kept = active.columns.clone();
            kept.remove(pos);
            active.rebuild(kept);
            gains.pop();
            events.push(FobaEvent::Backward {
                column,
                increase,
                reference_gain: reference,
                loss: active.loss(),
            });
        }
    }
    let beta = active.coefficients();
    Ok(CoefficientVector::new(
        design,
        Method::Foba,
        beta,
        FitTrace::Foba { epsilon, events },
    ))
}

/// Checks a FoBa trace: forward losses non-increasing and every deletion
/// bounded by `ν` times its reference gain. Returns the first violation.
pub fn verify_foba_trace(events: &[FobaEvent], nu: f64) -> std::result::Result<(), String> {
    let mut last_loss: Option<f64> = None;
    for (k, e) in events.iter().enumerate() {
        match e {
            FobaEvent::Forward { gain, loss, .. } => {
                if *gain < 0.0 {
                    return Err(format!("event {k}: negative forward gain {gain}"));
                }
                if let Some(prev) = last_loss {
                    if *loss > prev + 1e-12 * prev.abs().max(1.0) {
                        return Err(format!("event {k}: forward loss rose {prev} -> {loss}"));
                    }
                }
            }
            FobaEvent::Backward {
                increase,
                reference_gain,
                ..
            } => {
                if !(*increase < nu * reference_gain) {
                    return Err(format!(
                        "event {k}: deletion cost {increase} not below {nu} x {reference_gain}"
                    ));
                }
            }
        }
        last_loss = Some(match e {
            FobaEvent::Forward { loss, .. } | FobaEvent::Backward { loss, .. } => *loss,
        });
    }
    Ok(())
}
