//! Least-squares fitting over the hierarchically orthogonal basis: design
//! assembly, dense fits (OLS, ridge) and sparse selection (FoBa, Lasso path
//! by modified LARS).

mod foba;
mod lars;
mod ols;

use std::fmt;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use foba::{fit_foba, verify_foba_trace, FobaEvent};
pub use lars::{fit_lars, lars_path, LarsFit, LarsPath, PathEvent, PathPoint};
pub use ols::{fit_ols, fit_ridge};

use crate::distributions::Sample;
use crate::error::{HofdError, Result};
use crate::hogs::HofdBasis;
use crate::linalg::{emp_dot, mean, reciprocal_condition};
use crate::subsets::Subset;

/// Identifies one design column: subset `u` and multi-index `l_u`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnLabel {
    pub subset: Subset,
    pub index: Vec<usize>,
}

impl fmt::Display for ColumnLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.subset)?;
        for (k, l) in self.index.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "]")
    }
}

/// `n x m` matrix of basis values with the centered response.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    /// `ỹ = y - ȳ`.
    pub y: DVector<f64>,
    pub y_mean: f64,
    pub labels: Vec<ColumnLabel>,
    /// Column range of each subset block.
    pub blocks: Vec<(Subset, Range<usize>)>,
}

impl DesignMatrix {
    /// Builds a design from raw parts, centering `y`.
    pub fn new(
        x: DMatrix<f64>,
        y: &DVector<f64>,
        labels: Vec<ColumnLabel>,
        blocks: Vec<(Subset, Range<usize>)>,
    ) -> Result<Self> {
        if x.nrows() != y.len() || labels.len() != x.ncols() {
            return Err(HofdError::Data(format!(
                "design is {}x{} with {} labels and {} responses",
                x.nrows(),
                x.ncols(),
                labels.len(),
                y.len()
            )));
        }
        let y_mean = mean(y.as_slice());
        Ok(Self {
            x,
            y: y.add_scalar(-y_mean),
            y_mean,
            labels,
            blocks,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn max_column_mean(&self) -> f64 {
        (0..self.m())
            .map(|j| mean(self.x.column(j).as_slice()).abs())
            .fold(0.0, f64::max)
    }

    /// `‖ỹ - Xβ‖ₙ²`.
    pub fn loss(&self, beta: &[f64]) -> f64 {
        let r = self.residual(beta);
        emp_dot(r.as_slice(), r.as_slice())
    }

    pub fn residual(&self, beta: &[f64]) -> DVector<f64> {
        &self.y - &self.x * DVector::from_column_slice(beta)
    }

    /// Reciprocal condition of `XᵀX / n`; `None` when `m >= n`.
    pub fn gram_rcond(&self) -> Option<f64> {
        if self.m() >= self.n() {
            return None;
        }
        Some(reciprocal_condition(&(self.x.tr_mul(&self.x) / self.n() as f64)))
    }

    /// Design restricted to the rows in `rows`, with the response recentered.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let x = self.x.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&s| self.y[s]));
        let y_mean = mean(y.as_slice());
        Self {
            x,
            y: y.add_scalar(-y_mean),
            y_mean: self.y_mean + y_mean,
            labels: self.labels.clone(),
            blocks: self.blocks.clone(),
        }
    }
}

/// Evaluates `basis` on the sample and centers the response.
pub fn assemble_design(basis: &HofdBasis, sample: &Sample) -> Result<DesignMatrix> {
    if sample.p() != basis.p() {
        return Err(HofdError::Data(format!(
            "sample has {} inputs, basis expects {}",
            sample.p(),
            basis.p()
        )));
    }
    let x = basis.design_values(sample.inputs())?;
    let mut labels = Vec::with_capacity(x.ncols());
    let mut blocks = Vec::with_capacity(basis.blocks.len());
    for block in &basis.blocks {
        let start = labels.len();
        for f in &block.functions {
            labels.push(ColumnLabel {
                subset: block.subset.clone(),
                index: f.index.clone(),
            });
        }
        blocks.push((block.subset.clone(), start..labels.len()));
    }
    DesignMatrix::new(x, sample.response(), labels, blocks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ols,
    Foba,
    Lars,
    Ridge,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Ols => "ols",
            Method::Foba => "foba",
            Method::Lars => "lars",
            Method::Ridge => "ridge",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Method {
    type Err = HofdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(Method::Ols),
            "foba" => Ok(Method::Foba),
            "lars" => Ok(Method::Lars),
            "ridge" => Ok(Method::Ridge),
            other => Err(HofdError::Config(format!("unknown fit method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FobaConfig {
    /// Forward stopping threshold. When absent it is set to
    /// `epsilon_scale * σ̂² * ln(m) / n`.
    pub epsilon: Option<f64>,
    /// Backward slack `ν ∈ (0, 1)`.
    pub nu: f64,
    pub epsilon_scale: f64,
    /// Penalty of the preliminary ridge fit giving `σ̂²`, relative to `n`.
    pub prelim_ridge: f64,
}

impl Default for FobaConfig {
    fn default() -> Self {
        Self {
            epsilon: None,
            nu: 0.5,
            epsilon_scale: 2.0,
            prelim_ridge: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LarsConfig {
    /// Path step limit; defaults to `8 * min(n, m)`.
    pub max_steps: Option<usize>,
    pub folds: usize,
}

impl Default for LarsConfig {
    fn default() -> Self {
        Self {
            max_steps: None,
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub method: Method,
    pub foba: FobaConfig,
    pub lars: LarsConfig,
    /// Ridge penalty `λ_n` in `(XᵀX + λ_n I) β = Xᵀỹ`.
    pub ridge_penalty: f64,
    /// Seed for cross-validation splits.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: Method::Foba,
            foba: FobaConfig::default(),
            lars: LarsConfig::default(),
            ridge_penalty: 0.0,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(eps) = self.foba.epsilon {
            if !(eps > 0.0) {
                return Err(HofdError::Config(format!("FoBa epsilon must be > 0, got {eps}")));
            }
        }
        if !(self.foba.nu > 0.0 && self.foba.nu < 1.0) {
            return Err(HofdError::Config(format!(
                "FoBa nu must lie in (0, 1), got {}",
                self.foba.nu
            )));
        }
        if !(self.foba.epsilon_scale > 0.0) || !(self.foba.prelim_ridge > 0.0) {
            return Err(HofdError::Config(
                "FoBa epsilon_scale and prelim_ridge must be > 0".into(),
            ));
        }
        if self.lars.folds < 2 {
            return Err(HofdError::Config(format!(
                "cross-validation needs at least 2 folds, got {}",
                self.lars.folds
            )));
        }
        if !(self.ridge_penalty >= 0.0) {
            return Err(HofdError::Config(format!(
                "ridge penalty must be >= 0, got {}",
                self.ridge_penalty
            )));
        }
        Ok(())
    }
}

/// Selection history of an iterative fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitTrace {
    None,
    Foba {
        epsilon: f64,
        events: Vec<FobaEvent>,
    },
    Lars {
        path_len: usize,
        truncated: bool,
        chosen_lambda: f64,
        cv_lambdas: Vec<f64>,
        cv_mse: Vec<f64>,
    },
}

/// Block-labelled coefficient vector with fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub method: Method,
    pub labels: Vec<ColumnLabel>,
    pub beta: Vec<f64>,
    /// `‖ỹ - Xβ‖ₙ²`.
    pub residual_norm_sq: f64,
    pub trace: FitTrace,
}

impl CoefficientVector {
    pub(crate) fn new(design: &DesignMatrix, method: Method, beta: Vec<f64>, trace: FitTrace) -> Self {
        let residual_norm_sq = design.loss(&beta);
        Self {
            method,
            labels: design.labels.clone(),
            beta,
            residual_norm_sq,
            trace,
        }
    }

    /// Indices of nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        (0..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect()
    }

    pub fn support_size(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }

    pub fn support_labels(&self) -> Vec<String> {
        self.support().iter().map(|&j| self.labels[j].to_string()).collect()
    }
}

/// Dispatches on `config.method`.
pub fn fit(design: &DesignMatrix, config: &FitConfig) -> Result<CoefficientVector> {
    config.validate()?;
    match config.method {
        Method::Ols => fit_ols(design),
        Method::Foba => fit_foba(design, &config.foba),
        Method::Lars => Ok(fit_lars(design, &config.lars, config.seed)?.chosen),
        Method::Ridge => fit_ridge(design, config.ridge_penalty),
    }
}
