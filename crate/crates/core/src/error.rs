use thiserror::Error;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Numerical,
    Data,
}

#[derive(Debug, Error)]
pub enum HofdError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "matrix is not positive definite: leading minor of order {order} failed (pivot {pivot:.3e})"
    )]
    NotPositiveDefinite { order: usize, pivot: f64 },

    #[error("infeasible correlation matrix: {0}")]
    InfeasibleCorrelation(String),

    #[error("non-finite value at row {row}, column '{column}'")]
    NonFinite { row: usize, column: String },

    #[error("input column '{column}' is constant (degenerate input)")]
    DegenerateInput { column: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("insufficient sample: n = {n}, need more than {required}")]
    InsufficientSample { n: usize, required: usize },

    #[error("rank deficiency in univariate system of input {input} at degree {degree}")]
    RankDeficient { input: usize, degree: usize },

    #[error(
        "Gram matrix for subset {subset} is numerically singular (reciprocal condition {rcond:.3e})"
    )]
    SingularGram { subset: String, rcond: f64 },

    #[error("design is rank deficient or underdetermined (m = {m}, n = {n}); use foba or lars")]
    RankDeficientDesign { m: usize, n: usize },

    #[error("constant response: empirical variance is zero")]
    ConstantResponse,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HofdError {
    pub fn category(&self) -> ErrorCategory {
        use HofdError::*;
        match self {
            Config(_) | NotPositiveDefinite { .. } | InfeasibleCorrelation(_) => {
                ErrorCategory::Config
            }
            RankDeficient { .. }
            | SingularGram { .. }
            | RankDeficientDesign { .. }
            | Numerical(_) => ErrorCategory::Numerical,
            NonFinite { .. }
            | DegenerateInput { .. }
            | Data(_)
            | InsufficientSample { .. }
            | ConstantResponse
            | Io(_)
            | Csv(_)
            | Json(_) => ErrorCategory::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, HofdError>;
