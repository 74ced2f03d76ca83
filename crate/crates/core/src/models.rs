//! Bundled test responses.

use serde::{Deserialize, Serialize};

use crate::error::{HofdError, Result};

/// Coefficients of the three-input toy response
/// `(a0 + a1 x1)(b0 + b1 x2) + (c0 + c1 x2 + c2 x2²) + (d0 + d1 x3 + d2 x3² + d3 x3³)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyCoefficients {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub c: [f64; 3],
    pub d: [f64; 4],
}

impl Default for ToyCoefficients {
    fn default() -> Self {
        Self {
            a: [1.0, 2.0],
            b: [2.0, 3.0],
            c: [3.0, 1.0, 2.0],
            d: [1.0, 2.0, 2.0, 3.0],
        }
    }
}

impl ToyCoefficients {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let [a0, a1] = self.a;
        let [b0, b1] = self.b;
        let [c0, c1, c2] = self.c;
        let [d0, d1, d2, d3] = self.d;
        let (x1, x2, x3) = (x[0], x[1], x[2]);
        (a0 + a1 * x1) * (b0 + b1 * x2)
            + (c0 + c1 * x2 + c2 * x2 * x2)
            + (d0 + x3 * (d1 + x3 * (d2 + d3 * x3)))
    }
}

/// `coefficient * Π x_i^{powers_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coefficient: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Toy {
        #[serde(default)]
        coefficients: ToyCoefficients,
    },
    Linear {
        #[serde(default)]
        intercept: f64,
        weights: Vec<f64>,
    },
    Polynomial {
        terms: Vec<Monomial>,
    },
}

impl ModelSpec {
    pub fn toy() -> Self {
        ModelSpec::Toy {
            coefficients: ToyCoefficients::default(),
        }
    }

    /// Number of inputs the model reads, if fixed.
    pub fn inputs(&self) -> usize {
        match self {
            ModelSpec::Toy { .. } => 3,
            ModelSpec::Linear { weights, .. } => weights.len(),
            ModelSpec::Polynomial { terms } => terms.iter().map(|t| t.powers.len()).max().unwrap_or(0),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let needed = self.inputs();
        if needed > p {
            return Err(HofdError::Config(format!(
                "model reads {needed} inputs but only {p} are defined"
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ModelSpec::Toy { coefficients } => coefficients.eval(x),
            ModelSpec::Linear { intercept, weights } => {
                intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            }
            ModelSpec::Polynomial { terms } => terms
                .iter()
                .map(|t| {
                    t.powers
                        .iter()
                        .zip(x)
                        .fold(t.coefficient, |acc, (&k, &v)| acc * v.powi(k as i32))
                })
                .sum(),
        }
    }
}
