use nalgebra::DVector;

use super::{CoefficientVector, DesignMatrix, FitTrace, Method};
use crate::error::{HofdError, Result};
use crate::hogs::SINGULAR_RCOND;

/// Ordinary least squares through a Householder QR of the design.
pub fn fit_ols(design: &DesignMatrix) -> Result<CoefficientVector> {
    let (n, m) = (design.n(), design.m());
    if m >= n {
        return Err(HofdError::RankDeficientDesign { m, n });
    }
    let qr = design.x.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..m).map(|j| r[(j, j)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || (min / max).powi(2) < SINGULAR_RCOND {
        return Err(HofdError::RankDeficientDesign { m, n });
    }
    let qty = qr.q().tr_mul(&design.y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(HofdError::RankDeficientDesign { m, n })?;
    Ok(CoefficientVector::new(
        design,
        Method::Ols,
        beta.iter().copied().collect(),
        FitTrace::None,
    ))
}

/// Ridge solution of `(XᵀX + λ I) β = Xᵀỹ` via the thin SVD of `X`; with
/// `λ = 0` this is the minimum-norm least-squares solution.
pub fn fit_ridge(design: &DesignMatrix, penalty: f64) -> Result<CoefficientVector> {
    let beta = ridge_solve(design, penalty)?;
    Ok(CoefficientVector::new(
        design,
        Method::Ridge,
        beta.iter().copied().collect(),
        FitTrace::None,
    ))
}

pub(crate) struct RidgeSolution {
    pub beta: DVector<f64>,
    /// Effective degrees of freedom `Σ s² / (s² + λ)`.
    pub dof: f64,
}

pub(crate) fn ridge_with_dof(design: &DesignMatrix, penalty: f64) -> Result<RidgeSolution> {
    if !(penalty >= 0.0) {
        return Err(HofdError::Config(format!(
            "ridge penalty must be >= 0, got {penalty}"
        )));
    }
    let svd = design.x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors");
    let vt = svd.v_t.as_ref().expect("right singular vectors");
    let s = &svd.singular_values;
    let smax = s.max();
    let uty = u.tr_mul(&design.y);
    let mut scaled = DVector::zeros(s.len());
    let mut dof = 0.0;
    for k in 0..s.len() {
        let sk = s[k];
        if penalty == 0.0 {
            if sk > smax * 1e-12 * (design.n().max(design.m()) as f64) {
                scaled[k] = uty[k] / sk;
                dof += 1.0;
            }
        } else {
            scaled[k] = sk * uty[k] / (sk * sk + penalty);
            dof += sk * sk / (sk * sk + penalty);
        }
    }
    Ok(RidgeSolution {
        beta: vt.tr_mul(&scaled),
        dof,
    })
}

fn ridge_solve(design: &DesignMatrix, penalty: f64) -> Result<DVector<f64>> {
    Ok(ridge_with_dof(design, penalty)?.beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::ColumnLabel;
    use crate::subsets::Subset;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn labels(m: usize) -> Vec<ColumnLabel> {
        (0..m)
            .map(|j| ColumnLabel {
                subset: Subset::singleton(0),
                index: vec![j + 1],
            })
            .collect()
    }

    fn random_design(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() - 0.5);
        for j in 0..m {
            let mu = x.column(j).mean();
            x.column_mut(j).add_scalar_mut(-mu);
        }
        x
    }

    #[test]
    fn response_equal_to_a_column_is_recovered() {
        let x = random_design(30, 4, 1);
        let y = x.column(2).into_owned();
        let d = DesignMatrix::new(x, &y, labels(4), vec![]).unwrap();
        let fit = fit_ols(&d).unwrap();
        for (j, b) in fit.beta.iter().enumerate() {
            let expected = if j == 2 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(*b, expected, epsilon = 1e-10);
        }
        assert!(fit.residual_norm_sq < 1e-20);
    }

    #[test]
    fn wide_design_rejected() {
        let x = random_design(5, 6, 2);
        let y = DVector::from_element(5, 1.0) + x.column(0);
        let d = DesignMatrix::new(x, &y, labels(6), vec![]).unwrap();
        assert!(matches!(fit_ols(&d), Err(HofdError::RankDeficientDesign { .. })));
    }

    #[test]
    fn collinear_design_rejected() {
        let mut x = random_design(20, 3, 3);
        let c0 = x.column(0).into_owned();
        x.set_column(2, &(c0 * 2.0));
        let y = x.column(1).into_owned();
        let d = DesignMatrix::new(x, &y, labels(3), vec![]).unwrap();
        assert!(matches!(fit_ols(&d), Err(HofdError::RankDeficientDesign { .. })));
    }

    #[test]
    fn ridge_zero_penalty_equals_ols() {
        let x = random_design(40, 6, 4);
        let y = DVector::from_fn(40, |s, _| (s as f64).sin());
        let d = DesignMatrix::new(x, &y, labels(6), vec![]).unwrap();
        let a = fit_ols(&d).unwrap();
        let b = fit_ridge(&d, 0.0).unwrap();
        for (u, v) in a.beta.iter().zip(&b.beta) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-10);
        }
    }

    #[test]
    fn ridge_large_penalty_shrinks_to_zero() {
        let x = random_design(40, 6, 5);
        let y = DVector::from_fn(40, |s, _| (s as f64).cos());
        let d = DesignMatrix::new(x, &y, labels(6), vec![]).unwrap();
        let b = fit_ridge(&d, 1e12).unwrap();
        assert!(b.beta.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn ridge_two_by_two_normal_equations() {
        // X = [[1, 2], [-1, 0], [0, -2]] (centered columns), y = [1, 0, -1]
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.0, 0.0, -2.0]);
        let y = DVector::from_vec(vec![1.0, 0.0, -1.0]);
        let d = DesignMatrix::new(x, &y, labels(2), vec![]).unwrap();
        let b = fit_ridge(&d, 1.0).unwrap();
        // XᵀX + I = [[3, 2], [2, 9]], Xᵀy = [1, 4]; det = 23
        assert_abs_diff_eq!(b.beta[0], (9.0 - 8.0) / 23.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.beta[1], (12.0 - 2.0) / 23.0, epsilon = 1e-12);
    }
}
