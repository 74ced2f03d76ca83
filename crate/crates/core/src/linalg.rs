//! Small dense linear-algebra helpers shared by the samplers, the basis
//! construction and the regression solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{HofdError, Result};

/// Lower Cholesky factor of a symmetric positive definite matrix.
///
/// Fails with the order of the first leading minor whose pivot is not
/// strictly positive.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(HofdError::Config(format!(
            "matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(HofdError::NotPositiveDefinite {
                order: j + 1,
                pivot: diag,
            });
        }
        let d = diag.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let scale = a.amax().max(1.0);
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            if (a[(i, j)] - a[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Ratio of smallest to largest eigenvalue of a symmetric PSD matrix.
/// Returns 0 when the smallest eigenvalue is not positive.
pub fn reciprocal_condition(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if max <= 0.0 || min <= 0.0 {
        0.0
    } else {
        min / max
    }
}

/// Solves `l lᵀ x = b` given the lower Cholesky factor `l`.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Empirical inner product `(1/n) Σ a_s b_s`.
pub fn emp_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n
}

pub fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cholesky_reports_failing_minor() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 2.0, 1.0]);
        match cholesky_lower(&a) {
            Err(HofdError::NotPositiveDefinite { order, .. }) => assert_eq!(order, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cholesky_solve_roundtrip() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let l = cholesky_lower(&a).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = cholesky_solve(&l, &b);
        let r = &a * &x - &b;
        assert_abs_diff_eq!(r.amax(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn rcond_of_identity_is_one() {
        assert_abs_diff_eq!(
            reciprocal_condition(&DMatrix::identity(4, 4)),
            1.0,
            epsilon = 1e-14
        );
    }
}
