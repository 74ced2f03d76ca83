//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Gauss–Hermite rule for the standard normal density (Golub–Welsch on the
/// Jacobi matrix of the probabilists' Hermite recurrence).
pub fn gauss_hermite(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(k, k);
    for i in 1..k {
        let b = (i as f64).sqrt();
        j[(i - 1, i)] = b;
        j[(i, i - 1)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..k)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Tensor Gauss–Hermite rule for `N(0, cov)`: points as rows.
pub struct Quadrature {
    pub points: DMatrix<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn gaussian(cov: &DMatrix<f64>, k: usize) -> Self {
        let p = cov.nrows();
        let l = cov.clone().cholesky().expect("positive definite").l();
        let (z, w) = gauss_hermite(k);
        let total = k.pow(p as u32);
        let mut points = DMatrix::zeros(total, p);
        let mut weights = vec![1.0; total];
        for t in 0..total {
            let mut rest = t;
            let mut zt = DVector::zeros(p);
            for d in 0..p {
                let i = rest % k;
                rest /= k;
                zt[d] = z[i];
                weights[t] *= w[i];
            }
            let x = &l * zt;
            for d in 0..p {
                points[(t, d)] = x[d];
            }
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.points.row(t).iter().copied().collect()
    }

    pub fn expect(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| x * y * w).sum()
    }
}

/// Orthonormal Hermite polynomial `He_l(x/σ)/√(l!)` from the unnormalized
/// recurrence `He_{k+1} = z He_k - k He_{k-1}`.
pub fn hermite_orthonormal(l: usize, x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..l {
        let next = z * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    let fact: f64 = (1..=l).map(|k| k as f64).product();
    cur / fact.sqrt()
}

/// One population basis function: label and its values on the grid.
pub struct PopulationFunction {
    pub subset: Vec<usize>,
    pub index: Vec<usize>,
    pub values: Vec<f64>,
}

/// Population hierarchically orthogonal basis for `N(0, cov)` inputs with
/// Hermite systems of size `size`, built by orthogonal projection of each
/// tensor product onto the span of the constant and all lower-order
/// functions, evaluated on `quad`. Subsets in size-then-lexicographic order,
/// multi-indices with the last coordinate fastest.
pub fn population_basis(quad: &Quadrature, cov: &DMatrix<f64>, size: usize, order: usize) -> Vec<PopulationFunction> {
    let p = cov.nrows();
    let sigma: Vec<f64> = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
    let univariate = |i: usize, l: usize| -> Vec<f64> {
        (0..quad.len())
            .map(|t| hermite_orthonormal(l, quad.points[(t, i)], sigma[i]))
            .collect()
    };
    let mut out: Vec<PopulationFunction> = Vec::new();
    for k in 1..=order {
        for u in combinations(p, k) {
            let lower: Vec<usize> = out
                .iter()
                .enumerate()
                .filter(|(_, f)| f.subset.iter().all(|i| u.contains(i)) && f.subset.len() < u.len())
                .map(|(j, _)| j)
                .collect();
            for index in multi_indices(k, size) {
                let mut tensor = vec![1.0; quad.len()];
                for (pos, &i) in u.iter().enumerate() {
                    let v = univariate(i, index[pos]);
                    tensor.iter_mut().zip(v).for_each(|(a, b)| *a *= b);
                }
                let mut span: Vec<Vec<f64>> = vec![vec![1.0; quad.len()]];
                span.extend(lower.iter().map(|&j| out[j].values.clone()));
                let values = residual(quad, &span, &tensor);
                out.push(PopulationFunction {
                    subset: u.clone(),
                    index,
                    values,
                });
            }
        }
    }
    out
}

fn residual(quad: &Quadrature, span: &[Vec<f64>], f: &[f64]) -> Vec<f64> {
    let k = span.len();
    let g = DMatrix::from_fn(k, k, |a, b| quad.inner(&span[a], &span[b]));
    let rhs = DVector::from_fn(k, |a, _| quad.inner(&span[a], f));
    let c = g.cholesky().expect("lower span is nondegenerate").solve(&rhs);
    let mut r = f.to_vec();
    for (a, s) in span.iter().enumerate() {
        r.iter_mut().zip(s).for_each(|(x, y)| *x -= c[a] * y);
    }
    r
}

/// Population least-squares coefficients of `y - E y` on `basis`.
pub fn population_coefficients(quad: &Quadrature, basis: &[PopulationFunction], y: &[f64]) -> Vec<f64> {
    let m = basis.len();
    let ey = quad.expect(y);
    let yc: Vec<f64> = y.iter().map(|v| v - ey).collect();
    let g = DMatrix::from_fn(m, m, |a, b| quad.inner(&basis[a].values, &basis[b].values));
    let rhs = DVector::from_fn(m, |a, _| quad.inner(&basis[a].values, &yc));
    g.cholesky().expect("population Gram").solve(&rhs).iter().copied().collect()
}

pub fn combinations(p: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..p {
        for mut rest in combinations(p, k - 1) {
            if rest.first().is_none_or(|&r| r > first) {
                rest.insert(0, first);
                out.push(rest);
            }
        }
    }
    out.sort();
    out
}

/// All multi-indices in `{1..size}^k`, last coordinate fastest.
pub fn multi_indices(k: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                (1..=size).map(move |l| {
                    let mut v = prefix.clone();
                    v.push(l);
                    v
                })
            })
            .collect();
    }
    out
}

/// Pick-freeze estimate of the closed Sobol index of `u` for a function of
/// `p` independent standard normal inputs (Jansen's estimator).
pub fn closed_sobol(f: &dyn Fn(&[f64]) -> f64, p: usize, u: &[usize], n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ya = Vec::with_capacity(n);
    let mut diff2 = 0.0;
    for _ in 0..n {
        let a: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let c: Vec<f64> = (0..p).map(|i| if u.contains(&i) { a[i] } else { b[i] }).collect();
        let fa = f(&a);
        diff2 += (fa - f(&c)).powi(2);
        ya.push(fa);
    }
    let nf = n as f64;
    let mean = ya.iter().sum::<f64>() / nf;
    let var = ya.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    1.0 - diff2 / nf / (2.0 * var)
}

/// Sobol indices of every nonempty subset of size ≤ 2 by inclusion–exclusion
/// on closed indices.
pub fn sobol_up_to_pairs(f: &dyn Fn(&[f64]) -> f64, p: usize, n: usize, seed: u64) -> Vec<(Vec<usize>, f64)> {
    let first: Vec<f64> = (0..p).map(|i| closed_sobol(f, p, &[i], n, seed + i as u64)).collect();
    let mut out: Vec<(Vec<usize>, f64)> = (0..p).map(|i| (vec![i], first[i])).collect();
    for (k, pair) in combinations(p, 2).into_iter().enumerate() {
        let clo = closed_sobol(f, p, &pair, n, seed + 100 + k as u64);
        out.push((pair.clone(), clo - first[pair[0]] - first[pair[1]]));
    }
    out
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}
