mod common;

use nalgebra::DVector;
use proptest::prelude::*;

use hofd::distributions::{toy_covariance, toy_inputs, Sample};
use hofd::hogs::{check_hierarchical_orthogonality, fit_basis, HofdBasis};
use hofd::subsets::enumerate_subsets;
use hofd::univariate::UnivariateSystem;

use common::{median, population_basis, Quadrature};

fn toy_sample(n: usize, seed: u64) -> Sample {
    let x = toy_inputs().sample(n, seed).unwrap();
    let y = DVector::from_iterator(n, (0..n).map(|s| x[(s, 0)] * x[(s, 1)] + x[(s, 2)]));
    Sample::new(x, y).unwrap()
}

fn hermite(sample: &Sample, size: usize) -> Vec<UnivariateSystem> {
    (0..sample.p())
        .map(|i| UnivariateSystem::hermite_for_column(i, size, sample.column(i)).unwrap())
        .collect()
}

#[test]
fn toy_parameter_count() {
    let sample = toy_sample(400, 1);
    let basis = fit_basis(&hermite(&sample, 10), 2, &sample).unwrap();
    assert_eq!(basis.dim(), 3 * 10 + 3 * 100);
    assert_eq!(enumerate_subsets(8, 3).unwrap().len(), 92);
}

#[test]
fn first_order_basis_checks_means_only() {
    let sample = toy_sample(100, 2);
    let basis = fit_basis(&hermite(&sample, 4), 1, &sample).unwrap();
    let report = check_hierarchical_orthogonality(&basis, &sample);
    assert!(report.holds());
    assert!(report.entries.iter().all(|e| e.against.is_none()));
}

#[test]
fn bundle_file_roundtrip_reproduces_design() {
    let sample = toy_sample(150, 3);
    let basis = fit_basis(&hermite(&sample, 3), 2, &sample).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("basis.json");
    std::fs::write(&path, basis.to_json().unwrap()).unwrap();
    let back = HofdBasis::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let a = basis.design_values(sample.inputs()).unwrap();
    let b = back.design_values(sample.inputs()).unwrap();
    assert_eq!(a, b);
}

/// L2 distance between empirical basis functions and their population
/// counterparts shrinks as the sample grows.
#[test]
fn empirical_basis_converges_to_population_basis() {
    let cov = toy_covariance();
    let quad = Quadrature::gaussian(&cov, 8);
    let pop = population_basis(&quad, &cov, 2, 2);
    let distance = |n: usize, seed: u64| -> f64 {
        let sample = toy_sample(n, seed);
        let basis = fit_basis(&hermite(&sample, 2), 2, &sample).unwrap();
        let values = basis.design_values(&quad.points).unwrap();
        pop.iter()
            .enumerate()
            .map(|(j, f)| {
                let d: Vec<f64> = (0..quad.len()).map(|t| (values[(t, j)] - f.values[t]).powi(2)).collect();
                quad.expect(&d)
            })
            .sum::<f64>()
            .sqrt()
    };
    let medians: Vec<f64> = [250, 1000, 4000]
        .iter()
        .map(|&n| median(&(0..7).map(|s| distance(n, 40 + s)).collect::<Vec<_>>()))
        .collect();
    assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
    // n^{-1/2} predicts a factor 4 over a 16-fold sample size
    assert!(medians[2] < 0.4 * medians[0], "{medians:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fresh_bases_are_hierarchically_orthogonal(
        seed in any::<u64>(),
        order in 1usize..=3,
        size in 1usize..=3,
        spline in any::<bool>(),
    ) {
        let m: usize = enumerate_subsets(3, order)
            .unwrap()
            .iter()
            .map(|u| size.pow(u.len() as u32))
            .sum();
        let sample = toy_sample(5 * m + 20, seed);
        let systems: Vec<UnivariateSystem> = (0..3)
            .map(|i| {
                if spline {
                    UnivariateSystem::bspline(i, size, size.min(2), sample.column(i)).unwrap()
                } else {
                    UnivariateSystem::hermite_for_column(i, size, sample.column(i)).unwrap()
                }
            })
            .collect();
        let basis = fit_basis(&systems, order, &sample).unwrap();
        prop_assert_eq!(basis.dim(), m);
        prop_assert!(check_hierarchical_orthogonality(&basis, &sample).max_violation() < 1e-8);
    }
}
