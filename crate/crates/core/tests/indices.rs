mod common;

use nalgebra::DVector;

use hofd::distributions::{toy_covariance, InputBlock, InputSpec};
use hofd::indices::{estimate_indices, reconstruct_components, IndexKey, ReportMeta, SensitivityReport};
use hofd::models::ModelSpec;
use hofd::pipeline::{replicate_with, BasisConfig, PipelineConfig};
use hofd::regression::{FitConfig, Method};
use hofd::subsets::Subset;
use hofd::HofdError;

use common::{hermite_orthonormal, population_basis, population_coefficients, Quadrature};

fn standard_normals(p: usize) -> InputSpec {
    InputSpec {
        blocks: vec![InputBlock::Gaussian {
            mean: vec![0.0; p],
            cov: (0..p).map(|i| (0..p).map(|j| f64::from(u8::from(i == j))).collect()).collect(),
        }],
    }
}

fn ols(cfg: PipelineConfig) -> PipelineConfig {
    PipelineConfig {
        fit: FitConfig {
            method: Method::Ols,
            ..FitConfig::default()
        },
        ..cfg
    }
}

fn small_basis(size: usize) -> BasisConfig {
    BasisConfig {
        size,
        ..BasisConfig::default()
    }
}

#[test]
fn single_factor_model() {
    let cfg = ols(PipelineConfig {
        inputs: Some(standard_normals(3)),
        model: Some(ModelSpec::Linear {
            intercept: 0.0,
            weights: vec![1.0, 0.0, 0.0],
        }),
        n: 10_000,
        basis: small_basis(3),
        ..PipelineConfig::default()
    });
    let rep = cfg.run(1).unwrap().report;
    for e in &rep.entries {
        let expected = if e.subset == IndexKey::Subset(Subset::singleton(0)) { 1.0 } else { 0.0 };
        assert!((e.s - expected).abs() < 0.02, "{}: {}", e.subset, e.s);
    }
}

#[test]
fn indices_are_invariant_to_response_scale() {
    let cfg = ols(PipelineConfig {
        n: 500,
        basis: small_basis(3),
        ..PipelineConfig::toy()
    });
    let sample = cfg.sample(4).unwrap();
    let scaled = sample.with_response(sample.response() * 10.0).unwrap();
    let a = cfg.run_on_sample(sample, 4).unwrap().report;
    let b = cfg.run_on_sample(scaled, 4).unwrap().report;
    for (x, y) in a.entries.iter().zip(&b.entries) {
        assert!((x.s - y.s).abs() < 1e-12);
        assert!((x.var_part - y.var_part).abs() < 1e-12);
    }
    assert!((b.global_variance / a.global_variance - 100.0).abs() < 1e-9);
}

#[test]
fn nested_covariances_vanish_on_the_training_sample() {
    let run = PipelineConfig::toy().run(6).unwrap();
    let comps = reconstruct_components(&run.design, &run.fit).unwrap();
    let n = comps.n() as f64;
    let v = comps.response.norm_squared() / n;
    for a in &comps.components {
        for b in &comps.components {
            if b.subset.is_proper_subset_of(&a.subset) {
                let c = a.values.dot(&b.values) / n;
                assert!(c.abs() < 1e-8 * v, "{} vs {}: {c}", a.subset, b.subset);
            }
        }
    }
}

/// OLS component of `X₂` against its population expansion.
#[test]
fn reconstructed_component_matches_population_expansion() {
    let cov = toy_covariance();
    let quad = Quadrature::gaussian(&cov, 8);
    let pop = population_basis(&quad, &cov, 3, 2);
    let model = ModelSpec::toy();
    let y: Vec<f64> = (0..quad.len()).map(|t| model.eval(&quad.row(t))).collect();
    let beta0 = population_coefficients(&quad, &pop, &y);

    let cfg = ols(PipelineConfig {
        n: 2000,
        basis: small_basis(3),
        ..PipelineConfig::toy()
    });
    let run = cfg.run(8).unwrap();
    let comps = reconstruct_components(&run.design, &run.fit).unwrap();
    let est = comps.get(&Subset::singleton(1)).unwrap();
    let sigma2 = cov[(1, 1)].sqrt();
    let x2 = run.sample.column(1);
    let mut sq = 0.0;
    for (s, &x) in x2.iter().enumerate() {
        let truth: f64 = pop
            .iter()
            .zip(&beta0)
            .filter(|(f, _)| f.subset == [1])
            .map(|(f, b)| b * hermite_orthonormal(f.index[0], x, sigma2))
            .sum();
        sq += (est[s] - truth).powi(2);
    }
    let rms = (sq / x2.len() as f64).sqrt();
    assert!(rms < 0.05, "RMS {rms}");
}

#[test]
fn independent_inputs_have_small_cross_covariances() {
    let cfg = ols(PipelineConfig {
        inputs: Some(standard_normals(3)),
        model: Some(ModelSpec::Polynomial {
            terms: vec![
                hofd::models::Monomial {
                    coefficient: 1.0,
                    powers: vec![1, 1, 0],
                },
                hofd::models::Monomial {
                    coefficient: 1.0,
                    powers: vec![0, 1, 1],
                },
                hofd::models::Monomial {
                    coefficient: 0.5,
                    powers: vec![0, 0, 2],
                },
            ],
        }),
        n: 10_000,
        basis: small_basis(2),
        ..PipelineConfig::default()
    });
    let rep = cfg.run(12).unwrap().report;
    assert!(rep.entries.iter().all(|e| e.cross_cov_part.abs() < 0.05));
}

#[test]
fn first_order_config_reports_main_effects_only() {
    let cfg = PipelineConfig {
        order: 1,
        n: 150,
        ..PipelineConfig::toy()
    };
    let rep = cfg.run(2).unwrap().report;
    let keys: Vec<String> = rep.entries.iter().map(|e| e.subset.to_string()).collect();
    assert_eq!(keys, ["{1}", "{2}", "{3}", "rest"]);
}

#[test]
fn constant_response_is_an_error() {
    let cfg = PipelineConfig::toy();
    let sample = cfg.sample(1).unwrap();
    let basis = cfg.basis(&sample).unwrap();
    let flat = sample.with_response(DVector::from_element(sample.n(), 3.0)).unwrap();
    let (design, coef) = cfg.fit_on_basis(&basis, &flat, 1).unwrap();
    let comps = reconstruct_components(&design, &coef).unwrap();
    assert!(matches!(
        estimate_indices(&comps, ReportMeta::default()),
        Err(HofdError::ConstantResponse)
    ));
}

#[test]
fn replication_bookkeeping() {
    let cfg = PipelineConfig {
        n: 120,
        basis: small_basis(3),
        ..PipelineConfig::toy()
    };
    let same = replicate_with(&[7, 7], |s| cfg.run(s).map(|r| r.report)).unwrap();
    assert!(same.stats.iter().all(|s| s.sd == 0.0));

    let seeds: Vec<u64> = (0..50).collect();
    let sum = replicate_with(&seeds, |s| {
        if s == 13 {
            Err(HofdError::Numerical("forced failure".into()))
        } else {
            cfg.run(s).map(|r| r.report)
        }
    })
    .unwrap();
    assert_eq!((sum.requested, sum.succeeded), (50, 49));
    assert_eq!(sum.failures[0].seed, 13);
    let mut buf = Vec::new();
    sum.write_boxplot_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1 + 49);
    for st in &sum.stats {
        assert!(st.q05 <= st.median && st.median <= st.q95);
    }
}

#[test]
fn report_json_and_csv() {
    let rep = PipelineConfig {
        n: 150,
        ..PipelineConfig::toy()
    }
    .run(3)
    .unwrap()
    .report;
    let back: SensitivityReport = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
    assert_eq!(back, rep);
    let value: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
    assert!(value["entries"][0]["S"].is_number());
    assert_eq!(value["entries"][6]["subset"], "rest");
    let mut buf = Vec::new();
    rep.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("subset,S,var_part,cov_part,cross_cov_part\n"));
    assert_eq!(text.lines().count(), 1 + rep.entries.len());
}
