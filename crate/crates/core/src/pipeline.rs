//! End-to-end estimation: sample, basis, fit, indices; replication and
//! method comparison on top.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distributions::{load_sample, InputSpec, Sample};
use crate::error::{HofdError, Result};
use crate::hogs::{fit_basis, HofdBasis};
use crate::indices::{aggregate_replicates, indices_from_fit, ReplicateSummary, ReportMeta, SensitivityReport};
use crate::models::ModelSpec;
use crate::regression::{assemble_design, fit, CoefficientVector, DesignMatrix, FitConfig, Method};
use crate::univariate::UnivariateSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    #[default]
    Hermite,
    Bspline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub family: FamilyKind,
    /// `L`, shared by every input unless `sizes` is given.
    pub size: usize,
    pub sizes: Option<Vec<usize>>,
    /// Spline degree; ignored for Hermite.
    pub degree: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            family: FamilyKind::Hermite,
            size: 10,
            sizes: None,
            degree: 3,
        }
    }
}

impl BasisConfig {
    pub fn size_of(&self, input: usize) -> usize {
        self.sizes
            .as_ref()
            .and_then(|s| s.get(input).copied())
            .unwrap_or(self.size)
    }

    pub fn describe(&self, input: usize) -> String {
        match self.family {
            FamilyKind::Hermite => format!("hermite(L={})", self.size_of(input)),
            FamilyKind::Bspline => {
                format!("bspline(L={},degree={})", self.size_of(input), self.degree)
            }
        }
    }

    /// Reference systems for every input, fitted to the sample's columns.
    pub fn systems(&self, sample: &Sample) -> Result<Vec<UnivariateSystem>> {
        (0..sample.p())
            .map(|i| {
                let size = self.size_of(i);
                match self.family {
                    FamilyKind::Hermite => UnivariateSystem::hermite_for_column(i, size, sample.column(i)),
                    FamilyKind::Bspline => {
                        UnivariateSystem::bspline(i, size, self.degree, sample.column(i))
                    }
                }
            })
            .collect()
    }
}

/// Everything a run depends on besides the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Option<InputSpec>,
    pub model: Option<ModelSpec>,
    /// CSV sample used instead of `inputs` and `model`.
    pub sample: Option<PathBuf>,
    /// Input column names in the CSV; all non-response columns by default.
    pub input_columns: Option<Vec<String>>,
    pub response: String,
    pub n: usize,
    /// Maximal interaction order `d`.
    pub order: usize,
    pub basis: BasisConfig,
    pub fit: FitConfig,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: None,
            model: None,
            sample: None,
            input_columns: None,
            response: "y".into(),
            n: 200,
            order: 2,
            basis: BasisConfig::default(),
            fit: FitConfig::default(),
            replicates: 1,
            seed: 0,
        }
    }
}

/// Outcome of one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub sample: Sample,
    pub basis: HofdBasis,
    pub design: DesignMatrix,
    pub fit: CoefficientVector,
    pub report: SensitivityReport,
}

impl PipelineConfig {
    /// The bundled correlated-Gaussian toy setup.
    pub fn toy() -> Self {
        Self {
            inputs: Some(crate::distributions::toy_inputs()),
            model: Some(ModelSpec::toy()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.sample, &self.inputs, &self.model) {
            (Some(_), None, None) => {
                if self.replicates > 1 {
                    return Err(HofdError::Config(
                        "replicates need a generated sample, not a sample file".into(),
                    ));
                }
            }
            (None, Some(inputs), Some(model)) => {
                inputs.validate()?;
                model.validate(inputs.p())?;
                if self.order == 0 || self.order > inputs.p() {
                    return Err(HofdError::Config(format!(
                        "order d = {} must lie in 1..={}",
                        self.order,
                        inputs.p()
                    )));
                }
                if self.n < 2 {
                    return Err(HofdError::Config(format!("n = {} is too small", self.n)));
                }
            }
            _ => {
                return Err(HofdError::Config(
                    "give either a sample file or both inputs and model".into(),
                ))
            }
        }
        if self.order == 0 {
            return Err(HofdError::Config("order d must be >= 1".into()));
        }
        let sizes_ok = self.basis.size >= 1
            && self.basis.sizes.as_ref().is_none_or(|s| s.iter().all(|&l| l >= 1));
        if !sizes_ok {
            return Err(HofdError::Config("every basis size L must be >= 1".into()));
        }
        if self.replicates == 0 {
            return Err(HofdError::Config("replicates must be >= 1".into()));
        }
        self.fit.validate()
    }

    /// Seeds of the replicate runs: `seed, seed + 1, ...`.
    pub fn replicate_seeds(&self) -> Vec<u64> {
        (0..self.replicates as u64).map(|r| self.seed.wrapping_add(r)).collect()
    }

    /// Draws (or loads) the sample for `seed`.
    pub fn sample(&self, seed: u64) -> Result<Sample> {
        if let Some(path) = &self.sample {
            let sample = load_sample(path, self.input_columns.as_deref(), &self.response)?;
            if self.order > sample.p() {
                return Err(HofdError::Config(format!(
                    "order d = {} exceeds the {} inputs of the sample",
                    self.order,
                    sample.p()
                )));
            }
            return Ok(sample);
        }
        let (Some(inputs), Some(model)) = (&self.inputs, &self.model) else {
            return Err(HofdError::Config("no sample source configured".into()));
        };
        let x = inputs.sample(self.n, seed)?;
        let y = nalgebra::DVector::from_iterator(
            self.n,
            (0..self.n).map(|s| model.eval(x.row(s).transpose().as_slice())),
        );
        Sample::new(x, y)
    }

    pub fn basis(&self, sample: &Sample) -> Result<HofdBasis> {
        fit_basis(&self.basis.systems(sample)?, self.order, sample)
    }

    fn meta(&self, seed: u64, p: usize) -> ReportMeta {
        ReportMeta {
            order: self.order,
            basis: (0..p).map(|i| self.basis.describe(i)).collect(),
            seed: Some(seed),
            ..ReportMeta::default()
        }
    }

    /// Fits on an existing basis; `seed` drives the cross-validation split.
    pub fn fit_on_basis(&self, basis: &HofdBasis, sample: &Sample, seed: u64) -> Result<(DesignMatrix, CoefficientVector)> {
        let design = assemble_design(basis, sample)?;
        let cfg = FitConfig {
            seed,
            ..self.fit.clone()
        };
        let coef = fit(&design, &cfg)?;
        Ok((design, coef))
    }

    pub fn run_on_sample(&self, sample: Sample, seed: u64) -> Result<PipelineRun> {
        let basis = self.basis(&sample)?;
        let (design, coef) = self.fit_on_basis(&basis, &sample, seed)?;
        let report = indices_from_fit(&design, &coef, self.meta(seed, sample.p()))?;
        Ok(PipelineRun {
            sample,
            basis,
            design,
            fit: coef,
            report,
        })
    }

    pub fn run(&self, seed: u64) -> Result<PipelineRun> {
        self.run_on_sample(self.sample(seed)?, seed)
    }

    /// Runs every replicate seed in parallel and aggregates the indices.
    pub fn replicate(&self, seeds: &[u64]) -> Result<ReplicateSummary> {
        replicate_with(seeds, |seed| self.run(seed).map(|r| r.report))
    }

    /// FoBa, LARS and (when `m < n`) OLS on identical samples per seed.
    pub fn bench(&self, seeds: &[u64]) -> Result<BenchReport> {
        let probe = self.run(seeds.first().copied().unwrap_or(self.seed));
        let mut methods = vec![Method::Foba, Method::Lars];
        let mut notes = Vec::new();
        match &probe {
            Ok(run) if run.design.m() < run.design.n() => methods.push(Method::Ols),
            Ok(run) => notes.push(format!(
                "ols skipped: {} columns for {} observations",
                run.design.m(),
                run.design.n()
            )),
            Err(e) => notes.push(format!("probe run failed: {e}")),
        }
        let mut per_method = Vec::new();
        let mut checksums: Vec<Vec<String>> = Vec::new();
        for &method in &methods {
            let cfg = PipelineConfig {
                fit: FitConfig {
                    method,
                    ..self.fit.clone()
                },
                ..self.clone()
            };
            let outcomes: Vec<(String, (u64, Result<SensitivityReport>))> = seeds
                .par_iter()
                .map(|&seed| match cfg.sample(seed) {
                    Ok(sample) => {
                        let sum = sample_checksum(&sample);
                        let rep = cfg.run_on_sample(sample, seed).map(|r| r.report);
                        (sum, (seed, rep))
                    }
                    Err(e) => (String::new(), (seed, Err(e))),
                })
                .collect();
            let (sums, outcomes): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
            checksums.push(sums);
            per_method.push(MethodBench {
                method,
                summary: aggregate_replicates(outcomes)?,
            });
        }
        let samples_identical = checksums.windows(2).all(|w| w[0] == w[1]);
        Ok(BenchReport {
            seeds: seeds.to_vec(),
            sample_checksums: checksums.into_iter().next().unwrap_or_default(),
            samples_identical,
            methods: per_method,
            notes,
        })
    }
}

/// Runs `run` on every seed in parallel; failures are kept and counted.
pub fn replicate_with<F>(seeds: &[u64], run: F) -> Result<ReplicateSummary>
where
    F: Fn(u64) -> Result<SensitivityReport> + Sync,
{
    let outcomes: Vec<(u64, Result<SensitivityReport>)> =
        seeds.par_iter().map(|&seed| (seed, run(seed))).collect();
    aggregate_replicates(outcomes)
}

/// SHA-256 of the sample's CSV serialization.
pub fn sample_checksum(sample: &Sample) -> String {
    let mut buf = Vec::new();
    sample.write_csv(&mut buf).expect("in-memory CSV write");
    Sha256::digest(&buf).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodBench {
    pub method: Method,
    pub summary: ReplicateSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seeds: Vec<u64>,
    pub sample_checksums: Vec<String>,
    /// Every method saw byte-identical samples.
    pub samples_identical: bool,
    pub methods: Vec<MethodBench>,
    pub notes: Vec<String>,
}

impl BenchReport {
    pub fn method(&self, method: Method) -> Option<&ReplicateSummary> {
        self.methods.iter().find(|m| m.method == method).map(|m| &m.summary)
    }
}
