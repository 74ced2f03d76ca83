//! Reproducible samplers for dependent input vectors, and the validated
//! `Sample` container every later stage works against.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{HofdError, Result};
use crate::linalg::{cholesky_lower, is_symmetric, reciprocal_condition};

/// Condition number of the copula correlation above which a warning is raised.
const COPULA_CONDITION_WARNING: f64 = 1e3;

/// An `n x p` input matrix with its response, the empirical measure that
/// everything downstream is orthogonalized against.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    x: DMatrix<f64>,
    y: DVector<f64>,
    input_names: Vec<String>,
    response_name: String,
}

impl Sample {
    /// Validates and wraps inputs and response. Columns are named `x1..xp`
    /// and the response `y`.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|i| format!("x{i}")).collect();
        Self::with_names(x, y, names, "y".to_string())
    }

    pub fn with_names(
        x: DMatrix<f64>,
        y: DVector<f64>,
        input_names: Vec<String>,
        response_name: String,
    ) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n {
            return Err(HofdError::Data(format!(
                "response has {} entries but inputs have {n} rows",
                y.len()
            )));
        }
        if input_names.len() != x.ncols() {
            return Err(HofdError::Data(format!(
                "{} input names for {} columns",
                input_names.len(),
                x.ncols()
            )));
        }
        if n < 2 {
            return Err(HofdError::InsufficientSample { n, required: 1 });
        }
        for (j, name) in input_names.iter().enumerate() {
            let col = x.column(j);
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(HofdError::NonFinite {
                    row: row + 1,
                    column: name.clone(),
                });
            }
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                return Err(HofdError::DegenerateInput {
                    column: name.clone(),
                });
            }
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(HofdError::NonFinite {
                row: row + 1,
                column: response_name,
            });
        }
        Ok(Self {
            x,
            y,
            input_names,
            response_name,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.y
    }

    /// Contiguous view of input column `j` (0-based).
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    pub fn row(&self, s: usize) -> Vec<f64> {
        self.x.row(s).iter().copied().collect()
    }

    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    /// Same inputs, different response (used for rescaling experiments).
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        Self::with_names(
            self.x.clone(),
            y,
            self.input_names.clone(),
            self.response_name.clone(),
        )
    }

    /// Writes the sample as CSV: header line, inputs in declared order,
    /// response last.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.input_names.clone();
        header.push(self.response_name.clone());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.p() + 1);
        for s in 0..self.n() {
            record.clear();
            for j in 0..self.p() {
                record.push(format!("{:?}", self.x[(s, j)]));
            }
            record.push(format!("{:?}", self.y[s]));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a CSV sample. `inputs` selects and orders the input columns; when
/// `None`, every column except the response is used in header order.
pub fn load_sample(path: &Path, inputs: Option<&[String]>, response: &str) -> Result<Sample> {
    let file = std::fs::File::open(path)?;
    read_sample(file, inputs, response)
}

pub fn read_sample<R: Read>(reader: R, inputs: Option<&[String]>, response: &str) -> Result<Sample> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HofdError::Data(format!("missing column '{name}'")))
    };
    let y_col = find(response)?;
    let input_names: Vec<String> = match inputs {
        Some(names) => names.to_vec(),
        None => header
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != y_col)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let x_cols = input_names
        .iter()
        .map(|name| find(name))
        .collect::<Result<Vec<_>>>()?;

    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); x_cols.len()];
    let mut ys = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let parse = |col: usize| -> Result<f64> {
            let cell = record.get(col).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| {
                HofdError::Data(format!(
                    "cannot parse '{cell}' at row {}, column '{}'",
                    row + 1,
                    header[col]
                ))
            })?;
            if !v.is_finite() {
                return Err(HofdError::NonFinite {
                    row: row + 1,
                    column: header[col].clone(),
                });
            }
            Ok(v)
        };
        for (k, &c) in x_cols.iter().enumerate() {
            xs[k].push(parse(c)?);
        }
        ys.push(parse(y_col)?);
    }
    let n = ys.len();
    if n < 2 {
        return Err(HofdError::InsufficientSample { n, required: 1 });
    }
    let x = DMatrix::from_iterator(n, xs.len(), xs.into_iter().flatten());
    Sample::with_names(x, DVector::from_vec(ys), input_names, response.to_string())
}

/// Bivariate or multivariate mixture `α N(μ, Σ) + (1 − α) N(μ, Ω)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub alpha: f64,
    pub mean: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
}

/// Uniform marginals on `bounds` coupled by a Gaussian copula whose
/// Spearman rank correlations are `rank_corr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformSpec {
    pub bounds: Vec<[f64; 2]>,
    pub rank_corr: Vec<Vec<f64>>,
}

/// One independent group of inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputBlock {
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    Uniform(UniformSpec),
    GaussianMixture(MixtureSpec),
}

impl InputBlock {
    pub fn dim(&self) -> usize {
        match self {
            InputBlock::Gaussian { mean, .. } => mean.len(),
            InputBlock::Uniform(spec) => spec.bounds.len(),
            InputBlock::GaussianMixture(spec) => spec.mean.len(),
        }
    }
}

/// Full input distribution: independent blocks concatenated in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub blocks: Vec<InputBlock>,
}

impl InputSpec {
    pub fn p(&self) -> usize {
        self.blocks.iter().map(InputBlock::dim).sum()
    }

    /// Checks every block without drawing anything.
    pub fn validate(&self) -> Result<()> {
        for block in &self.blocks {
            match block {
                InputBlock::Gaussian { mean, cov } => {
                    GaussianSampler::new(&to_matrix(cov)?, mean)?;
                }
                InputBlock::Uniform(spec) => {
                    CopulaSampler::new(spec)?;
                }
                InputBlock::GaussianMixture(spec) => {
                    MixtureSampler::new(spec)?;
                }
            }
        }
        Ok(())
    }

    /// Draws `n` rows from one seeded stream, block by block.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        let p = self.p();
        if p == 0 {
            return Err(HofdError::Config("input spec has no inputs".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = DMatrix::zeros(n, p);
        let mut offset = 0;
        for block in &self.blocks {
            let part = match block {
                InputBlock::Gaussian { mean, cov } => {
                    GaussianSampler::new(&to_matrix(cov)?, mean)?.draw(n, &mut rng)
                }
                InputBlock::Uniform(spec) => CopulaSampler::new(spec)?.draw(n, &mut rng),
                InputBlock::GaussianMixture(spec) => MixtureSampler::new(spec)?.draw(n, &mut rng),
            };
            out.columns_mut(offset, part.ncols()).copy_from(&part);
            offset += part.ncols();
        }
        Ok(out)
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let p = rows.len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(HofdError::Config(format!("matrix rows must all have length {p}")));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

struct GaussianSampler {
    chol: DMatrix<f64>,
    mean: Vec<f64>,
}

impl GaussianSampler {
    fn new(cov: &DMatrix<f64>, mean: &[f64]) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(HofdError::Config(format!(
                "covariance is {}x{} but mean has length {}",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        if !is_symmetric(cov, 1e-12) {
            return Err(HofdError::Config("covariance matrix is not symmetric".into()));
        }
        Ok(Self {
            chol: cholesky_lower(cov)?,
            mean: mean.to_vec(),
        })
    }

    fn draw_row<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let p = self.mean.len();
        let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..p {
            let mut v = self.mean[i];
            for k in 0..=i {
                v += self.chol[(i, k)] * z[k];
            }
            out[i] = v;
        }
    }

    fn draw<R: Rng>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let p = self.mean.len();
        let mut out = DMatrix::zeros(n, p);
        let mut row = vec![0.0; p];
        for s in 0..n {
            self.draw_row(rng, &mut row);
            for j in 0..p {
                out[(s, j)] = row[j];
            }
        }
        out
    }
}

struct MixtureSampler {
    alpha: f64,
    first: GaussianSampler,
    second: GaussianSampler,
}

impl MixtureSampler {
    fn new(spec: &MixtureSpec) -> Result<Self> {
        if !(0.0..=1.0).contains(&spec.alpha) {
            return Err(HofdError::Config(format!(
                "mixture weight {} outside [0, 1]",
                spec.alpha
            )));
        }
        Ok(Self {
            alpha: spec.alpha,
            first: GaussianSampler::new(&to_matrix(&spec.sigma)?, &spec.mean)?,
            second: GaussianSampler::new(&to_matrix(&spec.omega)?, &spec.mean)?,
        })
    }

    fn draw<R: Rng>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let p = self.first.mean.len();
        let mut out = DMatrix::zeros(n, p);
        let mut row = vec![0.0; p];
        for s in 0..n {
            let u: f64 = rng.random();
            let component = if u < self.alpha { &self.first } else { &self.second };
            component.draw_row(rng, &mut row);
            for j in 0..p {
                out[(s, j)] = row[j];
            }
        }
        out
    }
}

/// Pearson correlation of the latent Gaussian giving Spearman correlation `rho_s`.
pub fn spearman_to_pearson(rho_s: f64) -> f64 {
    2.0 * (std::f64::consts::PI * rho_s / 6.0).sin()
}

pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

struct CopulaSampler {
    bounds: Vec<[f64; 2]>,
    latent: GaussianSampler,
    condition: f64,
}

impl CopulaSampler {
    fn new(spec: &UniformSpec) -> Result<Self> {
        let p = spec.bounds.len();
        let rank = to_matrix(&spec.rank_corr)?;
        if rank.nrows() != p {
            return Err(HofdError::Config(format!(
                "rank correlation is {}x{} for {p} uniform inputs",
                rank.nrows(),
                rank.ncols()
            )));
        }
        for (i, b) in spec.bounds.iter().enumerate() {
            if !(b[0] < b[1]) {
                return Err(HofdError::Config(format!(
                    "uniform input {} has empty range [{}, {}]",
                    i + 1,
                    b[0],
                    b[1]
                )));
            }
        }
        if !is_symmetric(&rank, 1e-12) {
            return Err(HofdError::InfeasibleCorrelation("matrix is not symmetric".into()));
        }
        for i in 0..p {
            if rank[(i, i)] != 1.0 {
                return Err(HofdError::InfeasibleCorrelation(format!(
                    "diagonal entry {} is {}, expected 1",
                    i + 1,
                    rank[(i, i)]
                )));
            }
            for j in 0..p {
                if i != j && !(rank[(i, j)] > -1.0 && rank[(i, j)] < 1.0) {
                    return Err(HofdError::InfeasibleCorrelation(format!(
                        "entry ({}, {}) = {} outside (-1, 1)",
                        i + 1,
                        j + 1,
                        rank[(i, j)]
                    )));
                }
            }
        }
        let pearson = rank.map_with_location(|i, j, v| if i == j { 1.0 } else { spearman_to_pearson(v) });
        let latent = GaussianSampler::new(&pearson, &vec![0.0; p]).map_err(|e| match e {
            HofdError::NotPositiveDefinite { order, .. } => HofdError::InfeasibleCorrelation(format!(
                "latent Gaussian correlation fails at leading minor {order}"
            )),
            other => other,
        })?;
        let rcond = reciprocal_condition(&pearson);
        let condition = if rcond > 0.0 { 1.0 / rcond } else { f64::INFINITY };
        Ok(Self {
            bounds: spec.bounds.clone(),
            latent,
            condition,
        })
    }

    fn draw<R: Rng>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let mut out = self.latent.draw(n, rng);
        for (j, b) in self.bounds.iter().enumerate() {
            for s in 0..n {
                let u = standard_normal_cdf(out[(s, j)]);
                out[(s, j)] = b[0] + (b[1] - b[0]) * u;
            }
        }
        out
    }
}

/// `n` i.i.d. rows of `N(mean, cov)`.
pub fn sample_gaussian(cov: &DMatrix<f64>, mean: &[f64], n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let sampler = GaussianSampler::new(cov, mean)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.draw(n, &mut rng))
}

/// `n` i.i.d. rows of `α N(μ, Σ) + (1 − α) N(μ, Ω)`.
pub fn sample_gaussian_mixture(spec: &MixtureSpec, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let sampler = MixtureSampler::new(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.draw(n, &mut rng))
}

/// Correlated uniforms through a Gaussian copula.
#[derive(Debug, Clone)]
pub struct UniformDraw {
    pub x: DMatrix<f64>,
    pub warnings: Vec<String>,
}

pub fn sample_correlated_uniform(spec: &UniformSpec, n: usize, seed: u64) -> Result<UniformDraw> {
    let sampler = CopulaSampler::new(spec)?;
    let mut warnings = Vec::new();
    if sampler.condition > COPULA_CONDITION_WARNING {
        let msg = format!(
            "copula correlation is ill-conditioned (condition number {:.3e})",
            sampler.condition
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(UniformDraw {
        x: sampler.draw(n, &mut rng),
        warnings,
    })
}

/// Covariance of the correlated Gaussian test model: `σ₁ = σ₂ = 0.2`,
/// `σ₃ = 0.18`, correlation 0.6 between the first two inputs.
pub fn toy_covariance() -> DMatrix<f64> {
    let (s1, s2, s3, gamma) = (0.2, 0.2, 0.18, 0.6);
    DMatrix::from_row_slice(
        3,
        3,
        &[
            s1 * s1,
            gamma * s1 * s2,
            0.0,
            gamma * s1 * s2,
            s2 * s2,
            0.0,
            0.0,
            0.0,
            s3 * s3,
        ],
    )
}

pub fn toy_inputs() -> InputSpec {
    let cov = toy_covariance();
    InputSpec {
        blocks: vec![InputBlock::Gaussian {
            mean: vec![0.0; 3],
            cov: (0..3).map(|i| cov.row(i).iter().copied().collect()).collect(),
        }],
    }
}

/// Input table of the pressurized shell: three correlated uniform
/// geometrical inputs, two Gaussian-mixture pairs and a Gaussian pressure
/// (second parameter read as a variance).
pub fn shell_inputs() -> InputSpec {
    InputSpec {
        blocks: vec![
            InputBlock::Uniform(UniformSpec {
                bounds: vec![[1800.0, 2200.0], [360.0, 440.0], [180.0, 220.0]],
                rank_corr: vec![
                    vec![1.0, 0.85, 0.3],
                    vec![0.85, 1.0, 0.3],
                    vec![0.3, 0.3, 1.0],
                ],
            }),
            InputBlock::GaussianMixture(MixtureSpec {
                alpha: 0.02,
                mean: vec![210.0, 500.0],
                sigma: vec![vec![350.0, 0.0], vec![0.0, 29.0]],
                omega: vec![vec![175.0, 81.0], vec![81.0, 417.0]],
            }),
            InputBlock::GaussianMixture(MixtureSpec {
                alpha: 0.02,
                mean: vec![70.0, 300.0],
                sigma: vec![vec![117.0, 0.0], vec![0.0, 500.0]],
                omega: vec![vec![58.0, 37.0], vec![37.0, 250.0]],
            }),
            InputBlock::Gaussian {
                mean: vec![80.0],
                cov: vec![vec![10.0]],
            },
        ],
    }
}
