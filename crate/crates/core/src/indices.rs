//! Estimated HOFD components and generalized Sobol indices.
//!
//! `Ŝ_u = Ĉov_n(η̂_u, Ỹ) / V̂_n(Ỹ)`, split into a variance part
//! `V̂_n(η̂_u) / V̂_n(Ỹ)` and the remaining covariance part. A residual
//! pseudo-component `η̂_rest = Ỹ - Σ_u η̂_u` carries everything above the
//! truncation order plus regression error, so the indices sum to one.
//! Negative entries are kept as estimated: a negative covariance part means
//! the component is compensated by correlated ones.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics, Statistics};

use crate::error::{HofdError, Result};
use crate::linalg::mean;
use crate::regression::{CoefficientVector, DesignMatrix, Method};
use crate::subsets::Subset;

/// Tolerance on `|Σ Ŝ - 1|`.
pub const SUM_TOL: f64 = 1e-10;
/// Tolerance on component means, relative to the response standard deviation.
pub const MEAN_TOL: f64 = 1e-8;

/// A report row: a subset or the residual pseudo-component.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum IndexKey {
    Subset(Subset),
    Rest,
}

impl fmt::Display for IndexKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexKey::Subset(u) => write!(f, "{u}"),
            IndexKey::Rest => f.write_str("rest"),
        }
    }
}

impl FromStr for IndexKey {
    type Err = HofdError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "rest" {
            return Ok(IndexKey::Rest);
        }
        let inner = s
            .strip_prefix('{')
            .and_then(|t| t.strip_suffix('}'))
            .ok_or_else(|| HofdError::Data(format!("bad index label '{s}'")))?;
        let indices = inner
            .split(',')
            .map(|t| match t.trim().parse::<usize>() {
                Ok(i) if i >= 1 => Ok(i - 1),
                _ => Err(HofdError::Data(format!("bad index label '{s}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(IndexKey::Subset(Subset::new(indices)?))
    }
}

impl TryFrom<String> for IndexKey {
    type Error = HofdError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<IndexKey> for String {
    fn from(k: IndexKey) -> String {
        k.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub subset: Subset,
    /// `η̂_u` at the sample points.
    pub values: DVector<f64>,
}

/// Sampled components, the residual pseudo-component and the centered
/// response they decompose.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet {
    pub components: Vec<Component>,
    pub rest: DVector<f64>,
    pub response: DVector<f64>,
}

impl ComponentSet {
    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn get(&self, u: &Subset) -> Option<&DVector<f64>> {
        self.components.iter().find(|c| &c.subset == u).map(|c| &c.values)
    }

    /// Checks that the parts add up to the response and the components are
    /// centered.
    pub fn validate(&self) -> Result<()> {
        let scale = (self.response.norm_squared() / self.n() as f64).sqrt().max(1.0);
        let mut total = self.rest.clone();
        for c in &self.components {
            total += &c.values;
            let mu = mean(c.values.as_slice());
            if mu.abs() > MEAN_TOL * scale {
                return Err(HofdError::Numerical(format!(
                    "component {} has empirical mean {mu:e}",
                    c.subset
                )));
            }
        }
        let gap = (total - &self.response).amax();
        if gap > 1e-10 * scale {
            return Err(HofdError::Numerical(format!(
                "components miss the response by {gap:e}"
            )));
        }
        Ok(())
    }
}

/// `η̂_u = X_u β_u` for every block, plus the residual.
pub fn reconstruct_components(design: &DesignMatrix, fit: &CoefficientVector) -> Result<ComponentSet> {
    if fit.labels != design.labels || fit.beta.len() != design.m() {
        return Err(HofdError::Data(
            "coefficient labels do not match the design columns".into(),
        ));
    }
    let mut components = Vec::with_capacity(design.blocks.len());
    let mut rest = design.y.clone();
    for (u, range) in &design.blocks {
        let beta = DVector::from_column_slice(&fit.beta[range.clone()]);
        let values = design.x.columns(range.start, range.len()) * beta;
        rest -= &values;
        components.push(Component {
            subset: u.clone(),
            values,
        });
    }
    let set = ComponentSet {
        components,
        rest,
        response: design.y.clone(),
    };
    set.validate()?;
    Ok(set)
}

fn cov(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let n = a.len() as f64;
    a.dot(b) / n - a.sum() / n * (b.sum() / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub subset: IndexKey,
    #[serde(rename = "S")]
    pub s: f64,
    pub var_part: f64,
    /// `S - var_part`: covariance with every other part of the response.
    pub cov_part: f64,
    /// Share of `cov_part` due to unnested subsets (`u ∩ v ∉ {u, v}`).
    pub cross_cov_part: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ReportMeta {
    pub n: usize,
    pub method: Option<Method>,
    pub order: usize,
    /// One description per input, e.g. `hermite(L=10)`.
    pub basis: Vec<String>,
    pub seed: Option<u64>,
    pub support_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub meta: ReportMeta,
    pub global_variance: f64,
    pub entries: Vec<IndexEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<ReplicateSummary>,
}

/// Generalized Sobol indices of a component set.
pub fn estimate_indices(components: &ComponentSet, meta: ReportMeta) -> Result<SensitivityReport> {
    components.validate()?;
    let y = &components.response;
    let v = cov(y, y);
    if !(v > 0.0) {
        return Err(HofdError::ConstantResponse);
    }
    let mut entries = Vec::with_capacity(components.components.len() + 1);
    for c in &components.components {
        let s = cov(&c.values, y) / v;
        let var_part = cov(&c.values, &c.values) / v;
        let cross: f64 = components
            .components
            .iter()
            .filter(|o| c.subset.is_unnested_with(&o.subset))
            .map(|o| cov(&c.values, &o.values))
            .sum();
        entries.push(IndexEntry {
            subset: IndexKey::Subset(c.subset.clone()),
            s,
            var_part,
            cov_part: s - var_part,
            cross_cov_part: cross / v,
        });
    }
    let s_rest = cov(&components.rest, y) / v;
    let var_rest = cov(&components.rest, &components.rest) / v;
    entries.push(IndexEntry {
        subset: IndexKey::Rest,
        s: s_rest,
        var_part: var_rest,
        cov_part: s_rest - var_rest,
        cross_cov_part: 0.0,
    });
    let report = SensitivityReport {
        meta,
        global_variance: v,
        entries,
        replicates: None,
    };
    report.validate()?;
    Ok(report)
}

/// Indices straight from a design and its fit.
pub fn indices_from_fit(
    design: &DesignMatrix,
    fit: &CoefficientVector,
    mut meta: ReportMeta,
) -> Result<SensitivityReport> {
    meta.n = design.n();
    meta.method = Some(fit.method);
    meta.support_size = Some(fit.support_size());
    estimate_indices(&reconstruct_components(design, fit)?, meta)
}

impl SensitivityReport {
    pub fn entry(&self, key: &IndexKey) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| &e.subset == key)
    }

    /// `Ŝ_u` of a subset given by 0-based input indices.
    pub fn index_of(&self, inputs: &[usize]) -> Option<f64> {
        let u = Subset::new(inputs.to_vec()).ok()?;
        self.entry(&IndexKey::Subset(u)).map(|e| e.s)
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.s).sum()
    }

    /// Sum-to-one and `S = var_part + cov_part` on every entry.
    pub fn validate(&self) -> Result<()> {
        let total = self.sum();
        if !((total - 1.0).abs() < SUM_TOL) {
            return Err(HofdError::Numerical(format!(
                "indices sum to {total:.17}, not 1"
            )));
        }
        for e in &self.entries {
            if !((e.s - e.var_part - e.cov_part).abs() < SUM_TOL) {
                return Err(HofdError::Numerical(format!(
                    "entry {} does not split into variance and covariance parts",
                    e.subset
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per entry; replicate statistics are appended when present.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let stats = self.replicates.as_ref().map(|r| &r.stats);
        let mut header = vec!["subset", "S", "var_part", "cov_part", "cross_cov_part"];
        if stats.is_some() {
            header.extend(["rep_mean", "rep_sd", "rep_q05", "rep_median", "rep_q95"]);
        }
        w.write_record(&header)?;
        for e in &self.entries {
            let mut row = vec![
                e.subset.to_string(),
                format!("{:?}", e.s),
                format!("{:?}", e.var_part),
                format!("{:?}", e.cov_part),
                format!("{:?}", e.cross_cov_part),
            ];
            if let Some(stats) = stats {
                match stats.iter().find(|s| s.subset == e.subset) {
                    Some(s) => row.extend(
                        [s.mean, s.sd, s.q05, s.median, s.q95].map(|v| format!("{v:?}")),
                    ),
                    None => row.extend(std::iter::repeat_n(String::new(), 5)),
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub subset: IndexKey,
    pub mean: f64,
    /// Sample standard deviation across replicates.
    pub sd: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub requested: usize,
    pub succeeded: usize,
    pub failures: Vec<ReplicateFailure>,
    pub seeds: Vec<u64>,
    pub stats: Vec<IndexStats>,
    /// `values[k][r]`: index `stats[k].subset` in successful replicate `r`.
    pub values: Vec<Vec<f64>>,
    pub support_sizes: Vec<usize>,
}

impl ReplicateSummary {
    pub fn stat(&self, key: &IndexKey) -> Option<&IndexStats> {
        self.stats.iter().find(|s| &s.subset == key)
    }

    pub fn mean_of(&self, inputs: &[usize]) -> Option<f64> {
        let u = Subset::new(inputs.to_vec()).ok()?;
        self.stat(&IndexKey::Subset(u)).map(|s| s.mean)
    }

    pub fn median_support_size(&self) -> Option<f64> {
        if self.support_sizes.is_empty() {
            return None;
        }
        let v: Vec<f64> = self.support_sizes.iter().map(|&s| s as f64).collect();
        Some(Data::new(v).median())
    }

    /// One column per index, one row per successful replicate.
    pub fn write_boxplot_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["replicate".to_string(), "seed".to_string()];
        header.extend(self.stats.iter().map(|s| s.subset.to_string()));
        w.write_record(&header)?;
        for r in 0..self.succeeded {
            let mut row = vec![r.to_string(), self.seeds[r].to_string()];
            row.extend(self.values.iter().map(|col| format!("{:?}", col[r])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Aggregates replicate outcomes `(seed, result)` in replicate order.
/// Failed replicates are counted and listed, never fatal. Fails only when
/// no replicate succeeded.
pub fn aggregate_replicates(outcomes: Vec<(u64, Result<SensitivityReport>)>) -> Result<ReplicateSummary> {
    let requested = outcomes.len();
    let mut failures = Vec::new();
    let mut reports = Vec::new();
    let mut seeds = Vec::new();
    for (r, (seed, outcome)) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rep) => {
                seeds.push(seed);
                reports.push(rep);
            }
            Err(e) => {
                log::warn!("replicate {r} (seed {seed}) failed: {e}");
                failures.push(ReplicateFailure {
                    replicate: r,
                    seed,
                    error: e.to_string(),
                });
            }
        }
    }
    let Some(first) = reports.first() else {
        return Err(HofdError::Numerical(format!(
            "all {requested} replicates failed"
        )));
    };
    let keys: Vec<IndexKey> = first.entries.iter().map(|e| e.subset.clone()).collect();
    let mut values = Vec::with_capacity(keys.len());
    let mut stats = Vec::with_capacity(keys.len());
    for key in &keys {
        let col: Vec<f64> = reports
            .iter()
            .map(|rep| rep.entry(key).map_or(f64::NAN, |e| e.s))
            .collect();
        let mut data = Data::new(col.clone());
        let sd = if col.len() > 1 {
            col.iter().std_dev()
        } else {
            0.0
        };
        stats.push(IndexStats {
            subset: key.clone(),
            mean: col.iter().mean(),
            sd,
            q05: data.quantile(0.05),
            q25: data.quantile(0.25),
            median: data.median(),
            q75: data.quantile(0.75),
            q95: data.quantile(0.95),
        });
        values.push(col);
    }
    let support_sizes = reports.iter().filter_map(|r| r.meta.support_size).collect();
    Ok(ReplicateSummary {
        requested,
        succeeded: reports.len(),
        failures,
        seeds,
        stats,
        values,
        support_sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{ColumnLabel, FitTrace};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn small_design() -> DesignMatrix {
        // two centered singleton columns and one product column
        let a = [1.0, -1.0, 2.0, -2.0, 0.5, -0.5];
        let b = [0.3, 1.0, -0.7, 0.2, -1.1, 0.3];
        let x = DMatrix::from_fn(6, 3, |s, j| match j {
            0 => a[s],
            1 => b[s],
            _ => a[s] * b[s] - a.iter().zip(&b).map(|(p, q)| p * q).sum::<f64>() / 6.0,
        });
        let y = DVector::from_fn(6, |s, _| 2.0 * a[s] - b[s] + 0.1 * (s as f64));
        let s0 = Subset::singleton(0);
        let s1 = Subset::singleton(1);
        let s01 = Subset::new(vec![0, 1]).unwrap();
        let labels = vec![
            ColumnLabel { subset: s0.clone(), index: vec![1] },
            ColumnLabel { subset: s1.clone(), index: vec![1] },
            ColumnLabel { subset: s01.clone(), index: vec![1, 1] },
        ];
        DesignMatrix::new(x, &y, labels, vec![(s0, 0..1), (s1, 1..2), (s01, 2..3)]).unwrap()
    }

    fn coefficients(design: &DesignMatrix, beta: Vec<f64>) -> CoefficientVector {
        CoefficientVector::new(design, Method::Ols, beta, FitTrace::None)
    }

    #[test]
    fn zero_fit_leaves_everything_in_rest() {
        let d = small_design();
        let comps = reconstruct_components(&d, &coefficients(&d, vec![0.0; 3])).unwrap();
        assert!(comps.components.iter().all(|c| c.values.amax() == 0.0));
        assert_eq!(comps.rest, d.y);
        let rep = estimate_indices(&comps, ReportMeta::default()).unwrap();
        assert_abs_diff_eq!(rep.entry(&IndexKey::Rest).unwrap().s, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn single_column_component() {
        let d = small_design();
        let comps = reconstruct_components(&d, &coefficients(&d, vec![0.0, 1.5, 0.0])).unwrap();
        let v = comps.get(&Subset::singleton(1)).unwrap();
        for s in 0..6 {
            assert_abs_diff_eq!(v[s], 1.5 * d.x[(s, 1)], epsilon = 1e-15);
        }
    }

    #[test]
    fn hand_computed_indices() {
        let d = small_design();
        let beta = vec![2.0, -1.0, 0.25];
        let rep = indices_from_fit(&d, &coefficients(&d, beta.clone()), ReportMeta::default()).unwrap();
        let n = 6.0;
        let y = &d.y;
        let vy = y.norm_squared() / n;
        let c0 = d.x.column(0) * beta[0];
        let c1 = d.x.column(1) * beta[1];
        let s0 = c0.dot(y) / n / vy;
        let var0 = c0.norm_squared() / n / vy;
        let cross0 = c0.dot(&c1) / n / vy;
        let e0 = rep.index_of(&[0]).unwrap();
        assert_abs_diff_eq!(e0, s0, epsilon = 1e-14);
        let entry = rep.entry(&IndexKey::Subset(Subset::singleton(0))).unwrap();
        assert_abs_diff_eq!(entry.var_part, var0, epsilon = 1e-14);
        assert_abs_diff_eq!(entry.cross_cov_part, cross0, epsilon = 1e-14);
        assert_abs_diff_eq!(rep.sum(), 1.0, epsilon = 1e-12);
        assert_eq!(rep.meta.support_size, Some(3));
    }

    #[test]
    fn label_mismatch_rejected() {
        let d = small_design();
        let mut fit = coefficients(&d, vec![0.0; 3]);
        fit.labels.swap(0, 1);
        assert!(matches!(reconstruct_components(&d, &fit), Err(HofdError::Data(_))));
    }

    #[test]
    fn constant_response_rejected() {
        let comps = ComponentSet {
            components: vec![],
            rest: DVector::zeros(4),
            response: DVector::zeros(4),
        };
        assert!(matches!(
            estimate_indices(&comps, ReportMeta::default()),
            Err(HofdError::ConstantResponse)
        ));
    }

    #[test]
    fn index_key_roundtrip() {
        for s in ["rest", "{1}", "{1,3}"] {
            let k: IndexKey = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(serde_json::from_str::<IndexKey>(&json).unwrap(), k);
        }
        assert!("{0}".parse::<IndexKey>().is_err());
        assert!("1,2".parse::<IndexKey>().is_err());
    }

    fn fake_report(s1: f64) -> SensitivityReport {
        SensitivityReport {
            meta: ReportMeta {
                support_size: Some(3),
                ..ReportMeta::default()
            },
            global_variance: 1.0,
            entries: vec![
                IndexEntry {
                    subset: IndexKey::Subset(Subset::singleton(0)),
                    s: s1,
                    var_part: s1,
                    cov_part: 0.0,
                    cross_cov_part: 0.0,
                },
                IndexEntry {
                    subset: IndexKey::Rest,
                    s: 1.0 - s1,
                    var_part: 1.0 - s1,
                    cov_part: 0.0,
                    cross_cov_part: 0.0,
                },
            ],
            replicates: None,
        }
    }

    #[test]
    fn identical_replicates_have_zero_spread() {
        let sum = aggregate_replicates(vec![(1, Ok(fake_report(0.4))), (1, Ok(fake_report(0.4)))]).unwrap();
        let st = sum.stat(&IndexKey::Subset(Subset::singleton(0))).unwrap();
        assert_eq!(st.sd, 0.0);
        assert_eq!(st.mean, 0.4);
    }

    #[test]
    fn failures_are_counted() {
        let outcomes = (0..50)
            .map(|r| {
                let res = if r == 17 {
                    Err(HofdError::Numerical("forced".into()))
                } else {
                    Ok(fake_report(0.3 + 0.001 * r as f64))
                };
                (r as u64, res)
            })
            .collect();
        let sum = aggregate_replicates(outcomes).unwrap();
        assert_eq!(sum.requested, 50);
        assert_eq!(sum.succeeded, 49);
        assert_eq!(sum.failures.len(), 1);
        assert_eq!(sum.failures[0].replicate, 17);
        let mut buf = Vec::new();
        sum.write_boxplot_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 50);
    }
}
