//! Hierarchically orthogonal multivariate basis built by Gram-Schmidt over
//! subsets of increasing size, under the empirical inner product.
//!
//! For a subset `u` with `|u| >= 2` and a multi-index `l_u`, the basis
//! function is the tensor product of the univariate members, corrected by
//! every lower-order basis function `ϕ^v_{l_v}` (`v ⊂ u`) and a constant:
//!
//! ```text
//! ϕ^u_{l_u} = ⊗_{i∈u} ϕ^i_{l_u^i} + Σ_{v⊂u} Σ_{l_v} λ^v_{l_v,l_u} ϕ^v_{l_v} + C^u_{l_u}
//! ```
//!
//! with the coefficients fixed by `⟨ϕ^u_{l_u}, ϕ^v_{l_v}⟩ₙ = 0` for all
//! `v ⊂ u` and `⟨ϕ^u_{l_u}, 1⟩ₙ = 0`. Each function is stored both by its
//! `(λ, C)` and expanded over the raw tensor dictionary of `u`, which is
//! what evaluation and serialization use.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::Sample;
use crate::error::{HofdError, Result};
use crate::linalg::{cholesky_lower, cholesky_solve, emp_dot, mean, reciprocal_condition};
use crate::subsets::{multi_indices, Subset};
use crate::univariate::UnivariateSystem;

/// Reciprocal condition below which a block Gram matrix is singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

/// Relative tolerance of the hierarchical-orthogonality constraints.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

const JITTER: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisFunction {
    /// Multi-index `l_u`, 1-based degrees in subset order.
    pub index: Vec<usize>,
    /// `λ` over the lower-order functions, ordered by `u.proper_subsets()`
    /// then multi-index.
    pub lambda: Vec<f64>,
    pub constant: f64,
    /// Expansion over the block dictionary (constant first).
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub subset: Subset,
    /// `L_i` for each `i ∈ u`.
    pub sizes: Vec<usize>,
    pub functions: Vec<BasisFunction>,
    /// Reciprocal condition of the constraint Gram matrix (`|u| >= 2`).
    pub gram_rcond: Option<f64>,
    #[serde(default)]
    pub jittered: bool,
}

impl Block {
    pub fn dim(&self) -> usize {
        self.functions.len()
    }

    fn position(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.sizes.len() {
            return None;
        }
        let mut pos = 0;
        for (l, &size) in index.iter().zip(&self.sizes) {
            if *l == 0 || *l > size {
                return None;
            }
            pos = pos * size + (l - 1);
        }
        Some(pos)
    }
}

/// One tensor term `⊗_{i∈v} ϕ^i_{l_v^i}` of a dictionary.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Term {
    pub subset: Subset,
    pub index: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HofdBasis {
    pub systems: Vec<UnivariateSystem>,
    pub order: usize,
    /// Size of the sample the basis was built on.
    pub n: usize,
    pub blocks: Vec<Block>,
}

/// Raw tensor dictionary of `u`: the constant (position 0, implicit) then
/// every term of every nonempty `v ⊆ u`.
pub fn dictionary(u: &Subset, systems: &[UnivariateSystem]) -> Vec<Term> {
    let mut terms = Vec::new();
    for v in u.nonempty_subsets() {
        let sizes: Vec<usize> = v.indices().iter().map(|&i| systems[i].size).collect();
        for index in multi_indices(&sizes) {
            terms.push(Term {
                subset: v.clone(),
                index,
            });
        }
    }
    terms
}

/// Univariate system values over the rows of `x`, per input in `inputs`.
fn univariate_values(
    systems: &[UnivariateSystem],
    inputs: &[usize],
    x: &DMatrix<f64>,
) -> HashMap<usize, DMatrix<f64>> {
    let n = x.nrows();
    inputs
        .iter()
        .map(|&i| {
            let col = &x.as_slice()[i * n..(i + 1) * n];
            (i, systems[i].eval_column(col))
        })
        .collect()
}

fn term_column(term: &Term, uni: &HashMap<usize, DMatrix<f64>>, n: usize) -> DVector<f64> {
    let mut col = DVector::from_element(n, 1.0);
    for (&i, &l) in term.subset.indices().iter().zip(&term.index) {
        let vals = &uni[&i];
        for s in 0..n {
            col[s] *= vals[(s, l)];
        }
    }
    col
}

fn dictionary_matrix(terms: &[Term], uni: &HashMap<usize, DMatrix<f64>>, n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, terms.len() + 1);
    out.column_mut(0).fill(1.0);
    for (t, term) in terms.iter().enumerate() {
        out.set_column(t + 1, &term_column(term, uni, n));
    }
    out
}

impl HofdBasis {
    pub fn p(&self) -> usize {
        self.systems.len()
    }

    /// Total number of basis functions `m = Σ_u L_u`.
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(Block::dim).sum()
    }

    pub fn block(&self, u: &Subset) -> Option<&Block> {
        self.blocks.iter().find(|b| &b.subset == u)
    }

    pub fn subsets(&self) -> Vec<Subset> {
        self.blocks.iter().map(|b| b.subset.clone()).collect()
    }

    /// Values of every function of block `b` at the rows of `x` (`n x p`).
    pub fn block_values(&self, b: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        let block = &self.blocks[b];
        let uni = univariate_values(&self.systems, block.subset.indices(), x);
        self.block_values_with(block, &uni, x.nrows())
    }

    fn block_values_with(
        &self,
        block: &Block,
        uni: &HashMap<usize, DMatrix<f64>>,
        n: usize,
    ) -> DMatrix<f64> {
        let terms = dictionary(&block.subset, &self.systems);
        let dict = dictionary_matrix(&terms, uni, n);
        let coef = DMatrix::from_fn(terms.len() + 1, block.dim(), |t, k| {
            block.functions[k].coefficients[t]
        });
        dict * coef
    }

    /// All basis columns at the rows of `x`, blocks in order.
    pub fn design_values(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.p() {
            return Err(HofdError::Data(format!(
                "points have {} columns, basis expects {}",
                x.ncols(),
                self.p()
            )));
        }
        let all: Vec<usize> = (0..self.p()).collect();
        let uni = univariate_values(&self.systems, &all, x);
        let n = x.nrows();
        let mut out = DMatrix::zeros(n, self.dim());
        let mut offset = 0;
        for block in &self.blocks {
            let vals = self.block_values_with(block, &uni, n);
            out.columns_mut(offset, block.dim()).copy_from(&vals);
            offset += block.dim();
        }
        Ok(out)
    }

    /// `ϕ^u_{l_u}(x)` for one point `x` of length `p`.
    pub fn evaluate(&self, u: &Subset, index: &[usize], x: &[f64]) -> Result<f64> {
        if x.len() != self.p() {
            return Err(HofdError::Data(format!(
                "point has {} coordinates, basis expects {}",
                x.len(),
                self.p()
            )));
        }
        let block = self
            .block(u)
            .ok_or_else(|| HofdError::Config(format!("unknown subset {u}")))?;
        let pos = block.position(index).ok_or_else(|| {
            HofdError::Config(format!("unknown multi-index {index:?} for subset {u}"))
        })?;
        let mut uni: HashMap<usize, Vec<f64>> = HashMap::new();
        for &i in u.indices() {
            let mut vals = vec![0.0; self.systems[i].size + 1];
            self.systems[i].eval(x[i], &mut vals);
            uni.insert(i, vals);
        }
        let coef = &block.functions[pos].coefficients;
        let mut value = coef[0];
        for (t, term) in dictionary(u, &self.systems).iter().enumerate() {
            let mut tv = 1.0;
            for (&i, &l) in term.subset.indices().iter().zip(&term.index) {
                tv *= uni[&i][l];
            }
            value += coef[t + 1] * tv;
        }
        Ok(value)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let basis: HofdBasis = serde_json::from_str(text)?;
        basis.validate()?;
        Ok(basis)
    }

    fn validate(&self) -> Result<()> {
        for block in &self.blocks {
            if block.subset.indices().iter().any(|&i| i >= self.p()) {
                return Err(HofdError::Data(format!(
                    "basis block {} references a missing input",
                    block.subset
                )));
            }
            let expected: usize = block.sizes.iter().product();
            let dict_len = dictionary(&block.subset, &self.systems).len() + 1;
            if block.dim() != expected
                || block.functions.iter().any(|f| f.coefficients.len() != dict_len)
            {
                return Err(HofdError::Data(format!(
                    "basis block {} has inconsistent dimensions",
                    block.subset
                )));
            }
        }
        Ok(())
    }
}

/// Builds the hierarchically orthogonal basis for `subsets` on `sample`.
///
/// `systems` must be empirically orthonormalized on the same sample, one per
/// input. `subsets` must be closed under taking nonempty subsets and listed
/// in canonical order (as produced by [`crate::subsets::enumerate_subsets`]).
pub fn build_hogs_basis(
    systems: &[UnivariateSystem],
    subsets: &[Subset],
    sample: &Sample,
) -> Result<HofdBasis> {
    let n = sample.n();
    let p = sample.p();
    if systems.len() != p {
        return Err(HofdError::Config(format!(
            "{} univariate systems for {p} inputs",
            systems.len()
        )));
    }
    for (i, sys) in systems.iter().enumerate() {
        if sys.input != i {
            return Err(HofdError::Config(format!(
                "system {i} is declared for input {}",
                sys.input
            )));
        }
        match &sys.level {
            crate::univariate::Level::Empirical { n: fit_n, .. } if *fit_n == n => {}
            _ => {
                return Err(HofdError::Config(format!(
                    "system for input {} is not orthonormalized on this sample",
                    i + 1
                )))
            }
        }
    }
    let mut seen: Vec<&Subset> = Vec::new();
    for u in subsets {
        if u.indices().iter().any(|&i| i >= p) {
            return Err(HofdError::Config(format!("subset {u} exceeds p = {p}")));
        }
        if seen.last().is_some_and(|prev| (prev.len(), *prev) >= (u.len(), u)) {
            return Err(HofdError::Config(format!(
                "subsets must be listed in canonical order, {u} is out of place"
            )));
        }
        for v in u.proper_subsets() {
            if !seen.contains(&&v) {
                return Err(HofdError::Config(format!(
                    "subset {u} requires its subset {v} to be listed first"
                )));
            }
        }
        seen.push(u);
    }
    let required = subsets
        .iter()
        .map(|u| {
            1 + u
                .nonempty_subsets()
                .iter()
                .map(|v| v.indices().iter().map(|&i| systems[i].size).product::<usize>())
                .sum::<usize>()
        })
        .max()
        .unwrap_or(0);
    if n <= required {
        return Err(HofdError::InsufficientSample { n, required });
    }

    let all: Vec<usize> = (0..p).collect();
    let uni = univariate_values(systems, &all, sample.inputs());
    let order = subsets.iter().map(Subset::len).max().unwrap_or(0);

    let mut blocks: Vec<Block> = Vec::with_capacity(subsets.len());
    let mut columns: HashMap<Subset, DMatrix<f64>> = HashMap::new();
    for size in 1..=order {
        let level: Vec<&Subset> = subsets.iter().filter(|u| u.len() == size).collect();
        let built: Vec<Result<(Block, DMatrix<f64>)>> = if size == 1 {
            level
                .iter()
                .map(|u| Ok(first_order_block(u, systems, &uni, n)))
                .collect()
        } else {
            let ctx = BuildContext {
                systems,
                uni: &uni,
                columns: &columns,
                blocks: &blocks,
                n,
            };
            level.par_iter().map(|u| ctx.build_block(u)).collect()
        };
        for res in built {
            let (block, cols) = res?;
            columns.insert(block.subset.clone(), cols);
            blocks.push(block);
        }
    }
    Ok(HofdBasis {
        systems: systems.to_vec(),
        order,
        n,
        blocks,
    })
}

fn first_order_block(
    u: &Subset,
    systems: &[UnivariateSystem],
    uni: &HashMap<usize, DMatrix<f64>>,
    n: usize,
) -> (Block, DMatrix<f64>) {
    let i = u.indices()[0];
    let size = systems[i].size;
    let functions: Vec<BasisFunction> = (1..=size)
        .map(|l| {
            let mut coefficients = vec![0.0; size + 1];
            coefficients[l] = 1.0;
            BasisFunction {
                index: vec![l],
                lambda: Vec::new(),
                constant: 0.0,
                coefficients,
            }
        })
        .collect();
    let block = Block {
        subset: u.clone(),
        sizes: vec![size],
        functions,
        gram_rcond: None,
        jittered: false,
    };
    let terms = dictionary(u, systems);
    let dict = dictionary_matrix(&terms, uni, n);
    let coef = DMatrix::from_fn(size + 1, size, |t, k| block.functions[k].coefficients[t]);
    (block, dict * coef)
}

struct BuildContext<'a> {
    systems: &'a [UnivariateSystem],
    uni: &'a HashMap<usize, DMatrix<f64>>,
    columns: &'a HashMap<Subset, DMatrix<f64>>,
    blocks: &'a [Block],
    n: usize,
}

impl BuildContext<'_> {
    fn build_block(&self, u: &Subset) -> Result<(Block, DMatrix<f64>)> {
        let n = self.n;
        let lower = u.proper_subsets();
        let lower_blocks: Vec<&Block> = lower
            .iter()
            .map(|v| self.blocks.iter().find(|b| &b.subset == v).expect("lower block"))
            .collect();
        let k: usize = lower_blocks.iter().map(|b| b.dim()).sum();

        // lower-order columns, centered copies, and the constraint Gram matrix
        let mut phi = DMatrix::zeros(n, k);
        let mut offset = 0;
        for v in &lower {
            let c = &self.columns[v];
            phi.columns_mut(offset, c.ncols()).copy_from(c);
            offset += c.ncols();
        }
        let phi_means: Vec<f64> = (0..k).map(|j| mean(phi.column(j).as_slice())).collect();
        let mut phi_c = phi.clone();
        for j in 0..k {
            phi_c.column_mut(j).add_scalar_mut(-phi_means[j]);
        }
        let gram = phi_c.tr_mul(&phi_c) / n as f64;
        let (chol, jittered) = match cholesky_lower(&gram) {
            Ok(l) => (l, false),
            Err(_) => {
                let jitter = JITTER * gram.trace() / k as f64;
                let shifted = &gram + DMatrix::identity(k, k) * jitter;
                match cholesky_lower(&shifted) {
                    Ok(l) => (l, true),
                    Err(_) => {
                        return Err(HofdError::SingularGram {
                            subset: u.to_string(),
                            rcond: reciprocal_condition(&gram),
                        })
                    }
                }
            }
        };
        let rcond = reciprocal_condition(&gram);
        if rcond < SINGULAR_RCOND {
            return Err(HofdError::SingularGram {
                subset: u.to_string(),
                rcond,
            });
        }

        let terms = dictionary(u, self.systems);
        let lookup: HashMap<&Term, usize> =
            terms.iter().enumerate().map(|(t, term)| (term, t + 1)).collect();
        let sizes: Vec<usize> = u.indices().iter().map(|&i| self.systems[i].size).collect();

        // dictionary positions of each lower-order function's expansion
        let lower_maps: Vec<Vec<usize>> = lower_blocks
            .iter()
            .map(|b| {
                let sub_terms = dictionary(&b.subset, self.systems);
                std::iter::once(0)
                    .chain(sub_terms.iter().map(|t| lookup[t]))
                    .collect()
            })
            .collect();

        let mut functions = Vec::with_capacity(sizes.iter().product());
        for index in multi_indices(&sizes) {
            let tensor = Term {
                subset: u.clone(),
                index: index.clone(),
            };
            let t_col = term_column(&tensor, self.uni, n);
            let t_mean = mean(t_col.as_slice());
            let t_c = t_col.add_scalar(-t_mean);
            let rhs = -(phi_c.tr_mul(&t_c)) / n as f64;
            let mut lambda = cholesky_solve(&chol, &rhs);
            let resid = &rhs - &gram * &lambda;
            lambda += cholesky_solve(&chol, &resid);
            let constant =
                -(t_mean + lambda.iter().zip(&phi_means).map(|(l, m)| l * m).sum::<f64>());

            let mut coefficients = vec![0.0; terms.len() + 1];
            coefficients[0] = constant;
            coefficients[lookup[&tensor]] += 1.0;
            let mut j = 0;
            for (b, map) in lower_blocks.iter().zip(&lower_maps) {
                for f in &b.functions {
                    let l = lambda[j];
                    for (c, &pos) in f.coefficients.iter().zip(map) {
                        coefficients[pos] += l * c;
                    }
                    j += 1;
                }
            }
            functions.push(BasisFunction {
                index,
                lambda: lambda.iter().copied().collect(),
                constant,
                coefficients,
            });
        }
        let block = Block {
            subset: u.clone(),
            sizes,
            functions,
            gram_rcond: Some(rcond),
            jittered,
        };
        let dict = dictionary_matrix(&terms, self.uni, n);
        let coef = DMatrix::from_fn(terms.len() + 1, block.dim(), |t, kk| {
            block.functions[kk].coefficients[t]
        });
        Ok((block, dict * coef))
    }
}

/// Largest normalized violation of one family of constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub subset: Subset,
    /// `None` stands for the constant function.
    pub against: Option<Subset>,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    pub entries: Vec<ConstraintViolation>,
}

impl OrthogonalityReport {
    pub fn max_violation(&self) -> f64 {
        self.entries.iter().map(|e| e.max).fold(0.0, f64::max)
    }

    pub fn holds(&self) -> bool {
        self.max_violation() < ORTHOGONALITY_TOL
    }
}

/// Normalized violations `|⟨ϕ^u, ϕ^v⟩ₙ| / (‖ϕ^u‖ₙ ‖ϕ^v‖ₙ)` for every
/// `v ⊂ u`, and `|⟨ϕ^u, 1⟩ₙ| / ‖ϕ^u‖ₙ`, evaluated on `sample`.
pub fn check_hierarchical_orthogonality(basis: &HofdBasis, sample: &Sample) -> OrthogonalityReport {
    let x = sample.inputs();
    let cols: Vec<DMatrix<f64>> = (0..basis.blocks.len())
        .map(|b| basis.block_values(b, x))
        .collect();
    let norms: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            (0..c.ncols())
                .map(|j| emp_dot(c.column(j).as_slice(), c.column(j).as_slice()).sqrt())
                .collect()
        })
        .collect();
    let mut entries = Vec::new();
    for (b, block) in basis.blocks.iter().enumerate() {
        let c = &cols[b];
        let mean_violation = (0..c.ncols())
            .map(|j| mean(c.column(j).as_slice()).abs() / norms[b][j])
            .fold(0.0, f64::max);
        entries.push(ConstraintViolation {
            subset: block.subset.clone(),
            against: None,
            max: mean_violation,
        });
        for (bv, lower) in basis.blocks.iter().enumerate() {
            if !lower.subset.is_proper_subset_of(&block.subset) {
                continue;
            }
            let g = c.tr_mul(&cols[bv]) / sample.n() as f64;
            let mut worst: f64 = 0.0;
            for i in 0..g.nrows() {
                for j in 0..g.ncols() {
                    worst = worst.max(g[(i, j)].abs() / (norms[b][i] * norms[bv][j]));
                }
            }
            entries.push(ConstraintViolation {
                subset: block.subset.clone(),
                against: Some(lower.subset.clone()),
                max: worst,
            });
        }
    }
    OrthogonalityReport { entries }
}

/// Empirically orthonormalizes `systems` on `sample` and builds the basis
/// for all subsets up to `order`.
pub fn fit_basis(
    systems: &[UnivariateSystem],
    order: usize,
    sample: &Sample,
) -> Result<HofdBasis> {
    let empirical = systems
        .iter()
        .enumerate()
        .map(|(i, s)| s.empirical_orthonormalize(sample.column(i)))
        .collect::<Result<Vec<_>>>()?;
    let subsets = crate::subsets::enumerate_subsets(sample.p(), order)?;
    build_hogs_basis(&empirical, &subsets, sample)
}
