use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{HofdError, Result};

/// Nonempty set of input indices (0-based, strictly increasing).
/// Displayed 1-based, e.g. `{1,2}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Subset(Vec<usize>);

impl Subset {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        let len = indices.len();
        indices.dedup();
        if indices.is_empty() || indices.len() != len {
            return Err(HofdError::Config(format!(
                "subset must be nonempty with distinct indices, got {indices:?}"
            )));
        }
        Ok(Self(indices))
    }

    pub fn singleton(i: usize) -> Self {
        Self(vec![i])
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn is_subset_of(&self, other: &Subset) -> bool {
        self.0.iter().all(|i| other.contains(*i))
    }

    pub fn is_proper_subset_of(&self, other: &Subset) -> bool {
        self.len() < other.len() && self.is_subset_of(other)
    }

    /// Neither set contains the other.
    pub fn is_unnested_with(&self, other: &Subset) -> bool {
        !self.is_subset_of(other) && !other.is_subset_of(self)
    }

    /// All nonempty strict subsets in canonical order.
    pub fn proper_subsets(&self) -> Vec<Subset> {
        let mut out = Vec::new();
        for k in 1..self.len() {
            for combo in combinations(self.len(), k) {
                out.push(Subset(combo.iter().map(|&c| self.0[c]).collect()));
            }
        }
        out
    }

    /// All nonempty subsets including `self`, canonical order.
    pub fn nonempty_subsets(&self) -> Vec<Subset> {
        let mut out = self.proper_subsets();
        out.push(self.clone());
        out
    }
}

impl TryFrom<Vec<usize>> for Subset {
    type Error = HofdError;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Subset::new(v)
    }
}

impl From<Subset> for Vec<usize> {
    fn from(s: Subset) -> Self {
        s.0
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

/// `k`-combinations of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k == 0 || k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Every nonempty `u ⊆ {0..p-1}` with `|u| <= d`, by size then
/// lexicographically.
pub fn enumerate_subsets(p: usize, d: usize) -> Result<Vec<Subset>> {
    if d == 0 || d > p {
        return Err(HofdError::Config(format!(
            "ANOVA order d = {d} must satisfy 1 <= d <= p = {p}"
        )));
    }
    let mut out = Vec::new();
    for k in 1..=d {
        out.extend(combinations(p, k).into_iter().map(Subset));
    }
    Ok(out)
}

/// Multi-indices of `Π_{i∈u} {1..L_i}`, last coordinate fastest.
pub fn multi_indices(sizes: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = sizes.iter().product();
    let mut out = Vec::with_capacity(total);
    if sizes.iter().any(|&s| s == 0) {
        return out;
    }
    let mut cur = vec![1; sizes.len()];
    for _ in 0..total {
        out.push(cur.clone());
        for pos in (0..sizes.len()).rev() {
            if cur[pos] < sizes[pos] {
                cur[pos] += 1;
                break;
            }
            cur[pos] = 1;
        }
    }
    out
}
