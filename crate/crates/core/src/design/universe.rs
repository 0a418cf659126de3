use std::collections::HashSet;

use nalgebra::DMatrix;

use super::canonical::{numerical_rank, select_columns};
use super::model::ModelId;
use crate::error::{PosiError, Result};

/// Largest universe `enumerate_universe` will build by default.
pub const DEFAULT_UNIVERSE_BUDGET: u128 = 1 << 22;

/// The admissible collection of models.
#[derive(Debug, Clone)]
pub struct ModelUniverse {
    models: Vec<ModelId>,
    p: usize,
}

/// How a universe is described on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UniverseSpec {
    All,
    MaxSize(usize),
    Explicit(Vec<ModelId>),
}

impl UniverseSpec {
    /// Materializes the universe for design `x`, dropping rank-deficient
    /// subsets of generated universes.
    pub fn build(&self, x: &DMatrix<f64>) -> Result<ModelUniverse> {
        match self {
            UniverseSpec::All => Ok(enumerate_universe(x.ncols(), None, x, DEFAULT_UNIVERSE_BUDGET)?.0),
            UniverseSpec::MaxSize(k) => Ok(enumerate_universe(x.ncols(), Some(*k), x, DEFAULT_UNIVERSE_BUDGET)?.0),
            UniverseSpec::Explicit(models) => ModelUniverse::from_models(models.clone(), x),
        }
    }

    /// `c(empty, M)`, i.e. the number of nonempty models, without enumerating.
    /// Assumes every candidate subset is full rank, as it is for `d = p`.
    pub fn count_nonempty(&self, p: usize) -> u128 {
        match self {
            UniverseSpec::All => {
                if p >= 128 {
                    u128::MAX
                } else {
                    (1u128 << p) - 1
                }
            }
            UniverseSpec::MaxSize(k) => (1..=(*k).min(p)).map(|s| binomial(p, s)).sum(),
            UniverseSpec::Explicit(models) => models.iter().filter(|m| !m.is_empty()).count() as u128,
        }
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

impl ModelUniverse {
    /// Validates a user-supplied collection: the empty model must be present,
    /// the models must cover `1..=p`, contain no duplicates, and every
    /// nonempty model must be full rank in `x`.
    pub fn from_models(models: Vec<ModelId>, x: &DMatrix<f64>) -> Result<Self> {
        let p = x.ncols();
        let u = ModelUniverse { models, p };
        u.check_structure()?;
        let bad: Vec<String> =
            u.models.iter().filter(|m| !m.is_empty()).filter(|m| !is_full_rank(x, m)).map(|m| m.to_string()).collect();
        if !bad.is_empty() {
            return Err(PosiError::RankDeficient(bad.join(" ")));
        }
        Ok(u)
    }

    /// Structural checks only, no rank test.
    pub fn from_models_unchecked_rank(models: Vec<ModelId>, p: usize) -> Result<Self> {
        let u = ModelUniverse { models, p };
        u.check_structure()?;
        Ok(u)
    }

    fn check_structure(&self) -> Result<()> {
        if !self.models.iter().any(|m| m.is_empty()) {
            return Err(PosiError::Validation("universe must contain the empty model".into()));
        }
        let mut seen = HashSet::new();
        for m in &self.models {
            if let Some(j) = m.max_index() {
                if j >= self.p {
                    return Err(PosiError::Validation(format!("model {m} uses index {} > p = {}", j + 1, self.p)));
                }
            }
            if !seen.insert(m.clone()) {
                return Err(PosiError::Validation(format!("duplicate model {m}")));
            }
        }
        let union = self.models.iter().fold(ModelId::empty(), |acc, m| acc.union(m));
        if union != ModelId::full(self.p) {
            let missing: Vec<String> =
                (0..self.p).filter(|&j| !union.contains(j)).map(|j| (j + 1).to_string()).collect();
            return Err(PosiError::Validation(format!("regressors {} appear in no model", missing.join(","))));
        }
        Ok(())
    }

    pub fn models(&self) -> &[ModelId] {
        &self.models
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn position(&self, m: &ModelId) -> Option<usize> {
        self.models.iter().position(|x| x == m)
    }

    pub fn contains(&self, m: &ModelId) -> bool {
        self.position(m).is_some()
    }
}

fn is_full_rank(x: &DMatrix<f64>, m: &ModelId) -> bool {
    let xm = select_columns(x, m);
    if xm.nrows() < xm.ncols() {
        return false;
    }
    matches!(numerical_rank(&xm), Ok(r) if r == m.len())
}

/// `c(M, U)`: the number of models in the universe that are not subsets of `M`.
pub fn count_not_subset(m: &ModelId, u: &ModelUniverse) -> usize {
    u.models().iter().filter(|other| !other.is_subset_of(m)).count()
}

/// Every subset of size at most `max_size` (`None` = all sizes), ordered by
/// size and then lexicographically. Rank-deficient subsets are dropped and
/// the number dropped is returned alongside the universe.
pub fn enumerate_universe(
    p: usize,
    max_size: Option<usize>,
    x: &DMatrix<f64>,
    budget: u128,
) -> Result<(ModelUniverse, usize)> {
    if p == 0 || p != x.ncols() {
        return Err(PosiError::Validation(format!("p = {p} does not match the design's {} columns", x.ncols())));
    }
    let k = max_size.unwrap_or(p);
    if k == 0 || k > p {
        return Err(PosiError::Validation(format!("max model size must be in 1..={p}, got {k}")));
    }
    let total: u128 = (0..=k).map(|s| binomial(p, s)).sum();
    if total > budget {
        return Err(PosiError::Budget(format!("{total} models exceed the budget of {budget}")));
    }
    let mut models = Vec::with_capacity(total as usize);
    let mut dropped = 0;
    for size in 0..=k {
        for_each_combination(p, size, |idx| {
            let m = ModelId::from_indices(idx.iter().copied());
            if m.is_empty() || is_full_rank(x, &m) {
                models.push(m);
            } else {
                dropped += 1;
            }
        });
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} rank-deficient models from the generated universe");
    }
    let u = ModelUniverse { models, p };
    u.check_structure()?;
    Ok((u, dropped))
}

/// Visits the `size`-subsets of `0..p` in lexicographic order.
fn for_each_combination<F: FnMut(&[usize])>(p: usize, size: usize, mut f: F) {
    if size > p {
        return;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        f(&idx);
        let mut i = size;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + p - size {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
