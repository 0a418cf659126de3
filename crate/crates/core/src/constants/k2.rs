//! `K2`: a randomized search for the largest `K1` over completions of `x0[M]`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mc::{max_abs_projections, DirectionSet, SphereSample};
use super::solver::{bootstrap_stream, solve_k1, sphere_stream};
use super::{
    fsharp_quantile, ConstantEstimate, ConstantKind, FLAG_REGULARIZED_COVARIANCE, FLAG_STOCHASTIC_LOWER_BOUND,
    FLAG_VIA_K1,
};
use crate::design::{ModelId, UniverseGeometry};
use crate::error::{PosiError, Result};
use crate::numerics::{DofParam, RngStream};

const COVARIANCE_JITTER: f64 = 1e-8;

/// Sizes of the three search stages: `candidates` completions scored with
/// `samples1` sphere points, the best `keep` rescored with `samples2`, and
/// the winner scored with `samples3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct K2SearchConfig {
    pub candidates: usize,
    pub samples1: usize,
    pub keep: usize,
    pub samples2: usize,
    pub samples3: usize,
    pub seed: u64,
}

impl K2SearchConfig {
    pub fn paper(seed: u64) -> Self {
        K2SearchConfig {
            candidates: 100_000,
            samples1: 1_000,
            keep: 1_000,
            samples2: 100_000,
            samples3: 1_000_000,
            seed,
        }
    }

    /// A scaled-down search that finishes in seconds for `p <= 10`.
    pub fn desk(seed: u64) -> Self {
        K2SearchConfig { candidates: 200, samples1: 500, keep: 10, samples2: 5_000, samples3: 100_000, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates == 0 || self.samples1 == 0 || self.samples2 == 0 || self.samples3 == 0 {
            return Err(PosiError::Validation("K2 search sizes must be >= 1".into()));
        }
        if self.keep == 0 || self.keep > self.candidates {
            return Err(PosiError::Validation("K2 must keep between 1 and N1 candidates".into()));
        }
        Ok(())
    }
}

/// `K2(x0[M], M)`; entries of `x0` outside `M` are ignored.
pub fn k2(
    geom: &UniverseGeometry,
    x0: &DVector<f64>,
    m: &ModelId,
    r: DofParam,
    alpha: f64,
    search: &K2SearchConfig,
) -> Result<ConstantEstimate> {
    k2_with(geom, x0, m, r, alpha, search)
}

pub(crate) fn k2_with(
    geom: &UniverseGeometry,
    x0: &DVector<f64>,
    m: &ModelId,
    r: DofParam,
    alpha: f64,
    search: &K2SearchConfig,
) -> Result<ConstantEstimate> {
    search.validate()?;
    crate::design::check_alpha(alpha)?;
    if x0.len() != geom.p() {
        return Err(PosiError::Validation(format!("x0 has length {} but p = {}", x0.len(), geom.p())));
    }
    if !geom.universe().contains(m) {
        return Err(PosiError::Validation(format!("model {m} is not in the universe")));
    }
    let d = geom.d();
    let p = geom.p();
    let hi = fsharp_quantile(d, r, 1.0 - alpha)?;
    let mut est = ConstantEstimate {
        kind: ConstantKind::K2,
        value: 0.0,
        value_upper: None,
        stderr: None,
        samples: Some(search.samples3),
        grid: None,
        seed: Some(search.seed),
        variant: None,
        model: Some(m.clone()),
        flags: Vec::new(),
    };

    let mut base = DVector::zeros(p);
    for j in m.indices() {
        base[j] = x0[j];
    }
    let free = m.complement(p).indices();

    let score_final = |x: &DVector<f64>| -> Result<(f64, Option<f64>)> {
        let c = projections(geom, x, &SphereSample::generate(d, search.samples3, &sphere_stream(search.seed)))?;
        solve_k1(&c, d, r, alpha, hi, Some(&bootstrap_stream(search.seed)))
    };

    if free.is_empty() {
        let (k, se) = score_final(&base)?;
        est.value = k;
        est.stderr = se;
        return Ok(est.flag(FLAG_VIA_K1));
    }

    let (chol, regularized) = candidate_factor(geom, &free)?;
    let cand_root = RngStream::new(search.seed).substream(3);
    let candidate = |idx: usize| -> DVector<f64> {
        let mut x = base.clone();
        if idx > 0 {
            let mut s = cand_root.substream(idx as u64);
            let z = DVector::from_fn(free.len(), |_, _| s.standard_normal());
            let w = &chol * z;
            for (k, &j) in free.iter().enumerate() {
                x[j] = w[k];
            }
        }
        x
    };

    let stage = |ids: &[usize], samples: usize, key: u64| -> Result<Vec<f64>> {
        let sample = SphereSample::generate(d, samples, &RngStream::new(search.seed).substream(key));
        ids.par_iter()
            .map(|&idx| {
                let c = projections(geom, &candidate(idx), &sample)?;
                Ok(solve_k1(&c, d, r, alpha, hi, None)?.0)
            })
            .collect()
    };

    let all: Vec<usize> = (0..search.candidates).collect();
    let first = stage(&all, search.samples1, 4)?;
    let kept: Vec<usize> = ranked(&all, &first).into_iter().take(search.keep).collect();
    let second = stage(&kept, search.samples2, 5)?;
    let best = ranked(&kept, &second)[0];

    let (k, se) = score_final(&candidate(best))?;
    est.value = k;
    est.stderr = se;
    if regularized {
        est = est.flag(FLAG_REGULARIZED_COVARIANCE);
    }
    Ok(est.flag(FLAG_STOCHASTIC_LOWER_BOUND))
}

/// Candidate ids sorted by descending score; ties keep id order.
fn ranked(ids: &[usize], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(ids[a].cmp(&ids[b])));
    order.into_iter().map(|k| ids[k]).collect()
}

fn projections(geom: &UniverseGeometry, x: &DVector<f64>, sample: &SphereSample) -> Result<Vec<f64>> {
    let dirs = geom.directions(x)?;
    let set = DirectionSet::from_rows(geom.d(), (0..dirs.len()).map(|k| dirs.row(k)));
    Ok(max_abs_projections(sample, &set))
}

/// Cholesky factor of `(1/n) X[free]'X[free]`, with a small ridge when the
/// matrix is singular.
fn candidate_factor(geom: &UniverseGeometry, free: &[usize]) -> Result<(DMatrix<f64>, bool)> {
    let canon = geom.canon();
    let xf = canon.xt.select_columns(free);
    let cov = xf.transpose() * &xf / canon.n() as f64;
    if let Some(ch) = cov.clone().cholesky() {
        let l = ch.l();
        let min_diag = l.diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let max_diag = l.diagonal().iter().fold(0.0f64, |a, &b| a.max(b));
        if min_diag > 1e-7 * max_diag {
            return Ok((l, false));
        }
    }
    let k = free.len();
    let ridge = cov + DMatrix::identity(k, k) * COVARIANCE_JITTER;
    let ch = ridge
        .cholesky()
        .ok_or_else(|| PosiError::Singular("candidate covariance is not positive semidefinite".into()))?;
    Ok((ch.l(), true))
}
