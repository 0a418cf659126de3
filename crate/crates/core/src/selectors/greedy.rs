//! Backward elimination on an information criterion.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::design::{select_columns, ModelId};
use crate::error::{PosiError, Result};

/// Models up to this many columns get all projections precomputed.
const CACHE_MAX_P: usize = 12;

/// Orthonormal bases of `col(X[M])` for the models the search can visit.
#[derive(Debug, Clone)]
pub struct ProjectionCache {
    x: DMatrix<f64>,
    bases: HashMap<ModelId, DMatrix<f64>>,
}

impl ProjectionCache {
    pub fn new(x: &DMatrix<f64>, protected: &ModelId) -> Result<Self> {
        let p = x.ncols();
        let mut bases = HashMap::new();
        if p <= CACHE_MAX_P {
            let free = protected.complement(p).indices();
            for mask in 0u64..(1u64 << free.len()) {
                let mut m = protected.clone();
                for (k, &j) in free.iter().enumerate() {
                    if mask >> k & 1 == 1 {
                        m.insert(j);
                    }
                }
                let q = basis(x, &m)?;
                bases.insert(m, q);
            }
        }
        Ok(ProjectionCache { x: x.clone(), bases })
    }

    /// `||y - P_M y||^2`.
    pub fn rss(&self, y: &DVector<f64>, m: &ModelId) -> Result<f64> {
        let owned;
        let q = match self.bases.get(m) {
            Some(q) => q,
            None => {
                owned = basis(&self.x, m)?;
                &owned
            }
        };
        if q.ncols() == 0 {
            return Ok(y.norm_squared());
        }
        Ok((y - q * (q.transpose() * y)).norm_squared())
    }
}

fn basis(x: &DMatrix<f64>, m: &ModelId) -> Result<DMatrix<f64>> {
    if m.is_empty() {
        return Ok(DMatrix::zeros(x.nrows(), 0));
    }
    let xm = select_columns(x, m);
    let (n, k) = xm.shape();
    if n < k {
        return Err(PosiError::RankDeficient(format!("model {m} has more columns than rows")));
    }
    let qr = xm.qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    if r.diagonal().iter().any(|v| v.abs() <= n.max(k) as f64 * f64::EPSILON * scale) {
        return Err(PosiError::RankDeficient(format!("model {m} is rank deficient")));
    }
    Ok(qr.q())
}

/// `n ln(RSS/n) + penalty |M|`, with RSS floored relative to `||y||^2` so
/// that exact fits compare equal.
pub fn information_criterion(rss: f64, yy: f64, n: usize, size: usize, penalty: f64) -> f64 {
    let floor = (1e-20 * yy).max(f64::MIN_POSITIVE);
    let nf = n as f64;
    nf * (rss.max(floor) / nf).ln() + penalty * size as f64
}

/// Starting from the full model, repeatedly drops the unprotected variable
/// whose removal lowers the criterion most (lowest index on ties) until no
/// removal lowers it.
pub fn greedy_backward(
    cache: &ProjectionCache,
    y: &DVector<f64>,
    penalty: f64,
    protected: &ModelId,
) -> Result<ModelId> {
    let n = y.len();
    let p = cache.x.ncols();
    let yy = y.norm_squared();
    let ic = |m: &ModelId| -> Result<f64> { Ok(information_criterion(cache.rss(y, m)?, yy, n, m.len(), penalty)) };
    let mut current = ModelId::full(p);
    let mut current_ic = ic(&current)?;
    loop {
        let mut best: Option<(ModelId, f64)> = None;
        for j in current.indices() {
            if protected.contains(j) {
                continue;
            }
            let mut cand = current.clone();
            cand.remove(j);
            let v = ic(&cand)?;
            let threshold = best.as_ref().map_or(current_ic, |b| b.1);
            if v < threshold {
                best = Some((cand, v));
            }
        }
        match best {
            Some((m, v)) => {
                current = m;
                current_ic = v;
            }
            None => return Ok(current),
        }
    }
}
