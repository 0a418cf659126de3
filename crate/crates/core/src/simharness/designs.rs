//! Random designs with a prescribed second-moment structure.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::numerical_rank;
use crate::error::{PosiError, Result};
use crate::numerics::RngStream;

pub const MAX_REGENERATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SigmaKind {
    /// `I + (2a + p a^2) E` with `E` the all-ones matrix.
    Exchangeable(f64),
    /// Unit variances; the last variable has correlation `c` with every
    /// other one, the rest are uncorrelated. `None` uses `sqrt(0.8/(p-1))`.
    Equicorrelated(Option<f64>),
    IidIdentity,
    User(Vec<Vec<f64>>),
}

/// Covariance of the non-intercept regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaFamily {
    pub kind: SigmaKind,
    pub p_tilde: usize,
    sigma: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl SigmaFamily {
    pub fn new(kind: SigmaKind, p_tilde: usize) -> Result<Self> {
        if p_tilde == 0 {
            return Err(PosiError::Validation("need at least one non-intercept regressor".into()));
        }
        let sigma = match &kind {
            SigmaKind::Exchangeable(a) => {
                let w = 2.0 * a + p_tilde as f64 * a * a;
                DMatrix::identity(p_tilde, p_tilde) + DMatrix::from_element(p_tilde, p_tilde, w)
            }
            SigmaKind::Equicorrelated(c) => {
                if p_tilde < 2 {
                    return Err(PosiError::Validation("the equicorrelated family needs p_tilde >= 2".into()));
                }
                let c = c.unwrap_or_else(|| default_equicorrelation(p_tilde));
                let mut s = DMatrix::identity(p_tilde, p_tilde);
                for i in 0..p_tilde - 1 {
                    s[(i, p_tilde - 1)] = c;
                    s[(p_tilde - 1, i)] = c;
                }
                s
            }
            SigmaKind::IidIdentity => DMatrix::identity(p_tilde, p_tilde),
            SigmaKind::User(rows) => {
                if rows.len() != p_tilde || rows.iter().any(|r| r.len() != p_tilde) {
                    return Err(PosiError::Validation(format!("user covariance must be {p_tilde} x {p_tilde}")));
                }
                DMatrix::from_fn(p_tilde, p_tilde, |i, j| rows[i][j])
            }
        };
        crate::inference::check_second_moments(&sigma)?;
        let chol = sigma.clone().cholesky().expect("checked positive definite").l();
        Ok(SigmaFamily { kind, p_tilde, sigma, chol })
    }

    pub fn sigma_tilde(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Uncentered second moments of a full row: `diag(1, Sigma~)` with an
    /// intercept, `Sigma~` without.
    pub fn second_moments(&self, intercept: bool) -> DMatrix<f64> {
        if !intercept {
            return self.sigma.clone();
        }
        let p = self.p_tilde + 1;
        let mut s = DMatrix::zeros(p, p);
        s[(0, 0)] = 1.0;
        s.view_mut((1, 1), (self.p_tilde, self.p_tilde)).copy_from(&self.sigma);
        s
    }

    fn draw_row(&self, intercept: bool, stream: &mut RngStream) -> DVector<f64> {
        let z = DVector::from_fn(self.p_tilde, |_, _| stream.standard_normal());
        let v = &self.chol * z;
        if intercept {
            let mut row = DVector::zeros(self.p_tilde + 1);
            row[0] = 1.0;
            row.rows_mut(1, self.p_tilde).copy_from(&v);
            row
        } else {
            v
        }
    }
}

pub fn default_equicorrelation(p_tilde: usize) -> f64 {
    (0.8 / (p_tilde as f64 - 1.0)).sqrt()
}

#[derive(Debug, Clone)]
pub struct GeneratedDesign {
    pub x: DMatrix<f64>,
    pub x0: DVector<f64>,
    /// Second moments of a row, the `Sigma` of the design-independent target.
    pub sigma: DMatrix<f64>,
    pub regenerations: usize,
}

/// Draws `n + 1` rows; the first `n` form `X` and the last is `x0`.
/// Rank-deficient draws are retried from the next substream.
pub fn gen_design(
    family: &SigmaFamily,
    n: usize,
    p: usize,
    intercept: bool,
    stream: &RngStream,
) -> Result<GeneratedDesign> {
    let expected = family.p_tilde + usize::from(intercept);
    if p != expected {
        return Err(PosiError::Validation(format!(
            "p = {p} but the family gives {expected} columns (intercept: {intercept})"
        )));
    }
    if n < p {
        return Err(PosiError::Validation(format!("n = {n} is below p = {p}; X cannot have full column rank")));
    }
    for attempt in 0..=MAX_REGENERATIONS {
        let mut s = stream.substream(attempt as u64);
        let rows: Vec<DVector<f64>> = (0..=n).map(|_| family.draw_row(intercept, &mut s)).collect();
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        if matches!(numerical_rank(&x), Ok(r) if r == p) {
            return Ok(GeneratedDesign {
                x,
                x0: rows[n].clone(),
                sigma: family.second_moments(intercept),
                regenerations: attempt,
            });
        }
    }
    Err(PosiError::RankDeficient(format!("no full-rank design after {MAX_REGENERATIONS} regenerations")))
}
