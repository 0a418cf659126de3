//! Targets, intervals and coverage.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constants::{ConstantEstimate, ConstantKind};
use crate::design::{restricted_ols, select_entries, ModelId};
use crate::error::{PosiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TargetKind {
    /// `x0'[M] beta_M^(n)`, the in-sample projection of the mean.
    DesignDependent,
    /// `x0'[M] beta_M^(star)`, defined through the second-moment matrix.
    DesignIndependent,
}

/// What an interval is meant to cover.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub beta_true: DVector<f64>,
    /// Mean of `Y`; `X beta_true` when absent.
    pub mu: Option<DVector<f64>>,
    pub sigma: Option<DMatrix<f64>>,
}

impl TargetSpec {
    pub fn design_dependent(beta_true: DVector<f64>, mu: Option<DVector<f64>>) -> Self {
        TargetSpec { kind: TargetKind::DesignDependent, beta_true, mu, sigma: None }
    }

    pub fn design_independent(beta_true: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        check_second_moments(&sigma)?;
        if sigma.nrows() != beta_true.len() {
            return Err(PosiError::Validation("Sigma and beta disagree on p".into()));
        }
        Ok(TargetSpec { kind: TargetKind::DesignIndependent, beta_true, mu: None, sigma: Some(sigma) })
    }

    /// `x0'[M]` times the target coefficients for model `m`.
    pub fn value(&self, x: &DMatrix<f64>, x0: &DVector<f64>, m: &ModelId) -> Result<f64> {
        if m.is_empty() {
            return Ok(0.0);
        }
        let coef = match self.kind {
            TargetKind::DesignDependent => {
                let mu = match &self.mu {
                    Some(mu) => mu.clone(),
                    None => x * &self.beta_true,
                };
                beta_target_n(x, &mu, m)?
            }
            TargetKind::DesignIndependent => {
                let sigma = self
                    .sigma
                    .as_ref()
                    .ok_or_else(|| PosiError::Validation("design-independent target needs Sigma".into()))?;
                beta_target_star(sigma, &self.beta_true, m)?
            }
        };
        Ok(select_entries(x0, m).dot(&coef))
    }
}

pub fn check_second_moments(sigma: &DMatrix<f64>) -> Result<()> {
    if !sigma.is_square() {
        return Err(PosiError::Validation("Sigma must be square".into()));
    }
    let asym = (sigma - sigma.transpose()).amax();
    if asym > 1e-10 {
        return Err(PosiError::Validation(format!("Sigma is not symmetric (max gap {asym:e})")));
    }
    if sigma.clone().cholesky().is_none() {
        return Err(PosiError::Validation("Sigma is not positive definite".into()));
    }
    Ok(())
}

/// `(X[M]'X[M])^{-1} X[M]' mu`; empty for the empty model.
pub fn beta_target_n(x: &DMatrix<f64>, mu: &DVector<f64>, m: &ModelId) -> Result<DVector<f64>> {
    if mu.len() != x.nrows() {
        return Err(PosiError::Validation(format!("mu has length {} but X has {} rows", mu.len(), x.nrows())));
    }
    restricted_ols(x, mu, m)
}

/// `beta[M] + Sigma[M,M]^{-1} Sigma[M,M^c] beta[M^c]`; empty for the empty model.
pub fn beta_target_star(sigma: &DMatrix<f64>, beta: &DVector<f64>, m: &ModelId) -> Result<DVector<f64>> {
    let p = beta.len();
    if sigma.nrows() != p || sigma.ncols() != p {
        return Err(PosiError::Validation("Sigma and beta disagree on p".into()));
    }
    if m.max_index().is_some_and(|j| j >= p) {
        return Err(PosiError::Validation(format!("model {m} exceeds p = {p}")));
    }
    let inside = m.indices();
    if inside.is_empty() {
        return Ok(DVector::zeros(0));
    }
    let outside = m.complement(p).indices();
    let s_mm = sigma.select_rows(&inside).select_columns(&inside);
    let chol = s_mm.cholesky().ok_or_else(|| PosiError::Singular(format!("Sigma[M,M] is singular for M = {m}")))?;
    let mut out = select_entries(beta, m);
    if !outside.is_empty() {
        let s_mo = sigma.select_rows(&inside).select_columns(&outside);
        let b_out = DVector::from_iterator(outside.len(), outside.iter().map(|&j| beta[j]));
        out += chol.solve(&(s_mo * b_out));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub center: f64,
    pub half_width: f64,
    pub model: ModelId,
    pub constant_kind: ConstantKind,
}

impl PredictionInterval {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("interval serializes")
    }
}

/// `x0'[M] beta_hat_M +- K ||s_M|| sigma_hat`; the point `{0}` for the empty model.
pub fn build_interval(
    x0: &DVector<f64>,
    m: &ModelId,
    beta_hat_m: &DVector<f64>,
    k: &ConstantEstimate,
    s_norm: f64,
    sigma_hat: f64,
) -> Result<PredictionInterval> {
    if !(s_norm >= 0.0) || !(sigma_hat >= 0.0) {
        return Err(PosiError::Validation("interval scale factors must be nonnegative".into()));
    }
    if beta_hat_m.len() != m.len() {
        return Err(PosiError::Validation(format!(
            "coefficient vector has length {} for a model of size {}",
            beta_hat_m.len(),
            m.len()
        )));
    }
    if m.is_empty() {
        return Ok(PredictionInterval { center: 0.0, half_width: 0.0, model: m.clone(), constant_kind: k.kind });
    }
    Ok(PredictionInterval {
        center: select_entries(x0, m).dot(beta_hat_m),
        half_width: k.conservative() * s_norm * sigma_hat,
        model: m.clone(),
        constant_kind: k.kind,
    })
}

/// Closed-interval membership.
pub fn covers(iv: &PredictionInterval, target_value: f64) -> bool {
    (target_value - iv.center).abs() <= iv.half_width
}
