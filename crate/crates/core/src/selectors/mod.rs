//! Model selection procedures and variance estimators.

mod greedy;
mod lasso;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{canonicalize, restricted_ols, select_columns, ModelId};
use crate::error::{PosiError, Result};
use crate::numerics::{DofParam, RngStream};

pub use greedy::{greedy_backward, information_criterion, ProjectionCache};
pub use lasso::{
    cv_lambda, fold_labels, lambda_grid, lambda_max, lambda_standin, lasso_cd, soft_threshold, GramProblem,
    LassoDesign, CV_GRID, CV_RATIO, GAP_TOL, MAX_SWEEPS,
};

pub const DEFAULT_FOLDS: usize = 10;
pub const STANDIN_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SelectorKind {
    GreedyIc,
    LassoCv,
    LassoFixed,
    FixedModel,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IcPenalty {
    Aic,
    Bic,
    Value(f64),
}

impl IcPenalty {
    pub fn value(&self, n: usize) -> f64 {
        match *self {
            IcPenalty::Aic => 2.0,
            IcPenalty::Bic => (n as f64).ln(),
            IcPenalty::Value(k) => k,
        }
    }
}

/// A user-supplied selection rule.
pub trait ModelSelector: Send + Sync {
    fn select(&self, x: &DMatrix<f64>, y: &DVector<f64>, stream: &mut RngStream) -> Result<ModelId>;
}

#[derive(Clone)]
pub enum SelectorRule {
    GreedyIc(IcPenalty),
    LassoCv,
    /// `None` asks for the Monte Carlo stand-in value.
    LassoFixed(Option<f64>),
    FixedModel(ModelId),
    Custom(Arc<dyn ModelSelector>),
}

impl std::fmt::Debug for SelectorRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SelectorRule::GreedyIc(p) => write!(f, "GreedyIc({p:?})"),
            SelectorRule::LassoCv => write!(f, "LassoCv"),
            SelectorRule::LassoFixed(l) => write!(f, "LassoFixed({l:?})"),
            SelectorRule::FixedModel(m) => write!(f, "FixedModel({m})"),
            SelectorRule::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelectorSpec {
    pub rule: SelectorRule,
    /// Variables every selected model contains.
    pub protected: ModelId,
    pub folds: usize,
}

impl SelectorSpec {
    pub fn new(rule: SelectorRule) -> Self {
        SelectorSpec { rule, protected: ModelId::empty(), folds: DEFAULT_FOLDS }
    }

    pub fn aic() -> Self {
        Self::new(SelectorRule::GreedyIc(IcPenalty::Aic))
    }

    pub fn bic() -> Self {
        Self::new(SelectorRule::GreedyIc(IcPenalty::Bic))
    }

    pub fn lasso_cv() -> Self {
        Self::new(SelectorRule::LassoCv)
    }

    pub fn fixed(m: ModelId) -> Self {
        Self::new(SelectorRule::FixedModel(m))
    }

    pub fn with_protected(mut self, protected: ModelId) -> Self {
        self.protected = protected;
        self
    }

    pub fn with_folds(mut self, folds: usize) -> Self {
        self.folds = folds;
        self
    }

    pub fn kind(&self) -> SelectorKind {
        match self.rule {
            SelectorRule::GreedyIc(_) => SelectorKind::GreedyIc,
            SelectorRule::LassoCv => SelectorKind::LassoCv,
            SelectorRule::LassoFixed(_) => SelectorKind::LassoFixed,
            SelectorRule::FixedModel(_) => SelectorKind::FixedModel,
            SelectorRule::Custom(_) => SelectorKind::Custom,
        }
    }

    /// Short name used in reports.
    pub fn label(&self) -> String {
        match &self.rule {
            SelectorRule::GreedyIc(IcPenalty::Aic) => "AIC".into(),
            SelectorRule::GreedyIc(IcPenalty::Bic) => "BIC".into(),
            SelectorRule::GreedyIc(IcPenalty::Value(k)) => format!("IC({k})"),
            SelectorRule::LassoCv => "LASSO_CV".into(),
            SelectorRule::LassoFixed(Some(l)) => format!("LASSO_FIXED({l})"),
            SelectorRule::LassoFixed(None) => "LASSO_FIXED(auto)".into(),
            SelectorRule::FixedModel(m) => format!("FIXED{m}"),
            SelectorRule::Custom(_) => "CUSTOM".into(),
        }
    }

    /// Parses `aic`, `bic`, `ic:<k>`, `lasso-cv`, `lasso-fixed:<lambda|auto>`
    /// or `fixed:<1-based indices>`.
    pub fn parse(s: &str, p: usize) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (head, arg) = match lower.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (lower.as_str(), None),
        };
        let rule = match (head, arg) {
            ("aic", None) => SelectorRule::GreedyIc(IcPenalty::Aic),
            ("bic", None) => SelectorRule::GreedyIc(IcPenalty::Bic),
            ("ic", Some(k)) => {
                let k: f64 = k.parse().map_err(|_| PosiError::Parse(format!("bad IC penalty '{k}'")))?;
                SelectorRule::GreedyIc(IcPenalty::Value(k))
            }
            ("lasso-cv", None) => SelectorRule::LassoCv,
            ("lasso-fixed", Some("auto")) => SelectorRule::LassoFixed(None),
            ("lasso-fixed", Some(l)) => {
                let l: f64 = l.parse().map_err(|_| PosiError::Parse(format!("bad lambda '{l}'")))?;
                SelectorRule::LassoFixed(Some(l))
            }
            ("fixed", Some(m)) => SelectorRule::FixedModel(ModelId::parse(m, p)?),
            _ => return Err(PosiError::Parse(format!("unknown selector '{s}'"))),
        };
        Ok(SelectorSpec::new(rule))
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.protected.max_index().is_some_and(|j| j >= p) {
            return Err(PosiError::Validation(format!("protected set {} exceeds p = {p}", self.protected)));
        }
        match &self.rule {
            SelectorRule::LassoCv if self.folds < 2 => {
                Err(PosiError::Validation("cross-validation needs at least 2 folds".into()))
            }
            SelectorRule::LassoFixed(Some(l)) if !(*l >= 0.0) || !l.is_finite() => {
                Err(PosiError::Validation(format!("lambda must be >= 0, got {l}")))
            }
            SelectorRule::GreedyIc(IcPenalty::Value(k)) if !k.is_finite() => {
                Err(PosiError::Validation("IC penalty must be finite".into()))
            }
            SelectorRule::FixedModel(m) if m.max_index().is_some_and(|j| j >= p) => {
                Err(PosiError::Validation(format!("fixed model {m} exceeds p = {p}")))
            }
            _ => Ok(()),
        }
    }

    /// Precomputes everything that depends only on `X`. `setup` seeds the
    /// stand-in lambda when one is requested.
    pub fn prepare(&self, x: &DMatrix<f64>, setup: &RngStream) -> Result<PreparedSelector> {
        self.validate(x.ncols())?;
        let inner = match &self.rule {
            SelectorRule::GreedyIc(pen) => {
                Prepared::Greedy(ProjectionCache::new(x, &self.protected)?, pen.value(x.nrows()))
            }
            SelectorRule::LassoCv => Prepared::Lasso(LassoDesign::new(x, &self.protected)?, None),
            SelectorRule::LassoFixed(l) => {
                let lam = match l {
                    Some(l) => *l,
                    None => lambda_standin(x, &self.protected, STANDIN_DRAWS, setup)?,
                };
                Prepared::Lasso(LassoDesign::new(x, &self.protected)?, Some(lam))
            }
            SelectorRule::FixedModel(m) => Prepared::Fixed(m.union(&self.protected)),
            SelectorRule::Custom(c) => Prepared::Custom(c.clone()),
        };
        Ok(PreparedSelector { spec: self.clone(), x: x.clone(), inner })
    }
}

enum Prepared {
    Greedy(ProjectionCache, f64),
    Lasso(LassoDesign, Option<f64>),
    Fixed(ModelId),
    Custom(Arc<dyn ModelSelector>),
}

/// A selector bound to a design.
pub struct PreparedSelector {
    spec: SelectorSpec,
    x: DMatrix<f64>,
    inner: Prepared,
}

impl PreparedSelector {
    pub fn spec(&self) -> &SelectorSpec {
        &self.spec
    }

    /// The fixed lambda in use, if any.
    pub fn lambda(&self) -> Option<f64> {
        match &self.inner {
            Prepared::Lasso(_, l) => *l,
            _ => None,
        }
    }

    pub fn select(&self, y: &DVector<f64>, stream: &mut RngStream) -> Result<ModelId> {
        if y.len() != self.x.nrows() {
            return Err(PosiError::Validation("Y and X disagree on n".into()));
        }
        let protected = &self.spec.protected;
        match &self.inner {
            Prepared::Greedy(cache, pen) => greedy_backward(cache, y, *pen, protected),
            Prepared::Fixed(m) => Ok(m.clone()),
            Prepared::Custom(c) => Ok(c.select(&self.x, y, stream)?.union(protected)),
            Prepared::Lasso(design, lam) => {
                if design.columns.is_empty() {
                    return Ok(protected.clone());
                }
                let ys = design.response(y);
                let lam = match lam {
                    Some(l) => *l,
                    None => cv_lambda(&design.xs, &ys, self.spec.folds, stream)?,
                };
                let b = lasso_cd(&design.xs, &ys, lam)?;
                let mut m = protected.clone();
                for j in design.support(&b) {
                    m.insert(j);
                }
                Ok(m)
            }
        }
    }
}

/// Backward elimination on `n ln(RSS/n) + penalty |M|`.
pub fn select_greedy_ic(x: &DMatrix<f64>, y: &DVector<f64>, spec: &SelectorSpec) -> Result<ModelId> {
    if !matches!(spec.rule, SelectorRule::GreedyIc(_)) {
        return Err(PosiError::Validation("not an information-criterion selector".into()));
    }
    spec.prepare(x, &RngStream::new(0))?.select(y, &mut RngStream::new(0))
}

/// LASSO selection after projecting out the protected columns.
pub fn select_lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &SelectorSpec,
    stream: &mut RngStream,
) -> Result<ModelId> {
    if !matches!(spec.rule, SelectorRule::LassoCv | SelectorRule::LassoFixed(_)) {
        return Err(PosiError::Validation("not a LASSO selector".into()));
    }
    let setup = stream.substream(u64::MAX);
    spec.prepare(x, &setup)?.select(y, stream)
}

/// `||Y - P_X Y||^2 / (n - d)` and `r = n - d`.
pub fn sigma_hat_full(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(f64, DofParam)> {
    if y.len() != x.nrows() {
        return Err(PosiError::Validation("Y and X disagree on n".into()));
    }
    let canon = canonicalize(x)?;
    let n = x.nrows();
    if n <= canon.d {
        return Err(PosiError::Validation(format!(
            "the residual variance estimator needs n > rank(X), got n = {n}, d = {}",
            canon.d
        )));
    }
    let fitted = &canon.q * (canon.q.transpose() * y);
    let s2 = (y - fitted).norm_squared() / (n - canon.d) as f64;
    if s2 == 0.0 {
        log::warn!("Y lies in the column space of X; the variance estimate is zero");
    }
    Ok((s2, DofParam::Finite((n - canon.d) as u64)))
}

/// `||Y - X[M] beta_hat_M||^2 / (n - |M|)`.
pub fn sigma_hat_pms(x: &DMatrix<f64>, y: &DVector<f64>, m: &ModelId) -> Result<f64> {
    let n = x.nrows();
    if n <= m.len() {
        return Err(PosiError::Domain(format!("n = {n} must exceed the model size {}", m.len())));
    }
    let resid = if m.is_empty() { y.clone() } else { y - select_columns(x, m) * restricted_ols(x, y, m)? };
    let s2 = resid.norm_squared() / (n - m.len()) as f64;
    if s2 == 0.0 {
        log::warn!("Y is fitted exactly by model {m}; the variance estimate is zero");
    }
    Ok(s2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut s = RngStream::new(seed);
        let x = DMatrix::from_fn(n, p, |_, _| s.standard_normal());
        let y = DVector::from_fn(n, |_, _| s.standard_normal());
        (x, y)
    }

    #[test]
    fn parses_selectors() {
        assert_eq!(SelectorSpec::parse("AIC", 4).unwrap().label(), "AIC");
        assert_eq!(SelectorSpec::parse("lasso-fixed:0.5", 4).unwrap().kind(), SelectorKind::LassoFixed);
        let f = SelectorSpec::parse("fixed:1,3", 4).unwrap();
        assert_eq!(f.label(), "FIXED{1,3}");
        assert!(SelectorSpec::parse("ridge", 4).is_err());
        assert!(SelectorSpec::parse("fixed:7", 4).is_err());
    }

    #[test]
    fn lasso_threshold_returns_protected() {
        let (x, y) = data(20, 4, 1);
        let prot = ModelId::from_indices([0]);
        let design = LassoDesign::new(&x, &prot).unwrap();
        let top = lambda_max(&design.xs, &design.response(&y));
        let spec = SelectorSpec::new(SelectorRule::LassoFixed(Some(top * 1.01))).with_protected(prot.clone());
        assert_eq!(select_lasso(&x, &y, &spec, &mut RngStream::new(1)).unwrap(), prot);
    }

    #[test]
    fn lasso_zero_lambda_selects_everything() {
        for seed in 0..5 {
            let (x, y) = data(20, 4, 10 + seed);
            let spec = SelectorSpec::new(SelectorRule::LassoFixed(Some(0.0)));
            assert_eq!(select_lasso(&x, &y, &spec, &mut RngStream::new(1)).unwrap(), ModelId::full(4));
        }
    }

    #[test]
    fn full_protection_is_full_model() {
        let (x, y) = data(20, 4, 2);
        for spec in [SelectorSpec::lasso_cv(), SelectorSpec::bic()] {
            let spec = spec.with_protected(ModelId::full(4));
            let got = spec.prepare(&x, &RngStream::new(0)).unwrap().select(&y, &mut RngStream::new(3)).unwrap();
            assert_eq!(got, ModelId::full(4));
        }
    }

    #[test]
    fn selections_are_seed_deterministic() {
        let (x, y) = data(30, 5, 4);
        let spec = SelectorSpec::lasso_cv().with_protected(ModelId::from_indices([0]));
        let a = select_lasso(&x, &y, &spec, &mut RngStream::new(7)).unwrap();
        let b = select_lasso(&x, &y, &spec, &mut RngStream::new(7)).unwrap();
        assert_eq!(a, b);
        assert!(a.contains(0));
    }

    #[test]
    fn sigma_full_for_a_constant_column() {
        let x = DMatrix::from_element(6, 1, 1.0);
        let y = DVector::from_vec(vec![1.0, 2.0, 4.0, 0.0, -1.0, 3.0]);
        let (s2, r) = sigma_hat_full(&x, &y).unwrap();
        let mean = y.mean();
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
        assert!((s2 - var).abs() < 1e-12);
        assert_eq!(r, DofParam::Finite(5));
        assert!(sigma_hat_full(&DMatrix::identity(3, 3), &y.rows(0, 3).into_owned()).is_err());
    }

    #[test]
    fn sigma_full_exact_fit_is_zero() {
        let (x, _) = data(10, 3, 5);
        let y = x.column(1) * 2.0;
        assert!(sigma_hat_full(&x, &y).unwrap().0 < 1e-20);
    }

    #[test]
    fn sigma_pms_cases() {
        let (x, y) = data(12, 3, 6);
        assert!((sigma_hat_pms(&x, &y, &ModelId::empty()).unwrap() - y.norm_squared() / 12.0).abs() < 1e-12);
        let full = sigma_hat_pms(&x, &y, &ModelId::full(3)).unwrap();
        assert!((full - sigma_hat_full(&x, &y).unwrap().0).abs() < 1e-10);
        assert!(sigma_hat_pms(&x, &y, &ModelId::full(3)).is_ok());
        let small = DMatrix::from_element(2, 2, 1.0);
        assert!(sigma_hat_pms(&small, &DVector::zeros(2), &ModelId::full(2)).is_err());
    }
}
