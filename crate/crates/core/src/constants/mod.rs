//! The PoSI constants `K_naive` and `K1` through `K6`.

mod k2;
mod mc;
mod solver;

use serde::{Deserialize, Serialize};

use crate::design::ModelId;
use crate::error::{PosiError, Result};
use crate::numerics::{beta_half_sf, bisect_boundary, student_t_quantile, CdfHandle, DofParam};

pub use k2::{k2, K2SearchConfig};
pub use mc::{max_abs_projections, DirectionSet, SphereSample};
pub use solver::{k1, k3, ConstantSolver};

use mc::{solve_increasing, FSharp};

pub const DEFAULT_GRID: usize = 10_000;
pub const BOOTSTRAP_RESAMPLES: usize = 50;
pub const RULE_OF_THUMB_FACTOR: f64 = 0.866;

/// Absolute tolerance on `K` for every constant.
pub const K_TOL: f64 = 1e-9;

pub const FLAG_RULE_OF_THUMB: &str = "RULE_OF_THUMB";
pub const FLAG_STOCHASTIC_LOWER_BOUND: &str = "STOCHASTIC_LOWER_BOUND";
pub const FLAG_REGULARIZED_COVARIANCE: &str = "REGULARIZED_CANDIDATE_COVARIANCE";
pub const FLAG_SINGLE_DIRECTION: &str = "EXACT_SINGLE_DIRECTION";
pub const FLAG_DIMENSION_ONE: &str = "DIMENSION_ONE";
pub const FLAG_VIA_K1: &str = "DELEGATED_TO_K1";
pub const FLAG_VIA_K4: &str = "DELEGATED_TO_K4";
pub const FLAG_M_STAR_ONE: &str = "M_STAR_AT_ONE";
pub const FLAG_ZERO_QUERY: &str = "ZERO_QUERY_POINT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ConstantKind {
    Naive,
    K1,
    K2,
    K3,
    K4,
    K5,
    K6,
}

impl ConstantKind {
    pub const ALL: [ConstantKind; 7] = [
        ConstantKind::Naive,
        ConstantKind::K1,
        ConstantKind::K2,
        ConstantKind::K3,
        ConstantKind::K4,
        ConstantKind::K5,
        ConstantKind::K6,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ConstantKind::Naive => "NAIVE",
            ConstantKind::K1 => "K1",
            ConstantKind::K2 => "K2",
            ConstantKind::K3 => "K3",
            ConstantKind::K4 => "K4",
            ConstantKind::K5 => "K5",
            ConstantKind::K6 => "K6",
        }
    }

    /// Whether the constant depends on the selected model.
    pub fn is_model_dependent(&self) -> bool {
        matches!(self, ConstantKind::K2 | ConstantKind::K3)
    }
}

impl std::fmt::Display for ConstantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ConstantKind {
    type Err = PosiError;

    fn from_str(s: &str) -> Result<Self> {
        ConstantKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| PosiError::Parse(format!("unknown constant '{s}'")))
    }
}

/// Which step-function approximation of the continuous part is used.
/// `Lower` approximates the tail from below and gives the smaller `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Variant {
    Lower,
    Upper,
    Both,
}

impl std::str::FromStr for Variant {
    type Err = PosiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lower" => Ok(Variant::Lower),
            "upper" => Ok(Variant::Upper),
            "both" => Ok(Variant::Both),
            _ => Err(PosiError::Parse(format!("unknown variant '{s}'"))),
        }
    }
}

/// Monte Carlo settings: `samples` sphere points, `grid` step-function
/// cells, the seed and the integration variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    #[serde(rename = "I")]
    pub samples: usize,
    #[serde(rename = "J")]
    pub grid: usize,
    pub seed: u64,
    pub variant: Variant,
}

impl McConfig {
    pub fn new(samples: usize, grid: usize, seed: u64, variant: Variant) -> Result<Self> {
        if samples == 0 {
            return Err(PosiError::Validation("sample count I must be >= 1".into()));
        }
        if grid < 2 {
            return Err(PosiError::Validation("grid size J must be >= 2".into()));
        }
        Ok(McConfig { samples, grid, seed, variant })
    }

    /// `10^5` sphere points up to `p = 12`, `10^3` beyond.
    pub fn default_samples(p: usize) -> usize {
        if p <= 12 {
            100_000
        } else {
            1_000
        }
    }

    pub fn defaults(p: usize, seed: u64) -> Self {
        McConfig { samples: Self::default_samples(p), grid: DEFAULT_GRID, seed, variant: Variant::Upper }
    }
}

/// A computed constant. `value` is the lower solution when both variants
/// are requested, with the upper one in `value_upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub kind: ConstantKind,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(rename = "I")]
    pub samples: Option<usize>,
    #[serde(rename = "J")]
    pub grid: Option<usize>,
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelId>,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl ConstantEstimate {
    fn deterministic(kind: ConstantKind, value: f64) -> Self {
        ConstantEstimate {
            kind,
            value,
            value_upper: None,
            stderr: None,
            samples: None,
            grid: None,
            seed: None,
            variant: None,
            model: None,
            flags: Vec::new(),
        }
    }

    /// The larger of the reported values; this is what intervals use.
    pub fn conservative(&self) -> f64 {
        self.value_upper.map_or(self.value, |u| u.max(self.value))
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    fn flag(mut self, flag: &str) -> Self {
        if !self.has_flag(flag) {
            self.flags.push(flag.to_string());
        }
        self
    }

    fn with_pair(mut self, variant: Variant, lower: f64, upper: f64) -> Self {
        self.variant = Some(variant);
        match variant {
            Variant::Lower => self.value = lower,
            Variant::Upper => self.value = upper,
            Variant::Both => {
                self.value = lower;
                self.value_upper = Some(upper);
            }
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("estimate serializes")
    }
}

fn check_inputs(d: usize, alpha: f64) -> Result<()> {
    if d == 0 {
        return Err(PosiError::Domain("dimension d must be >= 1".into()));
    }
    crate::design::check_alpha(alpha)
}

pub(crate) fn fsharp_quantile(d: usize, r: DofParam, q: f64) -> Result<f64> {
    CdfHandle::FSharp { d, r }.quantile(q, 1e-12)
}

/// `q_{r, 1 - alpha/2}`, the unadjusted t (or normal) quantile.
pub fn k_naive(r: DofParam, alpha: f64) -> Result<ConstantEstimate> {
    crate::design::check_alpha(alpha)?;
    let v = student_t_quantile(r, 1.0 - alpha / 2.0)?;
    Ok(ConstantEstimate::deterministic(ConstantKind::Naive, v))
}

/// The Scheffe constant: the `(1 - alpha)`-quantile of `G`.
pub fn k5(d: usize, r: DofParam, alpha: f64) -> Result<ConstantEstimate> {
    check_inputs(d, alpha)?;
    let v = fsharp_quantile(d, r, 1.0 - alpha)?;
    Ok(ConstantEstimate::deterministic(ConstantKind::K5, v))
}

pub fn k6(d: usize, r: DofParam, alpha: f64) -> Result<ConstantEstimate> {
    let base = k5(d, r, alpha)?;
    let mut est = ConstantEstimate::deterministic(ConstantKind::K6, RULE_OF_THUMB_FACTOR * base.value);
    est.flags.push(FLAG_RULE_OF_THUMB.to_string());
    Ok(est)
}

/// The union-bound constant over `c_empty` nonempty models.
pub fn k4(d: usize, r: DofParam, alpha: f64, c_empty: u128, grid: usize, variant: Variant) -> Result<ConstantEstimate> {
    check_inputs(d, alpha)?;
    if grid < 2 {
        return Err(PosiError::Validation("grid size J must be >= 2".into()));
    }
    if c_empty == 0 {
        return Err(PosiError::Validation("the universe has no nonempty model".into()));
    }
    let mut est = ConstantEstimate::deterministic(ConstantKind::K4, 0.0);
    est.grid = Some(grid);
    if d == 1 {
        let v = fsharp_quantile(1, r, 1.0 - alpha)?;
        return Ok(est.with_pair(variant, v, v).flag(FLAG_DIMENSION_ONE));
    }
    let (lo, hi) = union_bound_pair(d, r, alpha, c_empty as f64, grid)?;
    Ok(est.with_pair(variant, lo, hi))
}

/// Lower and upper solutions of the union-bound equation with multiplicity
/// `mult`, for `d > 1`.
pub(crate) fn union_bound_pair(d: usize, r: DofParam, alpha: f64, mult: f64, grid: usize) -> Result<(f64, f64)> {
    let m = union_bound_grid(d, mult, grid)?;
    let f = FSharp { d, r };
    let jf = grid as f64;
    let hi = fsharp_quantile(d, r, 1.0 - alpha)?;
    // m[0] = 1 and m[j] solves mult * (1 - F_Beta(m_j^2)) = j / J; a zero
    // m_j carries no tail mass and counts as F(inf) = 1
    let lower =
        solve_increasing(|k| m[1..].iter().map(|&mj| f.at_ratio(k, mj)).sum::<f64>() / jf, 1.0 - alpha, hi, K_TOL)?;
    let upper =
        solve_increasing(|k| m[..grid].iter().map(|&mj| f.at_ratio(k, mj)).sum::<f64>() / jf, 1.0 - alpha, hi, K_TOL)?;
    Ok((lower, upper))
}

/// `m_0 = 1, m_1, ..., m_J` with `mult * (1 - F_Beta(m_j^2)) = j/J`, or
/// zero where no positive solution exists.
fn union_bound_grid(d: usize, mult: f64, grid: usize) -> Result<Vec<f64>> {
    let mut m = Vec::with_capacity(grid + 1);
    m.push(1.0);
    for j in 1..=grid {
        let target = j as f64 / (grid as f64 * mult);
        m.push(beta_tail_inverse(d, target, 0.0)?);
    }
    Ok(m)
}

/// Smallest `m` in `[floor, 1]` with `1 - F_Beta(m^2) <= target`.
pub(crate) fn beta_tail_inverse(d: usize, target: f64, floor: f64) -> Result<f64> {
    if target >= 1.0 {
        return Ok(floor);
    }
    if !(target > 0.0) {
        return Err(PosiError::Precision(format!("beta tail target {target:e} underflows")));
    }
    let mut failure = None;
    let m = bisect_boundary(
        |m| match beta_half_sf(d, m) {
            Ok(s) => s <= target,
            Err(e) => {
                failure.get_or_insert(e);
                true
            }
        },
        floor,
        1.0,
        1e-14,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    if m > 0.0 && m < 1.0 {
        let s = beta_half_sf(d, m)?;
        let below = beta_half_sf(d, (m - 1e-14).max(0.0))?;
        // the root is bracketed in value, so a large relative gap means the
        // tail function lost its accuracy at this level
        if s == 0.0 || s > target || (below < target && (target - s) / target > 1e-6) {
            return Err(PosiError::Precision(format!(
                "extreme beta quantile at tail level {target:e} (d = {d}) is unreliable"
            )));
        }
    }
    Ok(m)
}


#[cfg(test)]
mod checks;
