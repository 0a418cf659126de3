//! `K1` and `K3` from a shared sample of sphere points.

use std::sync::OnceLock;

use nalgebra::DVector;

use super::k2::{k2_with, K2SearchConfig};
use super::mc::{
    bootstrap_stderr, max_abs_projections, ordered_sum, slope_at, solve_increasing, DirectionSet, FSharp, SphereSample,
};
use super::{
    beta_tail_inverse, fsharp_quantile, k4, k5, k6, k_naive, union_bound_pair, ConstantEstimate, ConstantKind,
    McConfig, BOOTSTRAP_RESAMPLES, FLAG_DIMENSION_ONE, FLAG_M_STAR_ONE, FLAG_SINGLE_DIRECTION, FLAG_VIA_K1,
    FLAG_VIA_K4, FLAG_ZERO_QUERY, K_TOL,
};
use crate::design::{count_not_subset, Directions, ModelId, UniverseGeometry};
use crate::error::{PosiError, Result};
use crate::numerics::{beta_half_sf, bisect_boundary, DofParam, RngStream};

pub(crate) fn sphere_stream(seed: u64) -> RngStream {
    RngStream::new(seed).substream(1)
}

pub(crate) fn bootstrap_stream(seed: u64) -> RngStream {
    RngStream::new(seed).substream(2)
}

/// Computes constants for one design, universe and query point. All Monte
/// Carlo constants draw on the same sphere sample.
pub struct ConstantSolver<'a> {
    geom: &'a UniverseGeometry,
    x0: DVector<f64>,
    r: DofParam,
    alpha: f64,
    cfg: McConfig,
    dirs: Directions,
    sample: OnceLock<SphereSample>,
}

impl<'a> ConstantSolver<'a> {
    pub fn new(geom: &'a UniverseGeometry, x0: &DVector<f64>, r: DofParam, alpha: f64, cfg: McConfig) -> Result<Self> {
        crate::design::check_alpha(alpha)?;
        McConfig::new(cfg.samples, cfg.grid, cfg.seed, cfg.variant)?;
        let dirs = geom.directions(x0)?;
        Ok(ConstantSolver { geom, x0: x0.clone(), r, alpha, cfg, dirs, sample: OnceLock::new() })
    }

    pub fn geometry(&self) -> &UniverseGeometry {
        self.geom
    }

    pub fn config(&self) -> &McConfig {
        &self.cfg
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dof(&self) -> DofParam {
        self.r
    }

    fn d(&self) -> usize {
        self.geom.d()
    }

    pub(crate) fn sample(&self) -> &SphereSample {
        self.sample.get_or_init(|| SphereSample::generate(self.d(), self.cfg.samples, &sphere_stream(self.cfg.seed)))
    }

    /// `c(empty, M)`: the number of nonempty models.
    pub fn c_empty(&self) -> u128 {
        count_not_subset(&ModelId::empty(), self.geom.universe()) as u128
    }

    pub fn compute(
        &self,
        kind: ConstantKind,
        model: Option<&ModelId>,
        search: Option<&K2SearchConfig>,
    ) -> Result<ConstantEstimate> {
        let need_model = || model.ok_or_else(|| PosiError::Validation(format!("{kind} needs a model")));
        match kind {
            ConstantKind::Naive => self.naive(),
            ConstantKind::K1 => self.k1(),
            ConstantKind::K2 => {
                let default = K2SearchConfig::desk(self.cfg.seed);
                self.k2(need_model()?, search.unwrap_or(&default))
            }
            ConstantKind::K3 => self.k3(need_model()?),
            ConstantKind::K4 => self.k4(),
            ConstantKind::K5 => self.k5(),
            ConstantKind::K6 => self.k6(),
        }
    }

    pub fn naive(&self) -> Result<ConstantEstimate> {
        k_naive(self.r, self.alpha)
    }

    pub fn k4(&self) -> Result<ConstantEstimate> {
        k4(self.d(), self.r, self.alpha, self.c_empty(), self.cfg.grid, self.cfg.variant)
    }

    pub fn k5(&self) -> Result<ConstantEstimate> {
        k5(self.d(), self.r, self.alpha)
    }

    pub fn k6(&self) -> Result<ConstantEstimate> {
        k6(self.d(), self.r, self.alpha)
    }

    pub fn k2(&self, m: &ModelId, search: &K2SearchConfig) -> Result<ConstantEstimate> {
        k2_with(self.geom, &self.x0, m, self.r, self.alpha, search)
    }

    fn mc_estimate(&self, kind: ConstantKind) -> ConstantEstimate {
        ConstantEstimate {
            kind,
            value: 0.0,
            value_upper: None,
            stderr: None,
            samples: Some(self.cfg.samples),
            grid: None,
            seed: Some(self.cfg.seed),
            variant: None,
            model: None,
            flags: Vec::new(),
        }
    }

    pub fn k1(&self) -> Result<ConstantEstimate> {
        let dirs = DirectionSet::from_rows(self.d(), (0..self.dirs.len()).map(|k| self.dirs.row(k)));
        let mut est = self.mc_estimate(ConstantKind::K1);
        if dirs.is_empty() {
            est.stderr = Some(0.0);
            return Ok(est.flag(FLAG_ZERO_QUERY));
        }
        let c = max_abs_projections(self.sample(), &dirs);
        let hi = fsharp_quantile(self.d(), self.r, 1.0 - self.alpha)?;
        let (k, se) = solve_k1(&c, self.d(), self.r, self.alpha, hi, Some(&bootstrap_stream(self.cfg.seed)))?;
        est.value = k;
        est.stderr = se;
        Ok(est)
    }

    pub fn k3(&self, m: &ModelId) -> Result<ConstantEstimate> {
        let u = self.geom.universe();
        if !u.contains(m) {
            return Err(PosiError::Validation(format!("model {m} is not in the universe")));
        }
        let d = self.d();
        let (alpha, r, cfg) = (self.alpha, self.r, self.cfg);
        let mut est = self.mc_estimate(ConstantKind::K3);
        est.model = Some(m.clone());
        est.grid = Some(cfg.grid);
        if d == 1 {
            let v = fsharp_quantile(1, r, 1.0 - alpha)?;
            est.stderr = None;
            return Ok(est.with_pair(cfg.variant, v, v).flag(FLAG_DIMENSION_ONE));
        }
        if m.len() == self.geom.p() {
            let base = self.k1()?;
            est.value = base.value;
            est.stderr = base.stderr;
            est.variant = Some(cfg.variant);
            est.flags = base.flags;
            return Ok(est.flag(FLAG_VIA_K1));
        }
        if m.is_empty() {
            let base = self.k4()?;
            est.value = base.value;
            est.value_upper = base.value_upper;
            est.variant = base.variant;
            return Ok(est.flag(FLAG_VIA_K4));
        }

        let c_m = count_not_subset(m, u) as f64;
        let sub = (0..u.len()).filter(|&k| u.models()[k].is_subset_of(m) && self.dirs.norms[k] > 0.0);
        let dirs = DirectionSet::from_rows(d, sub.map(|k| self.dirs.row(k)));
        if dirs.len() <= 1 {
            // |s'V| for a single unit direction has the beta tail exactly,
            // so the equation collapses to the union bound with one more term
            let mult = c_m + dirs.len() as f64;
            let (lo, hi) = union_bound_pair(d, r, alpha, mult, cfg.grid)?;
            est.stderr = None;
            est.samples = None;
            est.seed = None;
            return Ok(est.with_pair(cfg.variant, lo, hi).flag(FLAG_SINGLE_DIRECTION));
        }

        let c = max_abs_projections(self.sample(), &dirs);
        let mut sorted = c.clone();
        sorted.sort_by(f64::total_cmp);
        let n = c.len() as f64;
        let tail = |t: f64| (sorted.len() - sorted.partition_point(|&ci| ci <= t)) as f64 / n;

        let mut failure = None;
        let m_j = bisect_boundary(
            |t| match beta_half_sf(d, t) {
                Ok(s) => tail(t) + c_m * s < 1.0,
                Err(e) => {
                    failure.get_or_insert(e);
                    true
                }
            },
            0.0,
            1.0,
            1e-13,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        let f = FSharp { d, r };
        let k_hi = fsharp_quantile(d, r, 1.0 - alpha)?;
        if m_j >= 1.0 {
            est.stderr = Some(0.0);
            return Ok(est.with_pair(cfg.variant, k_hi, k_hi).flag(FLAG_M_STAR_ONE));
        }

        let s_star = beta_half_sf(d, m_j)?;
        let jf = cfg.grid as f64;
        let grid: Vec<f64> =
            (1..cfg.grid).map(|j| beta_tail_inverse(d, s_star * j as f64 / jf, m_j)).collect::<Result<_>>()?;
        let tail_c: Vec<f64> = c.iter().copied().filter(|&ci| ci > m_j).collect();
        let b0 = 1.0 - tail_c.len() as f64 / n - c_m * s_star;
        let w = c_m * s_star / jf;
        let common = |k: f64| {
            ordered_sum(&tail_c, |ci| f.at_ratio(k, ci)) / n + w * grid.iter().map(|&mj| f.at_ratio(k, mj)).sum::<f64>()
        };
        let g_lower = |k: f64| f.at_ratio(k, m_j) * (b0 + w) + common(k);
        let g_upper = |k: f64| f.at_ratio(k, m_j) * b0 + w * f.cdf(k) + common(k);
        let lower = solve_increasing(g_lower, 1.0 - alpha, k_hi, K_TOL)?;
        let upper = solve_increasing(g_upper, 1.0 - alpha, k_hi, K_TOL)?;

        let (k_rep, slope) = match cfg.variant {
            super::Variant::Upper => (upper, slope_at(g_upper, upper)),
            _ => (lower, slope_at(g_lower, lower)),
        };
        let base = f.at_ratio(k_rep, m_j);
        let u_vals: Vec<f64> = c.iter().map(|&ci| if ci > m_j { f.at_ratio(k_rep, ci) - base } else { 0.0 }).collect();
        est.stderr = Some(bootstrap_stderr(&u_vals, slope, BOOTSTRAP_RESAMPLES, &bootstrap_stream(cfg.seed)));
        Ok(est.with_pair(cfg.variant, lower, upper))
    }
}

/// Solves `mean_i F(K / c_i) = 1 - alpha`; optionally bootstraps its error.
pub(crate) fn solve_k1(
    c: &[f64],
    d: usize,
    r: DofParam,
    alpha: f64,
    hi: f64,
    boot: Option<&RngStream>,
) -> Result<(f64, Option<f64>)> {
    let f = FSharp { d, r };
    let n = c.len() as f64;
    let g = |k: f64| ordered_sum(c, |ci| f.at_ratio(k, ci)) / n;
    let k = solve_increasing(g, 1.0 - alpha, hi, K_TOL)?;
    let se = boot.map(|stream| {
        let u: Vec<f64> = c.iter().map(|&ci| f.at_ratio(k, ci)).collect();
        bootstrap_stderr(&u, slope_at(g, k), BOOTSTRAP_RESAMPLES, stream)
    });
    Ok((k, se))
}

/// `K1(x0)`: the smallest `K` covering every model's direction at level `1 - alpha`.
pub fn k1(
    geom: &UniverseGeometry,
    x0: &DVector<f64>,
    r: DofParam,
    alpha: f64,
    cfg: McConfig,
) -> Result<ConstantEstimate> {
    ConstantSolver::new(geom, x0, r, alpha, cfg)?.k1()
}

/// `K3(x0[M], M)`; only the entries of `x0` indexed by `M` matter.
pub fn k3(
    geom: &UniverseGeometry,
    x0: &DVector<f64>,
    m: &ModelId,
    r: DofParam,
    alpha: f64,
    cfg: McConfig,
) -> Result<ConstantEstimate> {
    let mut x = DVector::zeros(x0.len());
    for j in m.indices() {
        if j < x0.len() {
            x[j] = x0[j];
        }
    }
    ConstantSolver::new(geom, &x, r, alpha, cfg)?.k3(m)
}
