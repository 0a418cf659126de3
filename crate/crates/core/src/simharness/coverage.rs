//! Coverage of post-selection intervals and the three-step search for
//! their minimum over `beta`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{ConstantEstimate, ConstantKind, ConstantSolver, K2SearchConfig, McConfig};
use crate::design::{
    canonicalize, restricted_ols, select_columns, select_entries, ModelId, UniverseGeometry, UniverseSpec,
};
use crate::error::{PosiError, Result};
use crate::inference::TargetKind;
use crate::numerics::{DofParam, RngStream};
use crate::selectors::{PreparedSelector, SelectorSpec};

/// Where the interval's `sigma_hat` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SigmaSource {
    /// Residual variance of the full model, `r = n - d`.
    Full,
    /// Residual variance of the selected model; constants use `r = inf`.
    Pms,
    /// A known value; constants use `r = inf`.
    Fixed(f64),
}

impl std::str::FromStr for SigmaSource {
    type Err = PosiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(SigmaSource::Full),
            "pms" => Ok(SigmaSource::Pms),
            other => match other.strip_prefix("fixed:") {
                Some(v) => {
                    let v: f64 = v.parse().map_err(|_| PosiError::Parse(format!("bad sigma value '{v}'")))?;
                    if !(v > 0.0) {
                        return Err(PosiError::Validation("a fixed sigma must be positive".into()));
                    }
                    Ok(SigmaSource::Fixed(v))
                }
                None => Err(PosiError::Parse(format!("unknown sigma source '{s}'"))),
            },
        }
    }
}

/// A fixed design problem for coverage experiments.
#[derive(Debug, Clone)]
pub struct CoverageSetup {
    pub x: DMatrix<f64>,
    pub x0: DVector<f64>,
    /// Second moments for the design-independent target.
    pub sigma_star: Option<DMatrix<f64>>,
    pub universe: UniverseSpec,
    pub alpha: f64,
    pub sigma_source: SigmaSource,
    pub mc: McConfig,
    pub k2: Option<K2SearchConfig>,
}

/// Per-model quantities that do not depend on `Y`.
#[derive(Debug, Clone)]
struct ModelInfo {
    basis: DMatrix<f64>,
    s: DVector<f64>,
    s_norm: f64,
    /// `t_n' beta = x0'[M] beta_M^(n)` when `mu = X beta`.
    t_n: DVector<f64>,
    /// `t_star' beta = x0'[M] beta_M^(star)`.
    t_star: Option<DVector<f64>>,
}

#[derive(Debug, Clone, Copy)]
struct RepOutcome {
    pos: usize,
    center: f64,
    sigma_hat: f64,
}

/// Hit counts per (constant, target) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCounts {
    pub cells: Vec<(ConstantKind, TargetKind)>,
    pub hits: Vec<u64>,
    pub reps: u64,
}

impl CellCounts {
    pub fn coverage(&self, cell: usize) -> f64 {
        self.hits[cell] as f64 / self.reps as f64
    }

    pub fn stderr(&self, cell: usize) -> f64 {
        binomial_stderr(self.coverage(cell), self.reps)
    }
}

pub fn binomial_stderr(c: f64, reps: u64) -> f64 {
    (c * (1.0 - c) / reps as f64).sqrt()
}

/// Evaluates intervals for one selector on one design, caching everything
/// that does not depend on `Y`.
pub struct CoverageEngine {
    x: DMatrix<f64>,
    x0: DVector<f64>,
    q: DMatrix<f64>,
    d: usize,
    geom: UniverseGeometry,
    positions: HashMap<ModelId, usize>,
    info: Vec<OnceLock<ModelInfo>>,
    sigma_star: Option<DMatrix<f64>>,
    alpha: f64,
    r: DofParam,
    sigma_source: SigmaSource,
    mc: McConfig,
    k2: Option<K2SearchConfig>,
    cells: Vec<(ConstantKind, TargetKind)>,
    global: BTreeMap<ConstantKind, ConstantEstimate>,
    per_model: Mutex<BTreeMap<(ConstantKind, usize), ConstantEstimate>>,
    selector: PreparedSelector,
}

impl CoverageEngine {
    pub fn new(
        setup: &CoverageSetup,
        selector: &SelectorSpec,
        kinds: &[ConstantKind],
        targets: &[TargetKind],
        setup_stream: &RngStream,
    ) -> Result<Self> {
        let canon = canonicalize(&setup.x)?;
        let (n, p) = setup.x.shape();
        if setup.x0.len() != p {
            return Err(PosiError::Validation(format!("x0 has length {} but p = {p}", setup.x0.len())));
        }
        if kinds.is_empty() || targets.is_empty() {
            return Err(PosiError::Validation("need at least one constant and one target".into()));
        }
        if targets.contains(&TargetKind::DesignIndependent) {
            let s = setup
                .sigma_star
                .as_ref()
                .ok_or_else(|| PosiError::Validation("the design-independent target needs Sigma".into()))?;
            crate::inference::check_second_moments(s)?;
            if s.nrows() != p {
                return Err(PosiError::Validation("Sigma and X disagree on p".into()));
            }
        }
        let r = match setup.sigma_source {
            SigmaSource::Full => {
                if n <= canon.d {
                    return Err(PosiError::Validation(format!(
                        "the full-model variance estimate needs n > rank(X) (n = {n}, d = {})",
                        canon.d
                    )));
                }
                DofParam::Finite((n - canon.d) as u64)
            }
            SigmaSource::Pms | SigmaSource::Fixed(_) => DofParam::Infinite,
        };
        let universe = setup.universe.build(&setup.x)?;
        let positions = universe.models().iter().cloned().enumerate().map(|(k, m)| (m, k)).collect();
        let info = (0..universe.len()).map(|_| OnceLock::new()).collect();
        let q = canon.q.clone();
        let d = canon.d;
        let geom = UniverseGeometry::new(canon, universe)?;
        let cells = kinds.iter().flat_map(|&k| targets.iter().map(move |&t| (k, t))).collect();
        let mut engine = CoverageEngine {
            x: setup.x.clone(),
            x0: setup.x0.clone(),
            q,
            d,
            geom,
            positions,
            info,
            sigma_star: setup.sigma_star.clone(),
            alpha: setup.alpha,
            r,
            sigma_source: setup.sigma_source,
            mc: setup.mc,
            k2: setup.k2,
            cells,
            global: BTreeMap::new(),
            per_model: Mutex::new(BTreeMap::new()),
            selector: selector.prepare(&setup.x, setup_stream)?,
        };
        engine.compute_global(kinds)?;
        Ok(engine)
    }

    fn solver(&self) -> Result<ConstantSolver<'_>> {
        ConstantSolver::new(&self.geom, &self.x0, self.r, self.alpha, self.mc)
    }

    fn compute_global(&mut self, kinds: &[ConstantKind]) -> Result<()> {
        let solver = self.solver()?;
        let mut global = BTreeMap::new();
        for &k in kinds {
            if !k.is_model_dependent() {
                global.insert(k, solver.compute(k, None, None)?);
            }
        }
        self.global = global;
        Ok(())
    }

    pub fn cells(&self) -> &[(ConstantKind, TargetKind)] {
        &self.cells
    }

    pub fn selector(&self) -> &PreparedSelector {
        &self.selector
    }

    /// Every constant computed so far, model-independent ones first.
    pub fn constants(&self) -> Vec<ConstantEstimate> {
        let mut v: Vec<_> = self.global.values().cloned().collect();
        v.extend(self.per_model.lock().expect("cache lock").values().cloned());
        v
    }

    fn model_info(&self, pos: usize) -> Result<&ModelInfo> {
        if let Some(info) = self.info[pos].get() {
            return Ok(info);
        }
        let info = self.build_info(&self.geom.universe().models()[pos])?;
        Ok(self.info[pos].get_or_init(|| info))
    }

    fn build_info(&self, m: &ModelId) -> Result<ModelInfo> {
        let (n, p) = self.x.shape();
        if m.is_empty() {
            return Ok(ModelInfo {
                basis: DMatrix::zeros(n, 0),
                s: DVector::zeros(n),
                s_norm: 0.0,
                t_n: DVector::zeros(p),
                t_star: self.sigma_star.as_ref().map(|_| DVector::zeros(p)),
            });
        }
        let qr = select_columns(&self.x, m).qr();
        let r = qr.r();
        let basis = qr.q();
        let w = r
            .transpose()
            .solve_lower_triangular(&select_entries(&self.x0, m))
            .ok_or_else(|| PosiError::Singular(format!("model {m} is singular")))?;
        let s = &basis * w;
        let t_n = self.x.transpose() * &s;
        let t_star = match &self.sigma_star {
            None => None,
            Some(sig) => {
                let inside = m.indices();
                let outside = m.complement(p).indices();
                let x0m = select_entries(&self.x0, m);
                let mut t = DVector::zeros(p);
                for (k, &j) in inside.iter().enumerate() {
                    t[j] = x0m[k];
                }
                if !outside.is_empty() {
                    let s_mm = sig.select_rows(&inside).select_columns(&inside);
                    let v = s_mm
                        .cholesky()
                        .ok_or_else(|| PosiError::Singular(format!("Sigma[M,M] is singular for M = {m}")))?
                        .solve(&x0m);
                    let s_om = sig.select_rows(&outside).select_columns(&inside);
                    let tail = s_om * v;
                    for (k, &j) in outside.iter().enumerate() {
                        t[j] = tail[k];
                    }
                }
                Some(t)
            }
        };
        Ok(ModelInfo { basis, s_norm: s.norm(), s, t_n, t_star })
    }

    fn ensure_model_constants(&self, positions: &BTreeSet<usize>) -> Result<()> {
        let kinds: Vec<ConstantKind> = self
            .cells
            .iter()
            .map(|c| c.0)
            .filter(|k| k.is_model_dependent())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if kinds.is_empty() {
            return Ok(());
        }
        let missing: Vec<(ConstantKind, usize)> = {
            let cache = self.per_model.lock().expect("cache lock");
            kinds
                .iter()
                .flat_map(|&k| positions.iter().map(move |&pos| (k, pos)))
                .filter(|key| !cache.contains_key(key))
                .collect()
        };
        if missing.is_empty() {
            return Ok(());
        }
        let solver = self.solver()?;
        let default_k2 = K2SearchConfig::desk(self.mc.seed);
        for (k, pos) in missing {
            let m = &self.geom.universe().models()[pos];
            let v = solver.compute(k, Some(m), Some(self.k2.as_ref().unwrap_or(&default_k2)))?;
            self.per_model.lock().expect("cache lock").insert((k, pos), v);
        }
        Ok(())
    }

    fn replicate(&self, mu: &DVector<f64>, sigma: f64, stream: RngStream) -> Result<RepOutcome> {
        let n = self.x.nrows();
        let mut s = stream;
        let y = DVector::from_fn(n, |i, _| mu[i] + sigma * s.standard_normal());
        let mut sel_stream = s.substream(0);
        let m = self.selector.select(&y, &mut sel_stream)?;
        let pos = *self
            .positions
            .get(&m)
            .ok_or_else(|| PosiError::Validation(format!("selected model {m} is not in the universe")))?;
        let info = self.model_info(pos)?;
        let sigma_hat = match self.sigma_source {
            SigmaSource::Full => {
                let fitted = &self.q * (self.q.transpose() * &y);
                ((&y - fitted).norm_squared() / (n - self.d) as f64).sqrt()
            }
            SigmaSource::Pms => {
                if n <= m.len() {
                    return Err(PosiError::Domain("selected model leaves no residual degrees of freedom".into()));
                }
                let rss = if m.is_empty() {
                    y.norm_squared()
                } else {
                    (&y - &info.basis * (info.basis.transpose() * &y)).norm_squared()
                };
                (rss / (n - m.len()) as f64).sqrt()
            }
            SigmaSource::Fixed(v) => v,
        };
        Ok(RepOutcome { pos, center: info.s.dot(&y), sigma_hat })
    }

    /// Replications `0..reps` at `(beta, sigma)`; replication `i` draws from
    /// `stream.substream(i)`.
    pub fn evaluate(&self, beta: &DVector<f64>, sigma: f64, reps: usize, stream: &RngStream) -> Result<CellCounts> {
        if beta.len() != self.x.ncols() {
            return Err(PosiError::Validation("beta has the wrong length".into()));
        }
        if !(sigma > 0.0) {
            return Err(PosiError::Validation("sigma must be positive".into()));
        }
        let mu = &self.x * beta;
        let outcomes: Vec<RepOutcome> = (0..reps)
            .into_par_iter()
            .map(|i| self.replicate(&mu, sigma, stream.substream(i as u64)))
            .collect::<Result<_>>()?;
        let used: BTreeSet<usize> = outcomes.iter().map(|o| o.pos).collect();
        self.ensure_model_constants(&used)?;
        for &pos in &used {
            self.model_info(pos)?;
        }
        let per_model = self.per_model.lock().expect("cache lock");
        let constant = |kind: ConstantKind, pos: usize| match self.global.get(&kind) {
            Some(e) => e.conservative(),
            None => per_model[&(kind, pos)].conservative(),
        };
        let mut hits = vec![0u64; self.cells.len()];
        for o in &outcomes {
            let info = self.model_info(o.pos)?;
            for (c, &(kind, target)) in self.cells.iter().enumerate() {
                let t = match target {
                    TargetKind::DesignDependent => info.t_n.dot(beta),
                    TargetKind::DesignIndependent => info.t_star.as_ref().expect("checked at construction").dot(beta),
                };
                let hw = constant(kind, o.pos) * info.s_norm * o.sigma_hat;
                if (t - o.center).abs() <= hw {
                    hits[c] += 1;
                }
            }
        }
        Ok(CellCounts { cells: self.cells.clone(), hits, reps: reps as u64 })
    }
}

/// Coverage of one (constant, target) pair at one `(beta, sigma)`.
#[allow(clippy::too_many_arguments)]
pub fn coverage_at(
    setup: &CoverageSetup,
    selector: &SelectorSpec,
    kind: ConstantKind,
    target: TargetKind,
    beta: &DVector<f64>,
    sigma: f64,
    reps: usize,
    stream: &RngStream,
) -> Result<(f64, f64)> {
    let engine = CoverageEngine::new(setup, selector, &[kind], &[target], &stream.substream(u64::MAX))?;
    let counts = engine.evaluate(beta, sigma, reps, stream)?;
    Ok((counts.coverage(0), counts.stderr(0)))
}

/// Budgets of the three-step search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSearchConfig {
    pub m1: usize,
    pub m2: usize,
    pub i1: usize,
    pub i2: usize,
    pub i3: usize,
    pub seed: u64,
    pub kinds: Vec<ConstantKind>,
    pub targets: Vec<TargetKind>,
}

impl CoverageSearchConfig {
    pub fn desk(seed: u64) -> Self {
        CoverageSearchConfig {
            m1: 200,
            m2: 20,
            i1: 200,
            i2: 2_000,
            i3: 20_000,
            seed,
            kinds: vec![ConstantKind::Naive, ConstantKind::K1, ConstantKind::K3, ConstantKind::K4],
            targets: vec![TargetKind::DesignDependent, TargetKind::DesignIndependent],
        }
    }

    pub fn paper(seed: u64) -> Self {
        CoverageSearchConfig { m1: 1_000, m2: 100, i1: 1_000, i2: 10_000, i3: 100_000, ..Self::desk(seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m1 == 0 || self.m2 == 0 || self.i1 == 0 {
            return Err(PosiError::Validation("search budgets must be positive".into()));
        }
        if self.m2 > self.m1 {
            return Err(PosiError::Validation("m2 must not exceed m1".into()));
        }
        if !(self.i1 <= self.i2 && self.i2 <= self.i3) {
            return Err(PosiError::Validation("replication counts must satisfy I1 <= I2 <= I3".into()));
        }
        if self.kinds.is_empty() || self.targets.is_empty() {
            return Err(PosiError::Validation("need at least one constant and one target".into()));
        }
        Ok(())
    }
}

/// The minimal-coverage estimate of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub selector: String,
    pub constant: ConstantKind,
    pub target: TargetKind,
    pub coverage: f64,
    pub stderr: f64,
    pub replications: u64,
    /// Index of the minimizing `beta` among the sampled candidates.
    pub candidate: usize,
    pub beta: Vec<f64>,
}

/// Streams: candidate `c` is drawn from `beta_stream(seed).substream(c)` and
/// its replications from `rep_stream(seed).substream(c)`.
pub fn beta_stream(seed: u64) -> RngStream {
    RngStream::new(seed).substream(10)
}

pub fn rep_stream(seed: u64) -> RngStream {
    RngStream::new(seed).substream(11)
}

pub fn setup_stream(seed: u64) -> RngStream {
    RngStream::new(seed).substream(12)
}

/// `b = (X'X)^+ X'Z` for standard normal `Z`, so that `Xb` is a standard
/// Gaussian vector in the column space of `X`.
pub fn sample_beta(x: &DMatrix<f64>, stream: &RngStream) -> Result<DVector<f64>> {
    let mut s = stream.clone();
    let z = DVector::from_fn(x.nrows(), |_, _| s.standard_normal());
    restricted_ols(x, &z, &ModelId::full(x.ncols()))
}

/// Result of a search; `partial` is set when it was interrupted.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub cells: Vec<CoverageCell>,
    pub constants: Vec<ConstantEstimate>,
    pub partial: bool,
}

/// Every cell at a single `beta` with `sigma = 1`, reported as candidate 0
/// and drawn from the same streams as the search's candidate 0.
pub fn coverage_point(
    setup: &CoverageSetup,
    selector: &SelectorSpec,
    kinds: &[ConstantKind],
    targets: &[TargetKind],
    beta: &DVector<f64>,
    reps: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    if reps == 0 {
        return Err(PosiError::Validation("need at least one replication".into()));
    }
    let engine = CoverageEngine::new(setup, selector, kinds, targets, &setup_stream(seed))?;
    let counts = engine.evaluate(beta, 1.0, reps, &rep_stream(seed).substream(0))?;
    let cells = counts
        .cells
        .iter()
        .enumerate()
        .map(|(k, &(constant, target))| CoverageCell {
            selector: selector.label(),
            constant,
            target,
            coverage: counts.coverage(k),
            stderr: counts.stderr(k),
            replications: counts.reps,
            candidate: 0,
            beta: beta.iter().copied().collect(),
        })
        .collect();
    Ok(SearchOutcome { cells, constants: engine.constants(), partial: false })
}

/// Three steps with `sigma = 1`: every candidate at `I1`; for each cell the
/// `m2` lowest at `I2`, keeping that cell's minimizer; every cell at every
/// minimizer at `I3`, reporting each cell's minimum.
pub fn minimal_coverage_search(
    config: &CoverageSearchConfig,
    setup: &CoverageSetup,
    selector: &SelectorSpec,
    cancel: Option<&AtomicBool>,
) -> Result<SearchOutcome> {
    config.validate()?;
    let engine = CoverageEngine::new(setup, selector, &config.kinds, &config.targets, &setup_stream(config.seed))?;
    let label = selector.label();
    let cells = engine.cells().to_vec();
    let stopped = || cancel.is_some_and(|c| c.load(Ordering::SeqCst));
    let betas: Vec<DVector<f64>> = (0..config.m1)
        .map(|c| sample_beta(&setup.x, &beta_stream(config.seed).substream(c as u64)))
        .collect::<Result<_>>()?;
    let reps = rep_stream(config.seed);
    let eval = |c: usize, n: usize| engine.evaluate(&betas[c], 1.0, n, &reps.substream(c as u64));

    let report = |best: &[(usize, CellCounts)]| -> Vec<CoverageCell> {
        cells
            .iter()
            .enumerate()
            .map(|(k, &(constant, target))| {
                let (cand, counts) = &best[k];
                CoverageCell {
                    selector: label.clone(),
                    constant,
                    target,
                    coverage: counts.coverage(k),
                    stderr: counts.stderr(k),
                    replications: counts.reps,
                    candidate: *cand,
                    beta: betas[*cand].iter().copied().collect(),
                }
            })
            .collect()
    };
    let argmin = |results: &[(usize, CellCounts)], k: usize| -> usize {
        let mut best = 0;
        for i in 1..results.len() {
            if results[i].1.hits[k] < results[best].1.hits[k] {
                best = i;
            }
        }
        best
    };
    let per_cell_best = |results: &[(usize, CellCounts)]| -> Vec<(usize, CellCounts)> {
        (0..cells.len()).map(|k| results[argmin(results, k)].clone()).collect()
    };

    let mut first = Vec::with_capacity(config.m1);
    for c in 0..config.m1 {
        if stopped() {
            break;
        }
        first.push((c, eval(c, config.i1)?));
    }
    if first.len() < config.m1 {
        if first.is_empty() {
            return Ok(SearchOutcome { cells: Vec::new(), constants: engine.constants(), partial: true });
        }
        return Ok(SearchOutcome {
            cells: report(&per_cell_best(&first)),
            constants: engine.constants(),
            partial: true,
        });
    }

    // per-cell pools of the m2 lowest first-step estimates, ties by index
    let pools: Vec<Vec<usize>> = (0..cells.len())
        .map(|k| {
            let mut order: Vec<usize> = (0..config.m1).collect();
            order.sort_by_key(|&c| (first[c].1.hits[k], c));
            order.truncate(config.m2);
            order
        })
        .collect();
    let union: BTreeSet<usize> = pools.iter().flatten().copied().collect();
    let mut second: HashMap<usize, CellCounts> = HashMap::new();
    for &c in &union {
        if stopped() {
            return Ok(SearchOutcome {
                cells: report(&per_cell_best(&first)),
                constants: engine.constants(),
                partial: true,
            });
        }
        second.insert(c, eval(c, config.i2)?);
    }
    let winners: Vec<usize> = (0..cells.len())
        .map(|k| {
            let pool = &pools[k];
            let mut best = pool[0];
            for &c in &pool[1..] {
                let (a, b) = (second[&c].hits[k], second[&best].hits[k]);
                if a < b || (a == b && c < best) {
                    best = c;
                }
            }
            best
        })
        .collect();

    let finalists: BTreeSet<usize> = winners.iter().copied().collect();
    let mut third = Vec::new();
    for &c in &finalists {
        if stopped() {
            let fallback: Vec<(usize, CellCounts)> = winners.iter().map(|&c| (c, second[&c].clone())).collect();
            return Ok(SearchOutcome { cells: report(&fallback), constants: engine.constants(), partial: true });
        }
        third.push((c, eval(c, config.i3)?));
    }
    Ok(SearchOutcome { cells: report(&per_cell_best(&third)), constants: engine.constants(), partial: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::Variant;

    fn design(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut s = RngStream::new(seed);
        let x = DMatrix::from_fn(n, p, |_, _| s.standard_normal());
        let x0 = DVector::from_fn(p, |_, _| s.standard_normal());
        (x, x0)
    }

    fn setup(n: usize, p: usize, sigma_source: SigmaSource) -> CoverageSetup {
        let (x, x0) = design(n, p, 3);
        let sigma_star = Some(x.transpose() * &x / n as f64);
        CoverageSetup {
            x,
            x0,
            sigma_star,
            universe: UniverseSpec::All,
            alpha: 0.05,
            sigma_source,
            mc: McConfig::new(4_000, 2_000, 9, Variant::Upper).unwrap(),
            k2: None,
        }
    }

    #[test]
    fn fixed_full_model_naive_is_exact() {
        let s = setup(20, 3, SigmaSource::Fixed(1.0));
        let sel = SelectorSpec::fixed(ModelId::full(3));
        let beta = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let reps = 4_000;
        let (c, se) = coverage_at(
            &s,
            &sel,
            ConstantKind::Naive,
            TargetKind::DesignDependent,
            &beta,
            1.0,
            reps,
            &RngStream::new(1),
        )
        .unwrap();
        assert!((c - 0.95).abs() < 3.0 * binomial_stderr(0.95, reps as u64), "{c}");
        assert!((se - binomial_stderr(c, reps as u64)).abs() < 1e-15);
    }

    #[test]
    fn fixed_submodel_with_t_quantile_is_exact() {
        // sigma_hat from the full model is independent of the fit on a submodel
        let s = setup(15, 3, SigmaSource::Full);
        let m = ModelId::from_indices([0, 2]);
        let sel = SelectorSpec::fixed(m);
        let beta = DVector::from_vec(vec![0.3, 2.0, -1.0]);
        let (c, _) = coverage_at(
            &s,
            &sel,
            ConstantKind::Naive,
            TargetKind::DesignDependent,
            &beta,
            2.0,
            4_000,
            &RngStream::new(2),
        )
        .unwrap();
        assert!((c - 0.95).abs() < 3.0 * binomial_stderr(0.95, 4_000), "{c}");
    }

    #[test]
    fn empty_model_always_covers() {
        let s = setup(12, 3, SigmaSource::Full);
        let sel = SelectorSpec::fixed(ModelId::empty());
        let beta = DVector::from_vec(vec![5.0, 5.0, 5.0]);
        let (c, se) =
            coverage_at(&s, &sel, ConstantKind::K1, TargetKind::DesignIndependent, &beta, 1.0, 200, &RngStream::new(4))
                .unwrap();
        assert_eq!((c, se), (1.0, 0.0));
    }

    #[test]
    fn wider_constant_covers_more_on_shared_replications() {
        let s = setup(20, 4, SigmaSource::Full);
        let kinds = [ConstantKind::Naive, ConstantKind::K1, ConstantKind::K4, ConstantKind::K5];
        let engine =
            CoverageEngine::new(&s, &SelectorSpec::aic(), &kinds, &[TargetKind::DesignDependent], &setup_stream(1))
                .unwrap();
        let beta = DVector::from_vec(vec![0.4, 0.2, 0.0, -0.3]);
        let counts = engine.evaluate(&beta, 1.0, 1_000, &RngStream::new(8)).unwrap();
        for w in counts.hits.windows(2) {
            assert!(w[0] <= w[1], "{:?}", counts.hits);
        }
    }

    #[test]
    fn targets_agree_when_sigma_matches_the_gram() {
        let s = setup(20, 4, SigmaSource::Full);
        let engine = CoverageEngine::new(
            &s,
            &SelectorSpec::bic(),
            &[ConstantKind::K3],
            &[TargetKind::DesignDependent, TargetKind::DesignIndependent],
            &setup_stream(1),
        )
        .unwrap();
        let beta = DVector::from_vec(vec![1.0, 0.0, 0.5, 0.0]);
        let counts = engine.evaluate(&beta, 1.0, 300, &RngStream::new(8)).unwrap();
        assert_eq!(counts.hits[0], counts.hits[1]);
    }

    #[test]
    fn replications_do_not_depend_on_thread_count() {
        let s = setup(20, 4, SigmaSource::Pms);
        let engine = CoverageEngine::new(
            &s,
            &SelectorSpec::lasso_cv(),
            &[ConstantKind::K1, ConstantKind::K3],
            &[TargetKind::DesignDependent],
            &setup_stream(1),
        )
        .unwrap();
        let beta = DVector::from_vec(vec![0.5, 0.0, 0.2, 0.0]);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| engine.evaluate(&beta, 1.0, 150, &RngStream::new(3)).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn sampled_beta_projects_a_gaussian_onto_the_column_space() {
        let (x, _) = design(10, 3, 6);
        let stream = RngStream::new(2);
        let b = sample_beta(&x, &stream).unwrap();
        let mut s = stream.clone();
        let z = DVector::from_fn(10, |_, _| s.standard_normal());
        let q = x.clone().qr().q();
        let proj = &q * (q.transpose() * z);
        assert!((&x * b - proj).amax() < 1e-10);
    }

    #[test]
    fn degenerate_search_equals_coverage_at() {
        let s = setup(20, 4, SigmaSource::Full);
        let cfg = CoverageSearchConfig {
            m1: 1,
            m2: 1,
            i1: 300,
            i2: 300,
            i3: 300,
            seed: 17,
            kinds: vec![ConstantKind::K1],
            targets: vec![TargetKind::DesignDependent],
        };
        let sel = SelectorSpec::aic();
        let out = minimal_coverage_search(&cfg, &s, &sel, None).unwrap();
        assert!(!out.partial);
        let beta = sample_beta(&s.x, &beta_stream(17).substream(0)).unwrap();
        let (c, se) = coverage_at(
            &s,
            &sel,
            ConstantKind::K1,
            TargetKind::DesignDependent,
            &beta,
            1.0,
            300,
            &rep_stream(17).substream(0),
        )
        .unwrap();
        assert_eq!(out.cells.len(), 1);
        assert_eq!((out.cells[0].coverage, out.cells[0].stderr), (c, se));
    }

    #[test]
    fn search_is_deterministic_and_within_unit_interval() {
        let s = setup(20, 3, SigmaSource::Full);
        let cfg = CoverageSearchConfig {
            m1: 6,
            m2: 2,
            i1: 50,
            i2: 100,
            i3: 200,
            seed: 5,
            kinds: vec![ConstantKind::Naive, ConstantKind::K3],
            targets: vec![TargetKind::DesignDependent, TargetKind::DesignIndependent],
        };
        let a = minimal_coverage_search(&cfg, &s, &SelectorSpec::bic(), None).unwrap();
        let b = minimal_coverage_search(&cfg, &s, &SelectorSpec::bic(), None).unwrap();
        assert_eq!(a.cells, b.cells);
        assert_eq!(a.cells.len(), 4);
        for c in &a.cells {
            assert!((0.0..=1.0).contains(&c.coverage));
            assert_eq!(c.replications, 200);
        }
    }

    #[test]
    fn cancelled_search_is_partial() {
        let s = setup(20, 3, SigmaSource::Full);
        let flag = AtomicBool::new(true);
        let cfg = CoverageSearchConfig { kinds: vec![ConstantKind::Naive], ..CoverageSearchConfig::desk(1) };
        let out = minimal_coverage_search(&cfg, &s, &SelectorSpec::bic(), Some(&flag)).unwrap();
        assert!(out.partial);
    }

    #[test]
    fn config_validation() {
        assert!(CoverageSearchConfig::desk(1).validate().is_ok());
        assert!(CoverageSearchConfig::paper(1).validate().is_ok());
        let bad = CoverageSearchConfig { m2: 300, ..CoverageSearchConfig::desk(1) };
        assert!(bad.validate().is_err());
        let bad = CoverageSearchConfig { i2: 100, ..CoverageSearchConfig::desk(1) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sigma_source_parsing() {
        assert_eq!("full".parse::<SigmaSource>().unwrap(), SigmaSource::Full);
        assert_eq!("PMS".parse::<SigmaSource>().unwrap(), SigmaSource::Pms);
        assert_eq!("fixed:2.5".parse::<SigmaSource>().unwrap(), SigmaSource::Fixed(2.5));
        assert!("fixed:-1".parse::<SigmaSource>().is_err());
    }
}
