//! LASSO by cyclic coordinate descent on the Gram matrix, with k-fold CV.

use nalgebra::{DMatrix, DVector};

use crate::design::ModelId;
use crate::error::{PosiError, Result};
use crate::numerics::RngStream;

pub const MAX_SWEEPS: usize = 100_000;
pub const GAP_TOL: f64 = 1e-8;
const KKT_TOL: f64 = 1e-9;
pub const CV_GRID: usize = 100;
pub const CV_RATIO: f64 = 1e-4;

/// `(1/2n)||y - Xb||^2 + lambda ||b||_1` in sufficient statistics:
/// `G = X'X/n`, `c = X'y/n`, `yy = y'y/n`.
#[derive(Debug, Clone)]
pub struct GramProblem {
    pub g: DMatrix<f64>,
    pub c: DVector<f64>,
    pub yy: f64,
}

impl GramProblem {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || y.len() != n {
            return Err(PosiError::Validation("LASSO needs matching, nonempty X and y".into()));
        }
        let nf = n as f64;
        Ok(GramProblem { g: x.transpose() * x / nf, c: x.transpose() * y / nf, yy: y.norm_squared() / nf })
    }

    pub fn p(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, b: &DVector<f64>, lambda: f64) -> f64 {
        0.5 * self.rss(b) + lambda * b.lp_norm(1)
    }

    /// `||y - Xb||^2 / n`.
    fn rss(&self, b: &DVector<f64>) -> f64 {
        (self.yy - 2.0 * self.c.dot(b) + b.dot(&(&self.g * b))).max(0.0)
    }

    /// `X'(y - Xb)/n`.
    pub fn correlations(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.c - &self.g * b
    }

    /// Largest violation of the subgradient conditions.
    pub fn kkt_violation(&self, b: &DVector<f64>, lambda: f64) -> f64 {
        let rho = self.correlations(b);
        (0..self.p())
            .filter(|&j| self.g[(j, j)] > 0.0)
            .map(
                |j| {
                    if b[j] != 0.0 {
                        (rho[j] - lambda * b[j].signum()).abs()
                    } else {
                        (rho[j].abs() - lambda).max(0.0)
                    }
                },
            )
            .fold(0.0, f64::max)
    }

    /// Primal minus the dual value at the rescaled residual.
    pub fn duality_gap(&self, b: &DVector<f64>, lambda: f64) -> f64 {
        let rho_max = self.correlations(b).amax();
        let rr = self.rss(b);
        let yr = self.yy - self.c.dot(b);
        let mut s = if rr > 0.0 { (yr / rr).max(0.0) } else { 1.0 };
        if rho_max > 0.0 {
            s = s.min(lambda / rho_max);
        }
        let dual = s * yr - 0.5 * s * s * rr;
        (self.objective(b, lambda) - dual).max(0.0)
    }

    /// Coordinate descent from `b`, updated in place; `on_sweep` sees every iterate.
    pub fn solve_from(
        &self,
        lambda: f64,
        b: &mut DVector<f64>,
        mut on_sweep: impl FnMut(&DVector<f64>),
    ) -> Result<usize> {
        if !(lambda >= 0.0) {
            return Err(PosiError::Validation(format!("lambda must be >= 0, got {lambda}")));
        }
        let p = self.p();
        let scale = self.c.amax().max(self.yy.sqrt()).max(f64::MIN_POSITIVE);
        let gap_tol = GAP_TOL * (0.5 * self.yy).max(f64::MIN_POSITIVE);
        let mut gb = &self.g * &*b;
        for sweep in 1..=MAX_SWEEPS {
            for j in 0..p {
                let gjj = self.g[(j, j)];
                if gjj <= 0.0 {
                    b[j] = 0.0;
                    continue;
                }
                let old = b[j];
                let z = self.c[j] - gb[j] + gjj * old;
                let new = soft_threshold(z, lambda) / gjj;
                if new != old {
                    let delta = new - old;
                    for k in 0..p {
                        gb[k] += self.g[(k, j)] * delta;
                    }
                    b[j] = new;
                }
            }
            on_sweep(b);
            if let Some(z) = self.polish(b, lambda) {
                if self.converged(&z, lambda, scale, gap_tol) {
                    *b = z;
                    on_sweep(b);
                    return Ok(sweep);
                }
            }
            // refresh to keep rounding from accumulating
            gb = &self.g * &*b;
            if self.converged(b, lambda, scale, gap_tol) {
                return Ok(sweep);
            }
        }
        Err(PosiError::NonConvergence(format!(
            "coordinate descent did not converge in {MAX_SWEEPS} sweeps (gap {:e}, KKT {:e})",
            self.duality_gap(b, lambda),
            self.kkt_violation(b, lambda)
        )))
    }
}

impl GramProblem {
    fn converged(&self, b: &DVector<f64>, lambda: f64, scale: f64, gap_tol: f64) -> bool {
        self.kkt_violation(b, lambda) <= KKT_TOL * scale && (lambda == 0.0 || self.duality_gap(b, lambda) <= gap_tol)
    }

    /// Exact minimizer on the support and signs of `b`, dropping coordinates
    /// whose sign does not survive the solve.
    fn polish(&self, b: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
        let mut active: Vec<usize> = (0..b.len()).filter(|&j| b[j] != 0.0).collect();
        while !active.is_empty() {
            let gaa = self.g.select_rows(&active).select_columns(&active);
            let rhs = DVector::from_iterator(active.len(), active.iter().map(|&j| self.c[j] - lambda * b[j].signum()));
            let za = gaa.cholesky()?.solve(&rhs);
            let keep: Vec<usize> =
                (0..active.len()).filter(|&k| za[k] != 0.0 && za[k].signum() == b[active[k]].signum()).collect();
            if keep.len() == active.len() {
                let mut z = DVector::zeros(b.len());
                for (k, &j) in active.iter().enumerate() {
                    z[j] = za[k];
                }
                return Some(z);
            }
            active = keep.into_iter().map(|k| active[k]).collect();
        }
        Some(DVector::zeros(b.len()))
    }
}

pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Minimizer of `(1/2n)||ys - xs b||^2 + lambda ||b||_1`, sweeping `1..p` in order.
pub fn lasso_cd(xs: &DMatrix<f64>, ys: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let prob = GramProblem::new(xs, ys)?;
    let mut b = DVector::zeros(prob.p());
    prob.solve_from(lambda, &mut b, |_| {})?;
    Ok(b)
}

/// `||X'y||_inf / n`, the smallest lambda giving the zero solution.
pub fn lambda_max(xs: &DMatrix<f64>, ys: &DVector<f64>) -> f64 {
    (xs.transpose() * ys).amax() / xs.nrows() as f64
}

/// `CV_GRID` log-spaced values from `top` down to `CV_RATIO * top`.
pub fn lambda_grid(top: f64) -> Vec<f64> {
    let lo = (CV_RATIO).ln();
    (0..CV_GRID).map(|k| top * (lo * k as f64 / (CV_GRID - 1) as f64).exp()).collect()
}

/// Random fold labels `0..folds` of near-equal size.
pub fn fold_labels(n: usize, folds: usize, stream: &mut RngStream) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = stream.below(i + 1);
        perm.swap(i, j);
    }
    let mut labels = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        labels[i] = pos % folds;
    }
    labels
}

/// Lambda minimizing the mean squared prediction error over `folds` folds;
/// on ties the larger lambda wins.
pub fn cv_lambda(xs: &DMatrix<f64>, ys: &DVector<f64>, folds: usize, stream: &mut RngStream) -> Result<f64> {
    let (n, p) = xs.shape();
    if folds < 2 || folds > n {
        return Err(PosiError::Validation(format!("fold count must be in 2..={n}, got {folds}")));
    }
    let top = lambda_max(xs, ys);
    if top == 0.0 {
        return Ok(0.0);
    }
    let grid = lambda_grid(top);
    let labels = fold_labels(n, folds, stream);
    let full_g = xs.transpose() * xs;
    let full_c = xs.transpose() * ys;
    let full_yy = ys.norm_squared();
    let mut sse = vec![0.0; grid.len()];
    for f in 0..folds {
        let rows: Vec<usize> = (0..n).filter(|&i| labels[i] == f).collect();
        let xt = xs.select_rows(&rows);
        let yt = DVector::from_iterator(rows.len(), rows.iter().map(|&i| ys[i]));
        let m = (n - rows.len()) as f64;
        let train = GramProblem {
            g: (&full_g - xt.transpose() * &xt) / m,
            c: (&full_c - xt.transpose() * &yt) / m,
            yy: (full_yy - yt.norm_squared()) / m,
        };
        let mut b = DVector::zeros(p);
        for (k, &lam) in grid.iter().enumerate() {
            train.solve_from(lam, &mut b, |_| {})?;
            sse[k] += (&yt - &xt * &b).norm_squared();
        }
    }
    let mut best = 0;
    for k in 1..grid.len() {
        if sse[k] < sse[best] {
            best = k;
        }
    }
    Ok(grid[best])
}

/// The design the LASSO sees: columns outside `protected`, with the
/// protected columns projected out of both them and `y`, scaled to unit
/// mean square. Columns that vanish after projection are left out.
#[derive(Debug, Clone)]
pub struct LassoDesign {
    /// Original (0-based) indices of the retained columns.
    pub columns: Vec<usize>,
    pub xs: DMatrix<f64>,
    basis: Option<DMatrix<f64>>,
}

impl LassoDesign {
    pub fn new(x: &DMatrix<f64>, protected: &ModelId) -> Result<Self> {
        let (n, p) = x.shape();
        let basis = if protected.is_empty() {
            None
        } else {
            let xp = crate::design::select_columns(x, protected);
            let qr = xp.clone().qr();
            let r = qr.r();
            let scale = r.diagonal().amax();
            if r.diagonal().iter().any(|v| v.abs() <= n.max(p) as f64 * f64::EPSILON * scale) {
                return Err(PosiError::Singular("protected columns are linearly dependent".into()));
            }
            Some(qr.q())
        };
        let free: Vec<usize> = (0..p).filter(|&j| !protected.contains(j)).collect();
        let mut xs = x.select_columns(&free);
        if let Some(q) = &basis {
            xs -= q * (q.transpose() * &xs);
        }
        let mut columns = Vec::new();
        let mut keep = Vec::new();
        for (k, &j) in free.iter().enumerate() {
            let orig = x.column(j).norm();
            let ms = xs.column(k).norm_squared() / n as f64;
            if ms.sqrt() * (n as f64).sqrt() > 1e-10 * orig {
                columns.push(j);
                keep.push((k, ms.sqrt()));
            }
        }
        let xs = DMatrix::from_fn(n, keep.len(), |i, c| xs[(i, keep[c].0)] / keep[c].1);
        Ok(LassoDesign { columns, xs, basis })
    }

    /// `y` with the protected columns projected out.
    pub fn response(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            Some(q) => y - q * (q.transpose() * y),
            None => y.clone(),
        }
    }

    /// Original indices whose coefficients are nonzero.
    pub fn support(&self, b: &DVector<f64>) -> Vec<usize> {
        (0..b.len()).filter(|&k| b[k] != 0.0).map(|k| self.columns[k]).collect()
    }
}

/// `2 E||X~' e||_inf / n` for standard normal `e`, by `draws` Monte Carlo
/// draws on the standardized design. A stand-in default for a fixed lambda.
pub fn lambda_standin(x: &DMatrix<f64>, protected: &ModelId, draws: usize, stream: &RngStream) -> Result<f64> {
    if draws == 0 {
        return Err(PosiError::Validation("need at least one draw".into()));
    }
    let design = LassoDesign::new(x, protected)?;
    let n = x.nrows();
    let mut s = stream.clone();
    let mut acc = 0.0;
    for _ in 0..draws {
        let e = DVector::from_fn(n, |_, _| s.standard_normal());
        acc += (design.xs.transpose() * e).amax();
    }
    Ok(2.0 * acc / (draws as f64 * n as f64))
}
