//! Sphere samples, maxima of projections, ordered sums and the bootstrap.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::error::{PosiError, Result};
use crate::numerics::{bisect_boundary, fill_unit_sphere, fsharp_cdf, DofParam, RngStream};

/// Fixed chunk length for parallel reductions; sums are formed per chunk and
/// then added in chunk order, so results do not depend on the thread count.
const CHUNK: usize = 4096;

/// `count` points uniform on the unit sphere in `R^d`; point `i` is drawn
/// from substream `i` of the given stream.
#[derive(Debug, Clone)]
pub struct SphereSample {
    d: usize,
    data: Vec<f64>,
}

impl SphereSample {
    pub fn generate(d: usize, count: usize, stream: &RngStream) -> Self {
        let mut data = vec![0.0; d * count];
        data.par_chunks_mut(d.max(1)).enumerate().for_each(|(i, v)| {
            let mut s = stream.substream(i as u64);
            fill_unit_sphere(v, &mut s);
        });
        SphereSample { d, data }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        if self.d == 0 {
            0
        } else {
            self.data.len() / self.d
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

/// Nonzero unit directions with duplicates (up to sign) removed, row-major.
#[derive(Debug, Clone, Default)]
pub struct DirectionSet {
    pub d: usize,
    pub rows: Vec<f64>,
}

impl DirectionSet {
    pub fn len(&self) -> usize {
        if self.d == 0 {
            0
        } else {
            self.rows.len() / self.d
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Collects rows; zero rows are skipped and `v`, `-v` count once.
    pub fn from_rows<'a, I: IntoIterator<Item = &'a [f64]>>(d: usize, rows: I) -> Self {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for row in rows {
            let Some(lead) = row.iter().find(|v| **v != 0.0) else {
                continue;
            };
            let sign = if *lead < 0.0 { -1.0 } else { 1.0 };
            let key: Vec<i64> = row.iter().map(|v| (sign * v * 1e12).round() as i64).collect();
            if seen.insert(key) {
                out.extend(row.iter().map(|v| sign * v));
            }
        }
        DirectionSet { d, rows: out }
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k * self.d..(k + 1) * self.d]
    }
}

/// `c_i = max_k |s_k' V_i|` for every sample point.
pub fn max_abs_projections(sample: &SphereSample, dirs: &DirectionSet) -> Vec<f64> {
    let d = sample.d();
    assert_eq!(d, dirs.d, "direction and sample dimensions differ");
    let n = sample.len();
    let mut out = vec![0.0; n];
    if dirs.is_empty() {
        return out;
    }
    out.par_iter_mut().enumerate().for_each(|(i, c)| {
        let v = sample.point(i);
        let mut best = 0.0f64;
        for row in dirs.rows.chunks_exact(d) {
            let mut dot = 0.0;
            for k in 0..d {
                dot += row[k] * v[k];
            }
            best = best.max(dot.abs());
        }
        *c = best;
    });
    out
}

/// Sum of `f` over `values`, reduced in a thread-count independent order.
pub(crate) fn ordered_sum<F: Fn(f64) -> f64 + Sync>(values: &[f64], f: F) -> f64 {
    let partial: Vec<f64> = values.par_chunks(CHUNK).map(|ch| ch.iter().map(|&v| f(v)).sum::<f64>()).collect();
    partial.iter().sum()
}

/// Infallible cdf of `G` for hot loops; errors surface as NaN.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FSharp {
    pub d: usize,
    pub r: DofParam,
}

impl FSharp {
    pub fn cdf(&self, t: f64) -> f64 {
        if t.is_infinite() {
            return 1.0;
        }
        fsharp_cdf(self.d, self.r, t).unwrap_or(f64::NAN)
    }

    /// `F(k / c)`, with `c = 0` read as an infinite argument.
    pub fn at_ratio(&self, k: f64, c: f64) -> f64 {
        if c <= 0.0 {
            1.0
        } else {
            self.cdf(k / c)
        }
    }
}

/// Smallest `k` with `g(k) >= target` (`g` nondecreasing), absolute
/// tolerance `tol`, starting from the bracket `[0, hi]`.
pub(crate) fn solve_increasing<G: Fn(f64) -> f64>(g: G, target: f64, hi: f64, tol: f64) -> Result<f64> {
    let mut bad = None;
    let k = bisect_boundary(
        |k| {
            let v = g(k);
            if v.is_nan() {
                bad.get_or_insert(k);
                true
            } else {
                v >= target
            }
        },
        0.0,
        hi.max(tol),
        tol,
    )?;
    if let Some(at) = bad {
        return Err(PosiError::Precision(format!("distribution function could not be evaluated near K = {at}")));
    }
    Ok(k)
}

/// Bootstrap standard error of a root `k` of `mean(u) + const = target`,
/// linearized at `k`: each resample's root is `k - (mean_b(u) - mean(u)) / slope`.
pub(crate) fn bootstrap_stderr(u: &[f64], slope: f64, resamples: usize, stream: &RngStream) -> f64 {
    let n = u.len();
    if n < 2 || resamples < 2 || !(slope > 0.0) {
        return 0.0;
    }
    let mean = u.iter().sum::<f64>() / n as f64;
    let mut s = stream.clone();
    let roots: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut acc = 0.0;
            for _ in 0..n {
                acc += u[s.below(n)];
            }
            -(acc / n as f64 - mean) / slope
        })
        .collect();
    let m = roots.iter().sum::<f64>() / resamples as f64;
    let var = roots.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (resamples - 1) as f64;
    var.sqrt()
}

/// Central-difference slope of `g` at `k`.
pub(crate) fn slope_at<G: Fn(f64) -> f64>(g: G, k: f64) -> f64 {
    let h = 1e-4 * k.max(1e-3);
    let lo = (k - h).max(0.0);
    (g(k + h) - g(lo)) / (k + h - lo)
}
