use crate::error::{PosiError, Result};

/// Default absolute tolerance on the argument for cdf inversions.
pub const DEFAULT_TOL: f64 = 1e-9;
const MAX_EXPANSIONS: usize = 200;
const MAX_BISECTIONS: usize = 2_000;

/// Boundary of a monotone predicate on `[lo, hi]`.
///
/// `pred` must be false-then-true along the interval. Returns the smallest
/// point at which `pred` holds, to within `tol`: the returned value always
/// satisfies `pred`, and `value - tol` is either below `lo` or fails it.
/// The upper end is doubled until `pred(hi)` holds.
pub fn bisect_boundary<P: FnMut(f64) -> bool>(mut pred: P, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(PosiError::Domain(format!("tolerance must be positive, got {tol}")));
    }
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(PosiError::Domain(format!("invalid bracket [{lo}, {hi}]")));
    }
    if pred(lo) {
        return Ok(lo);
    }
    let mut lo = lo;
    let mut hi = hi;
    let mut expansions = 0;
    while !pred(hi) {
        if expansions == MAX_EXPANSIONS {
            return Err(PosiError::Bracket(format!(
                "target not reached below {hi:e} after {MAX_EXPANSIONS} expansions"
            )));
        }
        lo = hi;
        hi = if hi == 0.0 { 1.0 } else { hi * 2.0 };
        expansions += 1;
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Smallest `k` in the bracket (expanded upwards as needed) with
/// `f(k) >= target`, for nondecreasing `f`, to absolute tolerance `tol`.
pub fn invert_monotone<F: FnMut(f64) -> f64>(mut f: F, target: f64, bracket: (f64, f64), tol: f64) -> Result<f64> {
    if bracket.0 < 0.0 {
        return Err(PosiError::Domain("bracket must be nonnegative".into()));
    }
    bisect_boundary(|k| f(k) >= target, bracket.0, bracket.1, tol)
}
