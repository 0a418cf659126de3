//! The four distribution families used by the constants.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur};

use super::beta::reg_incomplete_beta_split;
use super::root::bisect_boundary;
use crate::error::{PosiError, Result};

/// Degrees of freedom of the variance estimate; `Infinite` is the known-variance case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DofParam {
    Finite(u64),
    Infinite,
}

impl DofParam {
    pub fn finite(r: u64) -> Result<Self> {
        if r == 0 {
            return Err(PosiError::Domain("degrees of freedom must be >= 1".into()));
        }
        Ok(DofParam::Finite(r))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, DofParam::Infinite)
    }
}

impl std::fmt::Display for DofParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DofParam::Finite(r) => write!(f, "{r}"),
            DofParam::Infinite => write!(f, "inf"),
        }
    }
}

/// A monotone cdf on `[0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CdfHandle {
    /// `t -> F_Beta(1/2, (d-1)/2)(t^2)`.
    BetaHalf { d: usize },
    /// Cdf of `G` with `G^2/d ~ F(d, r)` (a chi with `d` df when `r` is infinite).
    FSharp { d: usize, r: DofParam },
    /// Cdf of `|T|` for Student's t with `r` df.
    StudentTAbs { r: DofParam },
    /// Cdf of `|Z|` for a standard normal `Z`.
    NormalAbs,
}

impl CdfHandle {
    pub fn cdf(&self, t: f64) -> Result<f64> {
        match *self {
            CdfHandle::BetaHalf { d } => beta_half_cdf(d, t),
            CdfHandle::FSharp { d, r } => fsharp_cdf(d, r, t),
            CdfHandle::StudentTAbs { r } => fsharp_cdf(1, r, t),
            CdfHandle::NormalAbs => fsharp_cdf(1, DofParam::Infinite, t),
        }
    }

    pub fn sf(&self, t: f64) -> Result<f64> {
        match *self {
            CdfHandle::BetaHalf { d } => beta_half_sf(d, t),
            CdfHandle::FSharp { d, r } => fsharp_sf(d, r, t),
            CdfHandle::StudentTAbs { r } => fsharp_sf(1, r, t),
            CdfHandle::NormalAbs => fsharp_sf(1, DofParam::Infinite, t),
        }
    }

    /// Smallest `t` with `cdf(t) >= q`, found by bisection on the survival
    /// function so extreme upper quantiles stay accurate.
    pub fn quantile(&self, q: f64, tol: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&q) {
            return Err(PosiError::Domain(format!("quantile level must be in [0,1), got {q}")));
        }
        if q == 0.0 {
            return Ok(0.0);
        }
        let tail = 1.0 - q;
        let mut failure = None;
        let k = bisect_boundary(
            |t| match self.sf(t) {
                Ok(s) => s <= tail,
                Err(e) => {
                    failure.get_or_insert(e);
                    true
                }
            },
            0.0,
            1.0,
            tol,
        )?;
        match failure {
            Some(e) => Err(e),
            None => Ok(k),
        }
    }
}

fn check_t(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(PosiError::Domain(format!("cdf argument must be >= 0, got {t}")));
    }
    Ok(())
}

fn check_d(d: usize) -> Result<()> {
    if d == 0 {
        return Err(PosiError::Domain("dimension d must be >= 1".into()));
    }
    Ok(())
}

/// `F_Beta(1/2, (d-1)/2)` evaluated at `t^2`; point mass at one for `d = 1`.
pub fn beta_half_cdf(d: usize, t: f64) -> Result<f64> {
    Ok(beta_half_both(d, t)?.0)
}

/// `1 - beta_half_cdf(d, t)`.
pub fn beta_half_sf(d: usize, t: f64) -> Result<f64> {
    Ok(beta_half_both(d, t)?.1)
}

fn beta_half_both(d: usize, t: f64) -> Result<(f64, f64)> {
    check_d(d)?;
    check_t(t)?;
    if t >= 1.0 {
        return Ok((1.0, 0.0));
    }
    if d == 1 {
        return Ok((0.0, 1.0));
    }
    let x = t * t;
    let y = (1.0 - t) * (1.0 + t);
    reg_incomplete_beta_split(0.5, (d as f64 - 1.0) / 2.0, x, y)
}

/// Cdf of `G` where `G^2/d ~ F(d, r)`, or `G^2 ~ chi^2_d` when `r` is infinite.
pub fn fsharp_cdf(d: usize, r: DofParam, t: f64) -> Result<f64> {
    Ok(fsharp_both(d, r, t)?.0)
}

/// `1 - fsharp_cdf(d, r, t)`.
pub fn fsharp_sf(d: usize, r: DofParam, t: f64) -> Result<f64> {
    Ok(fsharp_both(d, r, t)?.1)
}

fn fsharp_both(d: usize, r: DofParam, t: f64) -> Result<(f64, f64)> {
    check_d(d)?;
    check_t(t)?;
    if t == 0.0 {
        return Ok((0.0, 1.0));
    }
    if t.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let half_d = d as f64 / 2.0;
    match r {
        DofParam::Infinite => {
            let x = 0.5 * t * t;
            if x == 0.0 {
                return Ok((0.0, 1.0));
            }
            if x > half_d {
                let upper = gamma_ur(half_d, x);
                Ok((1.0 - upper, upper))
            } else {
                let lower = gamma_lr(half_d, x);
                Ok((lower, 1.0 - lower))
            }
        }
        DofParam::Finite(r) => {
            let rf = r as f64;
            let t2 = t * t;
            let denom = t2 + rf;
            reg_incomplete_beta_split(half_d, rf / 2.0, t2 / denom, rf / denom)
        }
    }
}

/// The `q`-quantile of Student's t with `r` df (standard normal for infinite `r`).
pub fn student_t_quantile(r: DofParam, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(PosiError::Domain(format!("quantile level must be in (0,1), got {q}")));
    }
    if q == 0.5 {
        return Ok(0.0);
    }
    let abs = CdfHandle::StudentTAbs { r };
    if q > 0.5 {
        // P(|T| <= t) = 2q - 1, via the tail 2(1 - q).
        abs.quantile(1.0 - 2.0 * (1.0 - q), 1e-13)
    } else {
        abs.quantile(1.0 - 2.0 * q, 1e-13).map(|t| -t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn beta_half_point_mass_for_one_dimension() {
        assert_eq!(beta_half_cdf(1, 0.99).unwrap(), 0.0);
        assert_eq!(beta_half_cdf(1, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn beta_half_arcsine() {
        // d = 2 is Beta(1/2, 1/2): cdf(x) = (2/pi) asin(sqrt x).
        let got = beta_half_cdf(2, 0.5f64.sqrt()).unwrap();
        assert!((got - 0.5).abs() < 1e-13);
        let t: f64 = 0.3;
        let exact = 2.0 / PI * t.asin();
        assert!((beta_half_cdf(2, t).unwrap() - exact).abs() < 1e-13);
    }

    #[test]
    fn fsharp_normal_and_chi_two() {
        let got = fsharp_cdf(1, DofParam::Infinite, 1.959963984540054).unwrap();
        assert!((got - 0.95).abs() < 1e-12);
        let t = (2.0 * 20f64.ln()).sqrt();
        assert!((fsharp_cdf(2, DofParam::Infinite, t).unwrap() - 0.95).abs() < 1e-13);
        for d in 1..6 {
            assert_eq!(fsharp_cdf(d, DofParam::Finite(3), 0.0).unwrap(), 0.0);
            assert_eq!(fsharp_cdf(d, DofParam::Infinite, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn fsharp_one_dim_is_abs_t() {
        // |T_1| is |Cauchy|: P(|T| <= t) = (2/pi) atan(t).
        for &t in &[0.1, 1.0, 3.0, 50.0] {
            let exact = 2.0 / PI * f64::atan(t);
            assert!((fsharp_cdf(1, DofParam::Finite(1), t).unwrap() - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn t_quantiles() {
        assert!((student_t_quantile(DofParam::Finite(1), 0.75).unwrap() - 1.0).abs() < 1e-10);
        let z = student_t_quantile(DofParam::Infinite, 0.975).unwrap();
        assert!((z - 1.959963984540054).abs() < 1e-10);
        assert_eq!(student_t_quantile(DofParam::Finite(7), 0.5).unwrap(), 0.0);
        let lo = student_t_quantile(DofParam::Finite(4), 0.1).unwrap();
        let hi = student_t_quantile(DofParam::Finite(4), 0.9).unwrap();
        assert!((lo + hi).abs() < 1e-12);
        // Cauchy: tan(pi (q - 1/2)).
        let q: f64 = 0.99;
        let exact = (PI * (q - 0.5)).tan();
        assert!((student_t_quantile(DofParam::Finite(1), q).unwrap() - exact).abs() < 1e-8);
    }

    #[test]
    fn t_quantile_domain() {
        assert!(student_t_quantile(DofParam::Infinite, 0.0).is_err());
        assert!(student_t_quantile(DofParam::Infinite, 1.0).is_err());
    }

    #[test]
    fn dof_zero_rejected() {
        assert!(DofParam::finite(0).is_err());
    }
}
