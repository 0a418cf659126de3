use nalgebra::{DMatrix, DVector};

use super::model::ModelId;
use crate::error::{PosiError, Result};

/// Rank-`d` reduction of the design: `Q` has orthonormal columns spanning
/// the column space of `X`, and `xt = Q'X` is `d x p`.
#[derive(Debug, Clone)]
pub struct CanonicalDesign {
    pub d: usize,
    pub q: DMatrix<f64>,
    pub xt: DMatrix<f64>,
}

impl CanonicalDesign {
    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn p(&self) -> usize {
        self.xt.ncols()
    }

    /// `Q'y`.
    pub fn to_canonical(&self, y: &DVector<f64>) -> DVector<f64> {
        self.q.transpose() * y
    }
}

pub(crate) fn rank_threshold(sv: &DVector<f64>, n: usize, p: usize) -> f64 {
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    n.max(p) as f64 * f64::EPSILON * smax
}

/// Numerical rank: singular values at or below `max(n,p) eps sigma_max` are
/// zero; any value within `[0.5, 2]` times that threshold is ambiguous.
pub fn numerical_rank(x: &DMatrix<f64>) -> Result<usize> {
    let sv = x.singular_values();
    let tau = rank_threshold(&sv, x.nrows(), x.ncols());
    if let Some(s) = sv.iter().find(|&&s| s >= 0.5 * tau && s <= 2.0 * tau) {
        return Err(PosiError::Degenerate(format!(
            "singular value {s:e} is within a factor 2 of the rank threshold {tau:e}"
        )));
    }
    Ok(sv.iter().filter(|&&s| s > tau).count())
}

pub fn check_no_zero_column(x: &DMatrix<f64>) -> Result<()> {
    for (j, col) in x.column_iter().enumerate() {
        if col.iter().all(|&v| v == 0.0) {
            return Err(PosiError::Validation(format!("column {} of X is zero", j + 1)));
        }
    }
    Ok(())
}

/// Canonical coordinates of `X`.
///
/// Full column rank uses a thin QR (so orthonormal columns map to a signed
/// identity); full row rank takes `Q = I_n`; anything else uses the leading
/// left singular vectors.
pub fn canonicalize(x: &DMatrix<f64>) -> Result<CanonicalDesign> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(PosiError::Validation("design matrix is empty".into()));
    }
    check_no_zero_column(x)?;
    let d = numerical_rank(x)?;
    if d == 0 {
        return Err(PosiError::Validation("design matrix has rank zero".into()));
    }
    if d == p {
        let qr = x.clone().qr();
        let q = qr.q();
        let r = qr.r();
        return Ok(CanonicalDesign { d, q, xt: r });
    }
    if d == n {
        return Ok(CanonicalDesign { d, q: DMatrix::identity(n, n), xt: x.clone() });
    }
    let svd = x.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let tau = rank_threshold(&svd.singular_values, n, p);
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tau).collect();
    let q = DMatrix::from_fn(n, d, |i, k| u[(i, keep[k])]);
    let xt = q.transpose() * x;
    Ok(CanonicalDesign { d, q, xt })
}

/// Columns of `m` listed in `model`.
pub fn select_columns(m: &DMatrix<f64>, model: &ModelId) -> DMatrix<f64> {
    let idx = model.indices();
    DMatrix::from_fn(m.nrows(), idx.len(), |i, k| m[(i, idx[k])])
}

/// Entries of `v` listed in `model`.
pub fn select_entries(v: &DVector<f64>, model: &ModelId) -> DVector<f64> {
    let idx = model.indices();
    DVector::from_iterator(idx.len(), idx.iter().map(|&j| v[j]))
}

/// `A = Z (Z'Z)^{-1}` for a full-column-rank `Z`, via `Z = QR`:
/// `A = Q R^{-T}`. Then `A w` is `s` for a model with design `Z` and query `w`.
pub(crate) fn hat_map(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = z.ncols();
    if m == 0 {
        return Ok(DMatrix::zeros(z.nrows(), 0));
    }
    if z.nrows() < m {
        return Err(PosiError::Singular(format!("{} columns but only {} rows", m, z.nrows())));
    }
    let qr = z.clone().qr();
    let r = qr.r();
    let q = qr.q();
    let scale = r.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = z.nrows().max(m) as f64 * f64::EPSILON * scale;
    if r.diagonal().iter().any(|v| v.abs() <= tol) {
        return Err(PosiError::Singular("Gram matrix of the model is singular".into()));
    }
    // B = Q R^{-T}, i.e. R B' = Q'
    let bt = r
        .solve_upper_triangular(&q.transpose())
        .ok_or_else(|| PosiError::Singular("triangular solve failed".into()))?;
    Ok(bt.transpose())
}

/// Least-squares coefficients of `y` on `X[M]`, Moore-Penrose for rank
/// deficiency. Returns an empty vector for the empty model.
pub fn restricted_ols(x: &DMatrix<f64>, y: &DVector<f64>, model: &ModelId) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(PosiError::Validation(format!("X has {} rows but Y has {} entries", x.nrows(), y.len())));
    }
    if let Some(j) = model.max_index() {
        if j >= x.ncols() {
            return Err(PosiError::Validation(format!("model index {} exceeds p", j + 1)));
        }
    }
    if model.is_empty() {
        return Ok(DVector::zeros(0));
    }
    let xm = select_columns(x, model);
    let (n, m) = xm.shape();
    let svd = xm.svd(true, true);
    let tau = rank_threshold(&svd.singular_values, n, m);
    svd.solve(y, tau).map_err(|e| PosiError::Singular(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hat_map_matches_normal_equations() {
        let z = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 0.5, -1.0, 0.3, 2.0, 0.7, -1.2, 1.1, 0.2, 0.9, -0.4]);
        let direct = &z * (z.transpose() * &z).try_inverse().unwrap();
        assert!((hat_map(&z).unwrap() - direct).amax() < 1e-12);
    }

    #[test]
    fn orthonormal_columns_give_signed_identity() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let c = canonicalize(&x).unwrap();
        assert_eq!(c.d, 2);
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((c.xt[(i, j)].abs() - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_column_of_ones() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let c = canonicalize(&x).unwrap();
        assert_eq!(c.d, 1);
        assert!((c.xt[(0, 0)].abs() - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn wide_full_row_rank_uses_identity() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, 0.0, 1.0, 3.0]);
        let c = canonicalize(&x).unwrap();
        assert_eq!(c.d, 2);
        assert_eq!(c.q, DMatrix::identity(2, 2));
        assert_eq!(c.xt, x);
    }

    #[test]
    fn rank_deficient_uses_svd_basis() {
        // third column = first + second
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, -1.0, 1.0]);
        let c = canonicalize(&x).unwrap();
        assert_eq!(c.d, 2);
        let qtq = c.q.transpose() * &c.q;
        assert!((qtq - DMatrix::<f64>::identity(2, 2)).norm() < 1e-10);
        assert!((&c.q * &c.xt - &x).norm() < 1e-8);
    }

    #[test]
    fn zero_column_rejected() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        assert!(matches!(canonicalize(&x), Err(PosiError::Validation(_))));
    }

    #[test]
    fn ols_empty_and_exact() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let gamma = DVector::from_vec(vec![0.5, -2.0]);
        let y = &x * &gamma;
        let full = ModelId::full(2);
        let b = restricted_ols(&x, &y, &full).unwrap();
        assert!((b - gamma).norm() < 1e-12);
        assert_eq!(restricted_ols(&x, &y, &ModelId::empty()).unwrap().len(), 0);
    }

    #[test]
    fn ols_orthonormal_is_projection_coefficients() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![3.0, -1.0, 7.0]);
        let b = restricted_ols(&x, &y, &ModelId::full(2)).unwrap();
        assert!((b - x.transpose() * &y).norm() < 1e-12);
    }

    #[test]
    fn ols_pseudo_inverse_on_duplicate_columns() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 5.0]);
        let b = restricted_ols(&x, &y, &ModelId::full(2)).unwrap();
        // minimum-norm solution splits the coefficient evenly
        assert!((b[0] - 0.5).abs() < 1e-12 && (b[1] - 0.5).abs() < 1e-12);
    }
}
