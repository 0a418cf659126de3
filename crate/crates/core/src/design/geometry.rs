use nalgebra::{DMatrix, DVector};

use super::canonical::{hat_map, select_columns, select_entries, CanonicalDesign};
use super::model::ModelId;
use super::universe::ModelUniverse;
use crate::error::{PosiError, Result};

/// `s_M` in canonical coordinates, its norm and its direction.
#[derive(Debug, Clone)]
pub struct SbarVector {
    pub s_tilde: DVector<f64>,
    pub norm: f64,
    pub s_bar: DVector<f64>,
}

impl SbarVector {
    fn from_s(s_tilde: DVector<f64>) -> Self {
        let norm = s_tilde.norm();
        let s_bar = if norm > 0.0 { &s_tilde / norm } else { DVector::zeros(s_tilde.len()) };
        SbarVector { s_tilde, norm, s_bar }
    }
}

/// `s~_M' = x0'[M] (X~[M]'X~[M])^{-1} X~[M]'`, zero for the empty model.
pub fn s_vector(canon: &CanonicalDesign, x0: &DVector<f64>, m: &ModelId) -> Result<SbarVector> {
    if x0.len() != canon.p() {
        return Err(PosiError::Validation(format!("x0 has length {} but p = {}", x0.len(), canon.p())));
    }
    if m.is_empty() {
        return Ok(SbarVector::from_s(DVector::zeros(canon.d)));
    }
    let a = hat_map(&select_columns(&canon.xt, m))?;
    Ok(SbarVector::from_s(a * select_entries(x0, m)))
}

/// The hat maps `X~[M](X~[M]'X~[M])^{-1}` of every model in a universe, so
/// that `s~_M` for any query point costs one small matrix-vector product.
#[derive(Debug, Clone)]
pub struct UniverseGeometry {
    canon: CanonicalDesign,
    universe: ModelUniverse,
    maps: Vec<DMatrix<f64>>,
    indices: Vec<Vec<usize>>,
}

/// Unit directions `s_bar_M` for every model of a universe, row-major
/// `len x d`, plus the norms `||s_M||`.
#[derive(Debug, Clone)]
pub struct Directions {
    pub d: usize,
    pub sbar: Vec<f64>,
    pub norms: Vec<f64>,
}

impl Directions {
    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.sbar[k * self.d..(k + 1) * self.d]
    }
}

impl UniverseGeometry {
    pub fn new(canon: CanonicalDesign, universe: ModelUniverse) -> Result<Self> {
        if universe.p() != canon.p() {
            return Err(PosiError::Validation("universe and design disagree on p".into()));
        }
        let mut maps = Vec::with_capacity(universe.len());
        let mut indices = Vec::with_capacity(universe.len());
        for m in universe.models() {
            maps.push(
                hat_map(&select_columns(&canon.xt, m)).map_err(|e| PosiError::Singular(format!("model {m}: {e}")))?,
            );
            indices.push(m.indices());
        }
        Ok(UniverseGeometry { canon, universe, maps, indices })
    }

    pub fn canon(&self) -> &CanonicalDesign {
        &self.canon
    }

    pub fn universe(&self) -> &ModelUniverse {
        &self.universe
    }

    pub fn d(&self) -> usize {
        self.canon.d
    }

    pub fn p(&self) -> usize {
        self.canon.p()
    }

    /// `s~_M` for the model at position `k`.
    pub fn s_tilde(&self, k: usize, x0: &DVector<f64>) -> DVector<f64> {
        let idx = &self.indices[k];
        let w = DVector::from_iterator(idx.len(), idx.iter().map(|&j| x0[j]));
        &self.maps[k] * w
    }

    pub fn directions(&self, x0: &DVector<f64>) -> Result<Directions> {
        if x0.len() != self.p() {
            return Err(PosiError::Validation(format!("x0 has length {} but p = {}", x0.len(), self.p())));
        }
        let d = self.d();
        let mut sbar = Vec::with_capacity(self.universe.len() * d);
        let mut norms = Vec::with_capacity(self.universe.len());
        for k in 0..self.universe.len() {
            let s = self.s_tilde(k, x0);
            let norm = s.norm();
            norms.push(norm);
            if norm > 0.0 {
                sbar.extend(s.iter().map(|v| v / norm));
            } else {
                sbar.extend(std::iter::repeat(0.0).take(d));
            }
        }
        Ok(Directions { d, sbar, norms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::canonicalize;

    #[test]
    fn empty_model_is_zero() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.0, 1.0, 2.0, 0.0]);
        let c = canonicalize(&x).unwrap();
        let s = s_vector(&c, &DVector::from_vec(vec![1.0, 1.0]), &ModelId::empty()).unwrap();
        assert_eq!(s.norm, 0.0);
        assert!(s.s_bar.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn basis_query_outside_model_is_zero() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.0, 1.0, 2.0, 0.0]);
        let c = canonicalize(&x).unwrap();
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        let s = s_vector(&c, &e2, &ModelId::from_indices([0])).unwrap();
        assert_eq!(s.norm, 0.0);
    }

    #[test]
    fn orthonormal_full_model_direction() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let c = canonicalize(&x).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let s = s_vector(&c, &e1, &ModelId::full(2)).unwrap();
        assert!((s.norm - 1.0).abs() < 1e-14);
        // identity Gram: s~ = X~ e1, the first column of X~
        let first = c.xt.column(0).into_owned();
        assert!((s.s_bar - first).norm() < 1e-14);
    }
}
