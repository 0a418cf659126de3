//! Design geometry: canonical coordinates, model universes, the vectors
//! `s_M`, and restricted least squares.

mod canonical;
mod geometry;
pub mod io;
mod model;
mod universe;

use nalgebra::{DMatrix, DVector};

pub use canonical::{
    canonicalize, check_no_zero_column, numerical_rank, restricted_ols, select_columns, select_entries, CanonicalDesign,
};
pub use geometry::{s_vector, Directions, SbarVector, UniverseGeometry};
pub use model::ModelId;
pub use universe::{count_not_subset, enumerate_universe, ModelUniverse, UniverseSpec, DEFAULT_UNIVERSE_BUDGET};

use crate::error::{PosiError, Result};
use crate::numerics::DofParam;

/// A fixed design, query point, level and variance degrees of freedom.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub x: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub alpha: f64,
    pub r: DofParam,
}

impl DesignProblem {
    pub fn new(x: DMatrix<f64>, x0: DVector<f64>, alpha: f64, r: DofParam) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(PosiError::Validation("design matrix is empty".into()));
        }
        check_no_zero_column(&x)?;
        if x0.len() != x.ncols() {
            return Err(PosiError::Validation(format!("x0 has length {} but X has {} columns", x0.len(), x.ncols())));
        }
        check_alpha(alpha)?;
        if let DofParam::Finite(0) = r {
            return Err(PosiError::Validation("degrees of freedom must be >= 1".into()));
        }
        Ok(DesignProblem { x, x0, alpha, r })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PosiError::Validation(format!("alpha must be in (0,1), got {alpha}")));
    }
    Ok(())
}
