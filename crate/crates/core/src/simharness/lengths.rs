//! Interval lengths along a nested chain of models.

use serde::{Deserialize, Serialize};

use crate::constants::{ConstantEstimate, ConstantKind, ConstantSolver, K2SearchConfig, McConfig};
use crate::design::{canonicalize, s_vector, DesignProblem, ModelId, UniverseGeometry, UniverseSpec};
use crate::error::{PosiError, Result};

/// One chain model under one constant, with `sigma = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub model: ModelId,
    pub size: usize,
    pub constant: ConstantKind,
    pub k: f64,
    pub s_norm: f64,
    /// `2 K ||s_M||`.
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct LengthStudy {
    pub rows: Vec<LengthRow>,
    pub constants: Vec<ConstantEstimate>,
}

/// Checks that `chain` is strictly increasing under inclusion.
pub fn check_nested(chain: &[ModelId]) -> Result<()> {
    for w in chain.windows(2) {
        if !w[0].is_subset_of(&w[1]) || w[0] == w[1] {
            return Err(PosiError::Validation(format!("chain is not nested: {} then {}", w[0], w[1])));
        }
    }
    Ok(())
}

pub fn length_study(
    problem: &DesignProblem,
    universe: &UniverseSpec,
    chain: &[ModelId],
    kinds: &[ConstantKind],
    mc: McConfig,
    k2: Option<&K2SearchConfig>,
) -> Result<LengthStudy> {
    if chain.is_empty() || kinds.is_empty() {
        return Err(PosiError::Validation("need at least one model and one constant".into()));
    }
    check_nested(chain)?;
    let u = universe.build(&problem.x)?;
    for m in chain {
        if !u.contains(m) {
            return Err(PosiError::Validation(format!("chain model {m} is not in the universe")));
        }
    }
    let canon = canonicalize(&problem.x)?;
    let norms: Vec<f64> =
        chain.iter().map(|m| s_vector(&canon, &problem.x0, m).map(|s| s.norm)).collect::<Result<_>>()?;
    let geom = UniverseGeometry::new(canon, u)?;
    let solver = ConstantSolver::new(&geom, &problem.x0, problem.r, problem.alpha, mc)?;
    let default_k2 = K2SearchConfig::desk(mc.seed);
    let k2 = k2.unwrap_or(&default_k2);

    let mut rows = Vec::new();
    let mut constants = Vec::new();
    for &kind in kinds {
        let global = if kind.is_model_dependent() {
            None
        } else {
            let est = solver.compute(kind, None, None)?;
            let v = est.conservative();
            constants.push(est);
            Some(v)
        };
        for (m, &s_norm) in chain.iter().zip(&norms) {
            let k = match global {
                Some(v) => v,
                None => {
                    let est = solver.compute(kind, Some(m), Some(k2))?;
                    let v = est.conservative();
                    constants.push(est);
                    v
                }
            };
            rows.push(LengthRow {
                model: m.clone(),
                size: m.len(),
                constant: kind,
                k,
                s_norm,
                length: 2.0 * k * s_norm,
            });
        }
    }
    Ok(LengthStudy { rows, constants })
}

/// The first-`k` chain `{1}, {1,2}, ..., {1..p}`.
pub fn prefix_chain(p: usize) -> Vec<ModelId> {
    (1..=p).map(|k| ModelId::from_indices(0..k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::Variant;
    use crate::numerics::{DofParam, RngStream};
    use nalgebra::{DMatrix, DVector};

    fn problem() -> DesignProblem {
        let mut s = RngStream::new(21);
        let x = DMatrix::from_fn(30, 4, |_, _| s.standard_normal());
        let x0 = DVector::from_fn(4, |_, _| s.standard_normal());
        DesignProblem::new(x, x0, 0.05, DofParam::Finite(26)).unwrap()
    }

    fn mc() -> McConfig {
        McConfig::new(5_000, 2_000, 4, Variant::Upper).unwrap()
    }

    #[test]
    fn global_constants_give_monotone_lengths() {
        let mut chain = vec![ModelId::empty()];
        chain.extend(prefix_chain(4));
        let kinds = [ConstantKind::Naive, ConstantKind::K4, ConstantKind::K5];
        let study = length_study(&problem(), &UniverseSpec::All, &chain, &kinds, mc(), None).unwrap();
        assert_eq!(study.rows.len(), 15);
        for kind in kinds {
            let col: Vec<f64> = study.rows.iter().filter(|r| r.constant == kind).map(|r| r.length).collect();
            assert_eq!(col[0], 0.0);
            assert!(col.windows(2).all(|w| w[0] <= w[1]), "{kind:?}: {col:?}");
        }
        assert_eq!(study.constants.len(), 3);
    }

    #[test]
    fn k3_matches_k4_for_singletons() {
        let chain = vec![ModelId::from_indices([2])];
        let study =
            length_study(&problem(), &UniverseSpec::All, &chain, &[ConstantKind::K3, ConstantKind::K4], mc(), None)
                .unwrap();
        let (a, b) = (&study.rows[0], &study.rows[1]);
        assert!((a.length - b.length).abs() < 1e-8, "{} vs {}", a.length, b.length);
    }

    #[test]
    fn chain_must_be_nested_and_in_universe() {
        let p = problem();
        let bad = vec![ModelId::from_indices([0]), ModelId::from_indices([1])];
        assert!(length_study(&p, &UniverseSpec::All, &bad, &[ConstantKind::Naive], mc(), None).is_err());
        let outside = vec![ModelId::from_indices([0, 1, 2])];
        assert!(length_study(&p, &UniverseSpec::MaxSize(2), &outside, &[ConstantKind::Naive], mc(), None).is_err());
    }
}
