//! Exact check of the excess-risk bound
//! `R(ĥ, r̂) − R(h*, r*) ≤ 2 c_l sqrt(L(ĝ) − L(g*))` on finite worlds.

use nalgebra::SVD;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::decode::brute_force_decode;
use crate::hexgraph::{AbstainedPrediction, HexGraph, PredictionSpace};
use crate::losses::LossSpec;

/// A finite input space with a marginal and, per input, a conditional
/// distribution over legal labelings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteWorld {
    pub px: Vec<f64>,
    pub conditionals: Vec<Vec<(Vec<u8>, f64)>>,
}

impl FiniteWorld {
    pub fn validate(&self, g: &HexGraph) -> Result<(), ExperimentError> {
        if self.px.is_empty() || self.px.len() != self.conditionals.len() {
            return Err(ExperimentError::Config("world needs one conditional per input".into()));
        }
        let total: f64 = self.px.iter().sum();
        if self.px.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(ExperimentError::Config("marginal is not a distribution".into()));
        }
        for cond in &self.conditionals {
            let mass: f64 = cond.iter().map(|(_, p)| p).sum();
            if cond.iter().any(|(_, p)| *p < 0.0) || (mass - 1.0).abs() > 1e-9 {
                return Err(ExperimentError::Config("conditional is not a distribution".into()));
            }
            for (y, _) in cond {
                if !g.is_legal(y)? {
                    return Err(ExperimentError::Config("conditional puts mass on an illegal labeling".into()));
                }
            }
        }
        Ok(())
    }
}

/// `n_x` inputs with random marginal; each conditional is supported on a
/// random nonempty subset of the legal labelings.
pub fn random_world<R: Rng>(rng: &mut R, g: &HexGraph, n_x: usize, cap: usize) -> Result<FiniteWorld, ExperimentError> {
    let ys = g.enumerate_state_space(cap)?;
    let normalize = |v: Vec<f64>| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let px = normalize((0..n_x).map(|_| rng.random_range(0.05..1.0)).collect());
    let conditionals = (0..n_x)
        .map(|_| {
            let support: Vec<&[u8]> = loop {
                let s: Vec<&[u8]> = ys.iter().filter(|_| rng.random_bool(0.5)).map(|a| a.y.as_slice()).collect();
                if !s.is_empty() {
                    break s;
                }
            };
            let w = normalize(support.iter().map(|_| rng.random_range(0.01..1.0)).collect());
            support.into_iter().map(|y| y.to_vec()).zip(w).collect()
        })
        .collect();
    Ok(FiniteWorld { px, conditionals })
}

/// `g*(x) = E[ψ_wa(y) | x]`.
pub fn bayes_scores(spec: &LossSpec, world: &FiniteWorld) -> Result<Vec<Vec<f64>>, ExperimentError> {
    world
        .conditionals
        .iter()
        .map(|cond| {
            let mut g = vec![0.0; spec.q()];
            for (y, p) in cond {
                for (gv, v) in g.iter_mut().zip(spec.psi_wa(y)?) {
                    *gv += p * v;
                }
            }
            Ok(g)
        })
        .collect()
}

/// `R(f) = E_x E_{y|x} Δ(f(x), y)`.
pub fn true_risk(spec: &LossSpec, world: &FiniteWorld, preds: &[AbstainedPrediction]) -> Result<f64, ExperimentError> {
    let mut risk = 0.0;
    for ((px, cond), pred) in world.px.iter().zip(&world.conditionals).zip(preds) {
        for (y, p) in cond {
            risk += px * p * spec.loss_direct(&pred.y_h, &pred.y_r, y)?;
        }
    }
    Ok(risk)
}

/// `L(g) = E_x E_{y|x} ‖g(x) − ψ_wa(y)‖²`.
pub fn surrogate_risk(spec: &LossSpec, world: &FiniteWorld, g_est: &[Vec<f64>]) -> Result<f64, ExperimentError> {
    let mut risk = 0.0;
    for ((px, cond), gx) in world.px.iter().zip(&world.conditionals).zip(g_est) {
        for (y, p) in cond {
            let psi = spec.psi_wa(y)?;
            risk += px * p * gx.iter().zip(&psi).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
    }
    Ok(risk)
}

/// `c_l = ‖C‖₂ · max_{Y^{H,R}} ‖ψ_a‖`.
pub fn loss_constant(spec: &LossSpec, g: &HexGraph, space: &PredictionSpace, cap: usize) -> Result<f64, ExperimentError> {
    let norm = SVD::new(spec.cost().clone(), false, false).singular_values.max();
    let mut best: f64 = 0.0;
    for pred in g.enumerate_prediction_space(space, cap)? {
        let a = spec.psi_a(&pred.y_h, &pred.y_r)?;
        best = best.max(a.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    Ok(norm * best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskBoundReport {
    pub excess_risk: f64,
    pub surrogate_excess: f64,
    pub c_l: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Absolute slack on the final comparison, for floating-point summation order.
pub const BOUND_SLACK: f64 = 1e-12;

/// Decodes `g_est` and `g*` by enumeration and compares both sides.
pub fn risk_bound_check(
    spec: &LossSpec,
    g: &HexGraph,
    space: &PredictionSpace,
    world: &FiniteWorld,
    g_est: &[Vec<f64>],
    cap: usize,
) -> Result<RiskBoundReport, ExperimentError> {
    world.validate(g)?;
    if g_est.len() != world.px.len() {
        return Err(ExperimentError::Dimension { what: "estimates", expected: world.px.len(), actual: g_est.len() });
    }
    let g_star = bayes_scores(spec, world)?;
    let decode_all = |scores: &[Vec<f64>]| -> Result<Vec<AbstainedPrediction>, ExperimentError> {
        scores.iter().map(|s| Ok(brute_force_decode(spec, g, s, space, cap)?.0)).collect()
    };
    let excess_risk = true_risk(spec, world, &decode_all(g_est)?)? - true_risk(spec, world, &decode_all(&g_star)?)?;
    let surrogate_excess = (surrogate_risk(spec, world, g_est)? - surrogate_risk(spec, world, &g_star)?).max(0.0);
    let c_l = loss_constant(spec, g, space, cap)?;
    let bound = 2.0 * c_l * surrogate_excess.sqrt();
    Ok(RiskBoundReport { excess_risk, surrogate_excess, c_l, bound, holds: excess_risk <= bound + BOUND_SLACK })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::binary_abstention_spec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_estimate_has_zero_excess() {
        let g = HexGraph::new(3, &[(0, 1), (0, 2)], &[]).unwrap();
        let spec = crate::losses::haloss_spec(&g, &[1.0, 0.5, 0.5], 0.3, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let world = random_world(&mut rng, &g, 4, 10).unwrap();
        let g_star = bayes_scores(&spec, &world).unwrap();
        let rep = risk_bound_check(&spec, &g, &PredictionSpace::standard(), &world, &g_star, 10).unwrap();
        assert_eq!(rep.excess_risk, 0.0);
        assert!(rep.holds);
    }

    #[test]
    fn binary_loss_constant() {
        let g = HexGraph::new(1, &[], &[]).unwrap();
        let spec = binary_abstention_spec(0.3).unwrap();
        let norm = SVD::new(spec.cost().clone(), false, false).singular_values.max();
        let c_l = loss_constant(&spec, &g, &PredictionSpace::standard(), 10).unwrap();
        assert!((c_l - norm).abs() < 1e-15);
    }

    #[test]
    fn malformed_world_is_rejected() {
        let g = HexGraph::new(2, &[(0, 1)], &[]).unwrap();
        let world = FiniteWorld { px: vec![1.0], conditionals: vec![vec![(vec![0, 1], 1.0)]] };
        assert!(world.validate(&g).is_err());
    }
}
