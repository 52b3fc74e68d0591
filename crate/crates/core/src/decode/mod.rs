//! Decoding: `argmin_{(y_h, y_r)} ⟨ĝ(x), C ψ_a(y_h, y_r)⟩` over the
//! prediction space, solved exactly as a small integer program.

pub mod bnb;
pub mod brute;
pub mod ilp;
pub mod simplex;

use thiserror::Error;

pub use bnb::{branch_and_bound, branch_and_bound_with, solve_lp_relaxation, BnbOptions, BnbReport};
pub use brute::brute_force_decode;
pub use ilp::{build_ilp, IlpInstance, RowKind, VarRole};
pub use simplex::{LpError, LpOutcome, LpProblem};

use crate::hexgraph::{GraphError, HexGraph, PredictionSpace};
use crate::losses::{LossError, LossSpec};
use crate::surrogate::{SurrogateError, TrainedSurrogate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("{what}: expected {expected}, got {actual}")]
    Dimension { what: &'static str, expected: usize, actual: usize },
    #[error("non-finite score vector")]
    NonFinite,
    #[error("prediction space is empty")]
    Infeasible,
    #[error("warm start is not a feasible point")]
    InvalidWarmStart,
    #[error("branch and bound exceeded {0} nodes")]
    NodeLimit(usize),
}

/// Decodes a score vector `ψ_x` (typically `ĝ(x)`).
///
/// When the space allows abstention, the best abstention-free labeling is
/// decoded first and seeds the search as its incumbent.
pub fn decode_scores(
    spec: &LossSpec,
    g: &HexGraph,
    psi_x: &[f64],
    space: &PredictionSpace,
) -> Result<BnbReport, DecodeError> {
    let d = g.d();
    let full = build_ilp(spec, g, psi_x, space)?;
    let mut warm = None;
    if space.allows_any_abstention(d) {
        let plain = build_ilp(spec, g, psi_x, &space.no_abstention(d))?;
        match branch_and_bound(&plain, None) {
            Ok(report) => warm = Some(report.optimum),
            // the literal consecutive rule can forbid the all-predict reject vector
            Err(DecodeError::Infeasible) => {}
            Err(e) => return Err(e),
        }
    }
    let warm = warm.filter(|w| full.is_feasible(&full.point(&w.y_h, &w.y_r)));
    branch_and_bound(&full, warm.as_ref())
}

/// Decodes the input `x` with a trained surrogate.
pub fn decode(
    model: &TrainedSurrogate,
    spec: &LossSpec,
    g: &HexGraph,
    x: &[f64],
    space: &PredictionSpace,
) -> Result<BnbReport, DecodeError> {
    if model.q() != spec.q() {
        return Err(DecodeError::Dimension { what: "model output size", expected: spec.q(), actual: model.q() });
    }
    let psi_x = model.g_hat(x)?;
    decode_scores(spec, g, &psi_x, space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hexgraph::ConsecutiveRule;
    use crate::losses::{binary_abstention_spec, haloss_spec, hloss_spec, sibling_weights};

    fn star() -> HexGraph {
        HexGraph::new(4, &[(0, 1), (0, 2), (2, 3)], &[]).unwrap()
    }

    #[test]
    fn binary_decoder_abstains_near_the_boundary() {
        let g = HexGraph::new(1, &[], &[]).unwrap();
        let spec = binary_abstention_spec(0.3).unwrap();
        // ψ_wa(y) for the binary loss puts mass on the target; equal scores mean
        // the posterior is split and abstaining at cost 0.3 wins
        let psi_one = spec.psi_wa(&[1]).unwrap();
        let psi_zero = spec.psi_wa(&[0]).unwrap();
        let mixed: Vec<f64> = psi_one.iter().zip(&psi_zero).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
        let rep = decode_scores(&spec, &g, &mixed, &PredictionSpace::standard()).unwrap();
        assert_eq!(rep.optimum.y_r, vec![0]);
        let rep = decode_scores(&spec, &g, &psi_one, &PredictionSpace::standard()).unwrap();
        assert_eq!((rep.optimum.y_h[0], rep.optimum.y_r[0]), (1, 1));
    }

    #[test]
    fn matches_brute_force_on_a_small_tree() {
        let g = star();
        let c = sibling_weights(&g).unwrap();
        let spec = haloss_spec(&g, &c, 0.2, 0.7).unwrap();
        for seed in 0..20u32 {
            let psi: Vec<f64> = (0..spec.q()).map(|k| ((k as f64 + 1.0) * (seed as f64 + 0.3)).sin()).collect();
            for space in [
                PredictionSpace::standard(),
                PredictionSpace::standard().strict(true),
                PredictionSpace { consecutive: ConsecutiveRule::Literal, ..PredictionSpace::standard() },
            ] {
                let rep = decode_scores(&spec, &g, &psi, &space).unwrap();
                let (_, best) = brute_force_decode(&spec, &g, &psi, &space, 10).unwrap();
                assert!((rep.objective_value - best).abs() < 1e-9, "{} vs {best}", rep.objective_value);
                assert!(space.contains(&g, &rep.optimum).unwrap());
            }
        }
    }

    #[test]
    fn hloss_root_is_integral_on_legal_scores() {
        let g = star();
        let c = sibling_weights(&g).unwrap();
        let spec = hloss_spec(&g, &c).unwrap();
        let psi = spec.psi_wa(&[1, 0, 1, 1]).unwrap();
        let rep = decode_scores(&spec, &g, &psi, &PredictionSpace::without_abstention(4)).unwrap();
        assert_eq!(rep.optimum.y_h, vec![1, 0, 1, 1]);
        assert!(rep.lp_integral_at_root);
        assert_eq!(rep.nodes_explored, 1);
        assert!(!rep.warm_start_used);
    }

    #[test]
    fn invalid_warm_start_is_rejected() {
        let g = star();
        let spec = hloss_spec(&g, &sibling_weights(&g).unwrap()).unwrap();
        let ilp = build_ilp(&spec, &g, &vec![0.0; spec.q()], &PredictionSpace::standard().strict(true)).unwrap();
        let bad = crate::hexgraph::AbstainedPrediction::predict_all(vec![0, 1, 0, 0]);
        assert_eq!(branch_and_bound(&ilp, Some(&bad)).unwrap_err(), DecodeError::InvalidWarmStart);
    }
}
