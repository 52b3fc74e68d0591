//! Exhaustive decoder over the enumerated prediction space. Reference oracle
//! for small graphs.

use super::DecodeError;
use crate::hexgraph::{AbstainedPrediction, HexGraph, PredictionSpace};
use crate::losses::LossSpec;

/// Minimizes `⟨Cᵀ ψ_x, ψ_a(y_h, y_r)⟩` by enumeration. Ties keep the
/// lexicographically smallest `(y_h, y_r)`.
pub fn brute_force_decode(
    spec: &LossSpec,
    g: &HexGraph,
    psi_x: &[f64],
    space: &PredictionSpace,
    cap: usize,
) -> Result<(AbstainedPrediction, f64), DecodeError> {
    if spec.d() != g.d() {
        return Err(DecodeError::Dimension { what: "loss size", expected: g.d(), actual: spec.d() });
    }
    let w = spec.fold_cost(psi_x)?;
    let mut best: Option<(AbstainedPrediction, f64)> = None;
    for pred in g.enumerate_prediction_space(space, cap)? {
        let psi_a = spec.psi_a_unchecked(&pred.y_h, &pred.y_r);
        let value: f64 = psi_a.iter().zip(&w).map(|(a, b)| a * b).sum();
        if best.as_ref().is_none_or(|(_, v)| value < *v) {
            best = Some((pred, value));
        }
    }
    best.ok_or(DecodeError::Infeasible)
}
