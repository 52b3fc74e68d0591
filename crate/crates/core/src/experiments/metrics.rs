//! Evaluation metrics for predictions with abstention.

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::hexgraph::{AbstainedPrediction, HexGraph};

/// Which nodes an abstention removes from the Hamming count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionMode {
    /// Only the abstained nodes.
    Left,
    /// The abstained nodes and everything below them.
    Right,
}

/// Normalized Hamming distance between `h` and `y` over the nodes kept by
/// `mode`. Returns 0 when nothing is kept.
pub fn hamming_excluding_abstained(
    g: &HexGraph,
    pred: &AbstainedPrediction,
    y: &[u8],
    mode: ExclusionMode,
) -> Result<f64, ExperimentError> {
    let d = g.d();
    for (what, len) in [("prediction", pred.d()), ("target", y.len())] {
        if len != d {
            return Err(ExperimentError::Dimension { what, expected: d, actual: len });
        }
    }
    let mut excluded: Vec<bool> = pred.y_r.iter().map(|&r| r == 0).collect();
    if mode == ExclusionMode::Right {
        let mut stack: Vec<usize> = (0..d).filter(|&i| excluded[i]).collect();
        while let Some(node) = stack.pop() {
            for &c in g.children(node) {
                if !excluded[c] {
                    excluded[c] = true;
                    stack.push(c);
                }
            }
        }
    }
    let kept = excluded.iter().filter(|e| !**e).count();
    if kept == 0 {
        return Ok(0.0);
    }
    let wrong = (0..d).filter(|&i| !excluded[i] && pred.y_h[i] != y[i]).count();
    Ok(wrong as f64 / kept as f64)
}

/// Micro-averaged F1 over node labels; abstained nodes count nowhere. A set
/// with no positive predictions and no positive targets scores 1.
pub fn micro_f1(preds: &[AbstainedPrediction], truths: &[Vec<u8>]) -> Result<f64, ExperimentError> {
    if preds.is_empty() {
        return Err(ExperimentError::Empty("predictions"));
    }
    if preds.len() != truths.len() {
        return Err(ExperimentError::Dimension { what: "targets", expected: preds.len(), actual: truths.len() });
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, y) in preds.iter().zip(truths) {
        if y.len() != p.d() {
            return Err(ExperimentError::Dimension { what: "target", expected: p.d(), actual: y.len() });
        }
        for i in 0..p.d() {
            if p.y_r[i] == 0 {
                continue;
            }
            match (p.y_h[i], y[i]) {
                (1, 1) => tp += 1,
                (1, 0) => fp += 1,
                (0, 1) => fn_ += 1,
                _ => {}
            }
        }
    }
    if tp + fp + fn_ == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// `h − (1 − r)` componentwise, values in `{−1, 0, 1}`.
pub fn abstention_representation(pred: &AbstainedPrediction) -> Vec<f64> {
    pred.y_h.iter().zip(&pred.y_r).map(|(&h, &r)| f64::from(h) - (1.0 - f64::from(r))).collect()
}

/// Plain `h` as a real vector.
pub fn plain_representation(pred: &AbstainedPrediction) -> Vec<f64> {
    pred.y_h.iter().map(|&h| f64::from(h)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::opinion_tree;

    fn pred(h: &[u8], r: &[u8]) -> AbstainedPrediction {
        AbstainedPrediction::new(h.to_vec(), r.to_vec()).unwrap()
    }

    #[test]
    fn hamming_modes() {
        let g = opinion_tree(2, 2, false).unwrap();
        let y = [1, 1, 0, 1, 0, 0, 0];
        let p = pred(&[1, 0, 0, 0, 0, 0, 1], &[1; 7]);
        for mode in [ExclusionMode::Left, ExclusionMode::Right] {
            assert_eq!(hamming_excluding_abstained(&g, &p, &y, mode).unwrap(), 3.0 / 7.0);
        }
        // abstain on aspect 1: right mode also drops its polarities 3 and 4
        let p = pred(&[1, 0, 0, 0, 0, 0, 1], &[1, 0, 1, 1, 1, 1, 1]);
        assert_eq!(hamming_excluding_abstained(&g, &p, &y, ExclusionMode::Left).unwrap(), 2.0 / 6.0);
        assert_eq!(hamming_excluding_abstained(&g, &p, &y, ExclusionMode::Right).unwrap(), 1.0 / 4.0);
        // both aspects abstained: only the root is left in right mode
        let p = pred(&[1, 0, 0, 0, 0, 0, 1], &[1, 0, 0, 1, 1, 1, 1]);
        assert_eq!(hamming_excluding_abstained(&g, &p, &y, ExclusionMode::Right).unwrap(), 0.0);
        assert_eq!(hamming_excluding_abstained(&g, &p, &y, ExclusionMode::Left).unwrap(), 2.0 / 5.0);
    }

    #[test]
    fn micro_f1_by_hand() {
        let truths = vec![vec![1, 1], vec![1, 0], vec![0, 1], vec![0, 0]];
        // TP: (0,0),(1,0); FP: (3,1); FN: (2,1)
        let preds = vec![
            pred(&[1, 0], &[1, 0]),
            pred(&[1, 0], &[1, 1]),
            pred(&[0, 0], &[1, 1]),
            pred(&[0, 1], &[1, 1]),
        ];
        assert!((micro_f1(&preds, &truths).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let perfect: Vec<_> = truths.iter().map(|y| pred(y, &[1, 1])).collect();
        assert_eq!(micro_f1(&perfect, &truths).unwrap(), 1.0);
        let zeros: Vec<_> = truths.iter().map(|_| pred(&[0, 0], &[1, 1])).collect();
        assert_eq!(micro_f1(&zeros, &truths).unwrap(), 0.0);
        assert!(micro_f1(&[], &[]).is_err());
    }

    #[test]
    fn representation_values() {
        assert_eq!(abstention_representation(&pred(&[1, 0, 0], &[1, 0, 1])), vec![1.0, -1.0, 0.0]);
    }
}
