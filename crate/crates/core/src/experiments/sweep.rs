//! Abstention sweeps over a `(K_A, K_Ac)` grid of Ha-losses.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{hamming_excluding_abstained, ExclusionMode};
use super::synth::Sample;
use super::ExperimentError;
use crate::decode::decode_scores;
use crate::hexgraph::{HexGraph, PredictionSpace};
use crate::losses::haloss_spec_with_rule;
use crate::surrogate::TrainedSurrogate;

pub const CURVE_HEADER: &str = "K_A,K_Ac,mean_abstentions,hamming_left,hamming_right,weighted_abstention_coeff";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub k_a: Vec<f64>,
    pub k_ac: Vec<f64>,
}

impl Default for SweepGrid {
    /// `K_A ∈ {0, 0.05, …, 0.5}`, `K_Ac ∈ {0.25, 0.5, 0.75}`.
    fn default() -> Self {
        Self { k_a: (0..=10).map(|i| f64::from(i) / 20.0).collect(), k_ac: vec![0.25, 0.5, 0.75] }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.k_a.is_empty() || self.k_ac.is_empty() {
            return Err(ExperimentError::Config("sweep grids must be nonempty".into()));
        }
        if self.k_a.iter().chain(&self.k_ac).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ExperimentError::Config("sweep multipliers must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub k_a: f64,
    pub k_ac: f64,
    pub mean_abstentions: f64,
    pub hamming_left: f64,
    pub hamming_right: f64,
    /// Mean over samples of the `K_A` coefficient of the objective at the optimum.
    pub weighted_abstention_coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Sorted by `(K_Ac, K_A)`.
    pub cells: Vec<SweepCell>,
    /// Mean Hamming of the abstention-free decoder on the same samples.
    pub no_abstention_hamming: f64,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CURVE_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.k_a, c.k_ac, c.mean_abstentions, c.hamming_left, c.hamming_right, c.weighted_abstention_coeff
            );
        }
        out
    }
}

/// Decodes `samples` under every grid cell. The Ha-loss feature map does not
/// depend on the multipliers, so one surrogate serves the whole grid.
pub fn sweep_abstention(
    model: &TrainedSurrogate,
    g: &HexGraph,
    c: &[f64],
    samples: &[Sample],
    grid: &SweepGrid,
    space: &PredictionSpace,
) -> Result<SweepResult, ExperimentError> {
    grid.validate()?;
    if samples.is_empty() {
        return Err(ExperimentError::Empty("sweep samples"));
    }
    let scores: Vec<Vec<f64>> =
        samples.par_iter().map(|s| model.g_hat(&s.x)).collect::<Result<_, _>>()?;
    let d = g.d();
    let n = samples.len() as f64;

    let reference = haloss_spec_with_rule(g, c, grid.k_a[0], grid.k_ac[0], space.consecutive)?;
    if reference.q() != model.q() {
        return Err(ExperimentError::Dimension { what: "model output size", expected: reference.q(), actual: model.q() });
    }
    let plain_space = space.no_abstention(d);
    let plain: Vec<f64> = samples
        .par_iter()
        .zip(&scores)
        .map(|(s, psi)| {
            let rep = decode_scores(&reference, g, psi, &plain_space)?;
            hamming_excluding_abstained(g, &rep.optimum, &s.y, ExclusionMode::Left)
        })
        .collect::<Result<_, ExperimentError>>()?;

    let mut pairs: Vec<(f64, f64)> =
        grid.k_ac.iter().flat_map(|&k_ac| grid.k_a.iter().map(move |&k_a| (k_a, k_ac))).collect();
    pairs.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));

    let mut cells = Vec::with_capacity(pairs.len());
    for (k_a, k_ac) in pairs {
        let spec = haloss_spec_with_rule(g, c, k_a, k_ac, space.consecutive)?;
        let rows: Vec<[f64; 4]> = samples
            .par_iter()
            .zip(&scores)
            .map(|(s, psi)| {
                let rep = decode_scores(&spec, g, psi, space)?;
                let p = &rep.optimum;
                Ok([
                    p.abstention_count() as f64,
                    hamming_excluding_abstained(g, p, &s.y, ExclusionMode::Left)?,
                    hamming_excluding_abstained(g, p, &s.y, ExclusionMode::Right)?,
                    spec.abstention_coefficient(psi, &p.y_h, &p.y_r)?,
                ])
            })
            .collect::<Result<_, ExperimentError>>()?;
        let mean = |k: usize| rows.iter().map(|r| r[k]).sum::<f64>() / n;
        cells.push(SweepCell {
            k_a,
            k_ac,
            mean_abstentions: mean(0),
            hamming_left: mean(1),
            hamming_right: mean(2),
            weighted_abstention_coeff: mean(3),
        });
    }
    Ok(SweepResult { cells, no_abstention_hamming: plain.iter().sum::<f64>() / n })
}
