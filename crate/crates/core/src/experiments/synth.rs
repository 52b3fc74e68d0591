//! Opinion trees and the synthetic sentence generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::hexgraph::HexGraph;

/// Root → aspects → polarities. Node 0 is the root, aspects are `1..=A` and
/// polarity `k` of aspect `a` (0-based) is `A + 1 + a·P + k`.
pub fn opinion_tree(
    n_aspects: usize,
    n_polarities: usize,
    exclusive_polarities: bool,
) -> Result<HexGraph, ExperimentError> {
    if n_aspects == 0 || n_polarities == 0 {
        return Err(ExperimentError::Config("opinion tree needs at least one aspect and one polarity".into()));
    }
    let d = 1 + n_aspects * (1 + n_polarities);
    let mut hierarchy = Vec::with_capacity(d - 1);
    let mut exclusion = Vec::new();
    for a in 0..n_aspects {
        hierarchy.push((0, a + 1));
        for k in 0..n_polarities {
            hierarchy.push((a + 1, polarity_node(n_aspects, n_polarities, a, k)));
            if exclusive_polarities {
                for k2 in k + 1..n_polarities {
                    exclusion.push((
                        polarity_node(n_aspects, n_polarities, a, k),
                        polarity_node(n_aspects, n_polarities, a, k2),
                    ));
                }
            }
        }
    }
    Ok(HexGraph::new(d, &hierarchy, &exclusion)?)
}

pub fn aspect_nodes(n_aspects: usize) -> Vec<usize> {
    (1..=n_aspects).collect()
}

pub fn polarity_node(n_aspects: usize, n_polarities: usize, aspect: usize, k: usize) -> usize {
    n_aspects + 1 + aspect * n_polarities + k
}

/// One input with its legal labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub feature_dim: usize,
    /// Probability that a node's feature contribution is flipped.
    #[serde(default)]
    pub noise: f64,
    /// Nodes whose contribution flips with `hard_noise` instead.
    #[serde(default)]
    pub hard_nodes: Vec<usize>,
    #[serde(default = "default_hard_noise")]
    pub hard_noise: f64,
    /// Probability that a child of an active node is active.
    #[serde(default = "default_activation")]
    pub activation: f64,
    /// Standard deviation of the additive gaussian feature noise.
    #[serde(default = "default_feature_noise")]
    pub feature_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_hard_noise() -> f64 {
    0.35
}

fn default_activation() -> f64 {
    0.4
}

fn default_feature_noise() -> f64 {
    0.1
}

impl SyntheticConfig {
    pub fn new(n_train: usize, n_test: usize, feature_dim: usize, seed: u64) -> Self {
        Self {
            n_train,
            n_test,
            feature_dim,
            noise: 0.0,
            hard_nodes: Vec::new(),
            hard_noise: default_hard_noise(),
            activation: default_activation(),
            feature_noise: default_feature_noise(),
            seed,
        }
    }

    pub fn validate(&self, d: usize) -> Result<(), ExperimentError> {
        let prob = |name: &str, v: f64, hi: f64| {
            if (0.0..hi).contains(&v) {
                Ok(())
            } else {
                Err(ExperimentError::Config(format!("{name} = {v} outside [0, {hi})")))
            }
        };
        prob("noise", self.noise, 0.5)?;
        prob("hard_noise", self.hard_noise, 0.5)?;
        if !(0.0..=1.0).contains(&self.activation) {
            return Err(ExperimentError::Config(format!("activation = {} outside [0, 1]", self.activation)));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(ExperimentError::Config(format!("feature_noise = {} must be non-negative", self.feature_noise)));
        }
        if self.feature_dim == 0 {
            return Err(ExperimentError::Config("feature_dim must be positive".into()));
        }
        if let Some(&n) = self.hard_nodes.iter().find(|&&n| n >= d) {
            return Err(ExperimentError::Config(format!("hard node {n} outside the graph (d = {d})")));
        }
        Ok(())
    }
}

/// Draws a legal labeling top-down: node 0 is always on, every other node
/// switches on with probability `activation` once all its parents are on and
/// no exclusion neighbour is.
pub fn sample_labeling<R: Rng>(rng: &mut R, g: &HexGraph, activation: f64) -> Vec<u8> {
    let d = g.d();
    let mut parents = vec![Vec::new(); d];
    for &(p, c) in g.hierarchy_edges() {
        parents[c].push(p);
    }
    let mut y = vec![0u8; d];
    for node in g.topological_order() {
        let draw: f64 = rng.random();
        let open = parents[node].iter().all(|&p| y[p] == 1)
            && g.exclusion_edges().iter().all(|&(i, j)| !((i == node && y[j] == 1) || (j == node && y[i] == 1)));
        if open && (node == 0 || draw < activation) {
            y[node] = 1;
        }
    }
    y
}

/// Train and test sets from one seeded stream. Each node owns a gaussian
/// prototype; a sample's features are the sum of the prototypes of its
/// active nodes, after flipping each node with its noise level, plus
/// isotropic gaussian noise. Emitted labels are always the clean, legal ones.
pub fn synth_dataset(g: &HexGraph, cfg: &SyntheticConfig) -> Result<(Vec<Sample>, Vec<Sample>), ExperimentError> {
    let d = g.d();
    cfg.validate(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let prototypes = prototypes(&mut rng, d, cfg.feature_dim);
    let train = (0..cfg.n_train).map(|_| draw_sample(&mut rng, g, cfg, &prototypes)).collect();
    let test = (0..cfg.n_test).map(|_| draw_sample(&mut rng, g, cfg, &prototypes)).collect();
    Ok((train, test))
}

pub(crate) fn prototypes<R: Rng>(rng: &mut R, d: usize, m: usize) -> Vec<Vec<f64>> {
    (0..d).map(|_| (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect()
}

pub(crate) fn draw_sample<R: Rng>(rng: &mut R, g: &HexGraph, cfg: &SyntheticConfig, prototypes: &[Vec<f64>]) -> Sample {
    let y = sample_labeling(rng, g, cfg.activation);
    let x = features_for(rng, &y, cfg, prototypes);
    Sample { x, y }
}

pub(crate) fn features_for<R: Rng>(rng: &mut R, y: &[u8], cfg: &SyntheticConfig, prototypes: &[Vec<f64>]) -> Vec<f64> {
    let mut x = vec![0.0; cfg.feature_dim];
    for (i, &yi) in y.iter().enumerate() {
        let p = if cfg.hard_nodes.contains(&i) { cfg.hard_noise } else { cfg.noise };
        let flip: f64 = rng.random();
        let on = (yi == 1) != (flip < p);
        if on {
            for (xv, pv) in x.iter_mut().zip(&prototypes[i]) {
                *xv += pv;
            }
        }
    }
    for xv in &mut x {
        *xv += cfg.feature_noise * rng.sample::<f64, _>(StandardNormal);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::sibling_weights;

    #[test]
    fn opinion_tree_sizes() {
        assert_eq!(opinion_tree(10, 3, false).unwrap().d(), 41);
        let chain = opinion_tree(1, 1, false).unwrap();
        assert_eq!(chain.d(), 3);
        assert_eq!(chain.parent(1), Some(0));
        assert_eq!(chain.parent(2), Some(1));
        let g = opinion_tree(2, 2, false).unwrap();
        assert_eq!(g.d(), 7);
        let c = sibling_weights(&g).unwrap();
        assert_eq!(c, vec![1.0, 0.5, 0.5, 0.25, 0.25, 0.25, 0.25]);
        assert_eq!(g.parent(polarity_node(2, 2, 1, 0)), Some(2));
    }

    #[test]
    fn exclusive_polarities_add_sibling_edges() {
        let g = opinion_tree(2, 3, true).unwrap();
        assert_eq!(g.exclusion_edges().len(), 6);
        assert!(opinion_tree(0, 3, false).is_err());
    }

    #[test]
    fn labels_are_legal_and_seeded() {
        let g = opinion_tree(3, 3, true).unwrap();
        let mut cfg = SyntheticConfig::new(40, 10, 8, 9);
        cfg.noise = 0.2;
        cfg.hard_nodes = vec![1];
        let (train, test) = synth_dataset(&g, &cfg).unwrap();
        assert!(train.iter().chain(&test).all(|s| g.is_legal(&s.y).unwrap() && s.y[0] == 1));
        let again = synth_dataset(&g, &cfg).unwrap();
        assert_eq!(train, again.0);
        assert_eq!(test, again.1);
    }

    #[test]
    fn noiseless_features_are_a_function_of_the_labels() {
        let g = opinion_tree(2, 2, false).unwrap();
        let mut cfg = SyntheticConfig::new(60, 0, 5, 1);
        cfg.feature_noise = 0.0;
        let (train, _) = synth_dataset(&g, &cfg).unwrap();
        for a in &train {
            for b in &train {
                if a.y == b.y {
                    assert_eq!(a.x, b.x);
                }
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let g = opinion_tree(1, 1, false).unwrap();
        let mut cfg = SyntheticConfig::new(1, 1, 2, 0);
        cfg.noise = 0.5;
        assert!(synth_dataset(&g, &cfg).is_err());
        let mut cfg = SyntheticConfig::new(1, 1, 2, 0);
        cfg.hard_nodes = vec![3];
        assert!(synth_dataset(&g, &cfg).is_err());
    }
}
