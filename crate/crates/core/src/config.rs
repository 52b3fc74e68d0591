//! Run configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::experiments::{opinion_tree, ReviewConfig, SweepGrid, SyntheticConfig};
use crate::hexgraph::{
    ConsecutiveRule, HexGraph, HierarchyRule, PredictionSpace, DEFAULT_PREDICTION_SPACE_CAP,
    DEFAULT_STATE_SPACE_CAP,
};
use crate::losses::{self, LossKind, LossSpec};
use crate::surrogate::KernelConfig;
use crate::verify::VerifyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default = "KernelConfig::linear")]
    pub kernel: KernelConfig,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub strict: bool,
    /// Output directory; `--out` takes precedence.
    pub out: Option<PathBuf>,
    pub data: Option<DataSection>,
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub sweep: SweepGrid,
    pub pipeline: Option<PipelineSection>,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn default_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// Graph in the text (`.txt`) or JSON (`.json`) graph format.
    pub file: Option<PathBuf>,
    pub opinion_tree: Option<OpinionTreeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpinionTreeSpec {
    pub aspects: usize,
    pub polarities: usize,
    #[serde(default)]
    pub exclusive_polarities: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSpec {
    Named(String),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AbstainSpec {
    Named(String),
    Nodes(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    #[serde(default = "default_kind")]
    pub kind: LossKind,
    /// `"sibling"`, `"uniform"` or an explicit per-node list.
    #[serde(default = "default_weights")]
    pub weights: WeightsSpec,
    #[serde(default = "default_k_a")]
    pub k_a: f64,
    #[serde(default = "default_k_ac")]
    pub k_ac: f64,
    #[serde(default = "default_reject_cost")]
    pub reject_cost: f64,
    #[serde(default)]
    pub consecutive: ConsecutiveRule,
    /// `"all"`, `"aspects"` (children of the root), `"none"` or a node list.
    #[serde(default = "default_abstain")]
    pub abstain: AbstainSpec,
}

fn default_kind() -> LossKind {
    LossKind::HaLoss
}

fn default_weights() -> WeightsSpec {
    WeightsSpec::Named("sibling".into())
}

fn default_k_a() -> f64 {
    0.2
}

fn default_k_ac() -> f64 {
    0.5
}

fn default_reject_cost() -> f64 {
    0.3
}

fn default_abstain() -> AbstainSpec {
    AbstainSpec::Named("all".into())
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            weights: default_weights(),
            k_a: default_k_a(),
            k_ac: default_k_ac(),
            reject_cost: default_reject_cost(),
            consecutive: ConsecutiveRule::default(),
            abstain: default_abstain(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train: PathBuf,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    #[serde(flatten)]
    pub reviews: ReviewConfig,
    #[serde(default = "default_lambda")]
    pub rating_lambda: f64,
    /// Review files; synthetic reviews are drawn when absent.
    pub train_sentences: Option<PathBuf>,
    pub train_ratings: Option<PathBuf>,
    pub test_sentences: Option<PathBuf>,
    pub test_ratings: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Caps {
    pub prediction_space: usize,
    pub state_space: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self { prediction_space: DEFAULT_PREDICTION_SPACE_CAP, state_space: DEFAULT_STATE_SPACE_CAP }
    }
}

/// Configuration problems (exit 2) versus missing or malformed inputs (exit 3).
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Invalid(String),
    Data(String),
}

impl RunConfig {
    /// Parses the TOML text; relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(f) = cfg.graph.file.as_mut() {
            fix(f);
        }
        if let Some(f) = cfg.out.as_mut() {
            fix(f);
        }
        if let Some(data) = cfg.data.as_mut() {
            fix(&mut data.train);
            if let Some(t) = data.test.as_mut() {
                fix(t);
            }
        }
        if let Some(p) = cfg.pipeline.as_mut() {
            for f in [&mut p.train_sentences, &mut p.train_ratings, &mut p.test_sentences, &mut p.test_ratings]
                .into_iter()
                .flatten()
            {
                fix(f);
            }
        }
        Ok(cfg)
    }

    /// Range checks and file existence, before any computation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        self.kernel.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let l = &self.loss;
        if !(l.k_a >= 0.0 && l.k_ac >= 0.0 && l.k_a.is_finite() && l.k_ac.is_finite()) {
            return bad(format!("K_A and K_Ac must be non-negative (K_A={}, K_Ac={})", l.k_a, l.k_ac));
        }
        if !(0.0..=0.5).contains(&l.reject_cost) {
            return bad(format!("reject_cost {} outside [0, 0.5]", l.reject_cost));
        }
        match (&self.graph.file, &self.graph.opinion_tree) {
            (Some(_), Some(_)) => return bad("graph: give either `file` or `opinion_tree`, not both".into()),
            (None, None) => return bad("graph: one of `file` or `opinion_tree` is required".into()),
            _ => {}
        }
        self.sweep.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(p) = &self.pipeline {
            if !(p.rating_lambda > 0.0 && p.rating_lambda.is_finite()) {
                return bad(format!("pipeline.rating_lambda must be positive, got {}", p.rating_lambda));
            }
            let files = [&p.train_sentences, &p.train_ratings, &p.test_sentences, &p.test_ratings];
            let given = files.iter().filter(|f| f.is_some()).count();
            if given != 0 && given != 4 {
                return bad("pipeline: give all four review files or none".into());
            }
        }
        let mut files: Vec<&PathBuf> = Vec::new();
        files.extend(self.graph.file.iter());
        if let Some(d) = &self.data {
            files.push(&d.train);
            files.extend(d.test.iter());
        }
        if let Some(p) = &self.pipeline {
            files.extend([&p.train_sentences, &p.train_ratings, &p.test_sentences, &p.test_ratings].into_iter().flatten());
        }
        if let Some(missing) = files.into_iter().find(|f| !f.exists()) {
            return Err(ConfigError::Data(format!("{}: file not found", missing.display())));
        }
        Ok(())
    }

    pub fn build_graph(&self) -> Result<HexGraph, ConfigError> {
        if let Some(t) = &self.graph.opinion_tree {
            return opinion_tree(t.aspects, t.polarities, t.exclusive_polarities)
                .map_err(|e| ConfigError::Invalid(e.to_string()));
        }
        let path = self.graph.file.as_ref().ok_or_else(|| ConfigError::Invalid("graph missing".into()))?;
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Data(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            HexGraph::from_json(&text)
        } else {
            HexGraph::from_text(&text)
        }
        .map_err(|e| ConfigError::Data(format!("{}: {e}", path.display())))
    }

    pub fn weights(&self, g: &HexGraph) -> Result<Vec<f64>, ConfigError> {
        match &self.loss.weights {
            WeightsSpec::Named(n) if n == "sibling" => {
                losses::sibling_weights(g).map_err(|e| ConfigError::Invalid(e.to_string()))
            }
            WeightsSpec::Named(n) if n == "uniform" => Ok(vec![1.0; g.d()]),
            WeightsSpec::Named(n) => Err(ConfigError::Invalid(format!("unknown weight scheme `{n}`"))),
            WeightsSpec::Explicit(w) => Ok(w.clone()),
        }
    }

    /// The configured loss on `g`, with `K_A`/`K_Ac` overridable for sweeps.
    pub fn build_spec(&self, g: &HexGraph) -> Result<LossSpec, ConfigError> {
        let l = &self.loss;
        let inv = |e: losses::LossError| ConfigError::Invalid(e.to_string());
        match l.kind {
            LossKind::BinaryAbstention => {
                if g.d() != 1 {
                    return Err(ConfigError::Invalid("binary_abstention needs a single-node graph".into()));
                }
                losses::binary_abstention_spec(l.reject_cost).map_err(inv)
            }
            LossKind::Hamming => losses::hamming_spec(g.d()).map_err(inv),
            LossKind::HLoss => losses::hloss_spec_with_rule(g, &self.weights(g)?, l.consecutive).map_err(inv),
            LossKind::HaLoss => {
                losses::haloss_spec_with_rule(g, &self.weights(g)?, l.k_a, l.k_ac, l.consecutive).map_err(inv)
            }
        }
    }

    /// Prediction space from the loss section and the strict flag.
    pub fn build_space(&self, g: &HexGraph, strict: bool, no_abstention: bool) -> Result<PredictionSpace, ConfigError> {
        let d = g.d();
        let mut space = PredictionSpace {
            hierarchy: if strict || self.strict { HierarchyRule::Strict } else { HierarchyRule::Relaxed },
            consecutive: self.loss.consecutive,
            abstainable: None,
        };
        if no_abstention {
            return Ok(space.no_abstention(d));
        }
        match &self.loss.abstain {
            AbstainSpec::Named(n) if n == "all" => {}
            AbstainSpec::Named(n) if n == "none" => space = space.no_abstention(d),
            AbstainSpec::Named(n) if n == "aspects" => {
                let aspects: Vec<usize> = g.children(0).to_vec();
                space = space.abstain_only_on(d, &aspects);
            }
            AbstainSpec::Named(n) => return Err(ConfigError::Invalid(format!("unknown abstain setting `{n}`"))),
            AbstainSpec::Nodes(nodes) => {
                if let Some(&n) = nodes.iter().find(|&&n| n >= d) {
                    return Err(ConfigError::Invalid(format!("abstain node {n} outside the graph (d = {d})")));
                }
                space = space.abstain_only_on(d, nodes);
            }
        }
        Ok(space)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
        seed = 3
        lambda = 0.5
        [graph]
        opinion_tree = { aspects = 2, polarities = 2 }
        [loss]
        kind = "ha_loss"
        k_a = 0.1
        abstain = "aspects"
        [synthetic]
        n_train = 10
        n_test = 5
        feature_dim = 4
    "#;

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::from_toml(BASIC, Path::new(".")).unwrap();
        cfg.validate().unwrap();
        let g = cfg.build_graph().unwrap();
        assert_eq!(g.d(), 7);
        let spec = cfg.build_spec(&g).unwrap();
        assert_eq!(spec.k_a(), 0.1);
        let space = cfg.build_space(&g, false, false).unwrap();
        assert_eq!(space.abstainable, Some(vec![false, true, true, false, false, false, false]));
        assert_eq!(cfg.build_space(&g, true, true).unwrap().hierarchy, HierarchyRule::Strict);
        assert_eq!(cfg.sweep, SweepGrid::default());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let cfg = RunConfig::from_toml(&BASIC.replace("lambda = 0.5", "lambda = 0.0"), Path::new(".")).unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
        assert!(matches!(
            RunConfig::from_toml(&format!("{BASIC}\nbogus = 1\n"), Path::new(".")),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn missing_files_are_data_errors() {
        let text = BASIC.replace("[synthetic]", "[data]\ntrain = \"nope.txt\"\n[synthetic]");
        let cfg = RunConfig::from_toml(&text, Path::new("/tmp/x")).unwrap();
        match cfg.validate() {
            Err(ConfigError::Data(m)) => assert!(m.contains("/tmp/x/nope.txt")),
            other => panic!("{other:?}"),
        }
    }
}
