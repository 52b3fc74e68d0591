//! Synthetic data, metrics, abstention sweeps, the star-rating pipeline and
//! the excess-risk bound check.

pub mod metrics;
pub mod pipeline;
pub mod risk;
pub mod sweep;
pub mod synth;

use thiserror::Error;

pub use metrics::{abstention_representation, hamming_excluding_abstained, micro_f1, ExclusionMode};
pub use pipeline::{star_pipeline, synth_reviews, PipelineReport, Review, ReviewConfig, SentenceDecoder};
pub use risk::{risk_bound_check, FiniteWorld, RiskBoundReport};
pub use sweep::{sweep_abstention, SweepCell, SweepGrid, SweepResult, CURVE_HEADER};
pub use synth::{aspect_nodes, opinion_tree, polarity_node, synth_dataset, Sample, SyntheticConfig};

use crate::decode::DecodeError;
use crate::hexgraph::GraphError;
use crate::losses::LossError;
use crate::surrogate::SurrogateError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("{0}")]
    Config(String),
    #[error("{what}: expected {expected}, got {actual}")]
    Dimension { what: &'static str, expected: usize, actual: usize },
    #[error("no {0} to evaluate")]
    Empty(&'static str),
}
