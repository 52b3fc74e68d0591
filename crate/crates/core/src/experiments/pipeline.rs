//! Review-level star rating from averaged sentence-level representations.
//!
//! One linear ridge regressor per overall aspect is fitted on the averaged
//! true sentence labels of the training reviews. At test time it is fed the
//! averaged true labels (oracle), the averaged abstention-free predictions,
//! or the averaged abstention-aware representations `h − (1 − r)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{abstention_representation, plain_representation};
use super::synth::{features_for, polarity_node, prototypes, sample_labeling, Sample, SyntheticConfig};
use super::ExperimentError;
use crate::decode::decode_scores;
use crate::hexgraph::{HexGraph, PredictionSpace};
use crate::losses::LossSpec;
use crate::surrogate::{fit_ridge, KernelConfig, TrainedSurrogate};

#[derive(Debug, Clone, PartialEq)]
pub struct Review {
    pub id: usize,
    pub sentences: Vec<Sample>,
    /// One rating in `{−1, 0, 1}` per overall aspect.
    pub ratings: Vec<i8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewConfig {
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default = "default_min_sentences")]
    pub min_sentences: usize,
    #[serde(default = "default_max_sentences")]
    pub max_sentences: usize,
    #[serde(default = "default_n_overall")]
    pub n_overall: usize,
    /// Averaged polarity beyond which a rating is ±1.
    #[serde(default = "default_threshold")]
    pub rating_threshold: f64,
}

fn default_min_sentences() -> usize {
    5
}

fn default_max_sentences() -> usize {
    15
}

fn default_n_overall() -> usize {
    5
}

fn default_threshold() -> f64 {
    0.05
}

impl ReviewConfig {
    pub fn new(n_train: usize, n_test: usize) -> Self {
        Self {
            n_train,
            n_test,
            min_sentences: default_min_sentences(),
            max_sentences: default_max_sentences(),
            n_overall: default_n_overall(),
            rating_threshold: default_threshold(),
        }
    }

    pub fn validate(&self, n_aspects: usize) -> Result<(), ExperimentError> {
        if self.min_sentences == 0 || self.min_sentences > self.max_sentences {
            return Err(ExperimentError::Config("need 1 ≤ min_sentences ≤ max_sentences".into()));
        }
        if self.n_overall == 0 || self.n_overall > n_aspects {
            return Err(ExperimentError::Config(format!(
                "n_overall = {} must lie in 1..={n_aspects}",
                self.n_overall
            )));
        }
        if !(self.rating_threshold >= 0.0 && self.rating_threshold.is_finite()) {
            return Err(ExperimentError::Config("rating_threshold must be non-negative".into()));
        }
        Ok(())
    }
}

/// Rates overall aspect `k` from the sentence labels: aspects `a` with
/// `a mod n_overall = k` contribute `positive − negative` (polarities 0 and 1),
/// averaged over the group and the sentences, then thresholded.
pub fn rate_review(
    labels: &[Vec<u8>],
    n_aspects: usize,
    n_polarities: usize,
    n_overall: usize,
    threshold: f64,
) -> Vec<i8> {
    (0..n_overall)
        .map(|k| {
            let group: Vec<usize> = (0..n_aspects).filter(|a| a % n_overall == k).collect();
            let mut score = 0.0;
            for y in labels {
                for &a in &group {
                    let pos = f64::from(y[polarity_node(n_aspects, n_polarities, a, 0)]);
                    let neg = if n_polarities > 1 {
                        f64::from(y[polarity_node(n_aspects, n_polarities, a, 1)])
                    } else {
                        0.0
                    };
                    score += pos - neg;
                }
            }
            score /= (labels.len() * group.len()) as f64;
            if score > threshold {
                1
            } else if score < -threshold {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// Seeded synthetic reviews on `opinion_tree(n_aspects, n_polarities)`.
/// Sentences follow `sentence`; its sample counts are not used.
pub fn synth_reviews(
    g: &HexGraph,
    n_aspects: usize,
    n_polarities: usize,
    sentence: &SyntheticConfig,
    cfg: &ReviewConfig,
) -> Result<(Vec<Review>, Vec<Review>), ExperimentError> {
    if g.d() != 1 + n_aspects * (1 + n_polarities) {
        return Err(ExperimentError::Config("graph is not the opinion tree of the given shape".into()));
    }
    sentence.validate(g.d())?;
    cfg.validate(n_aspects)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sentence.seed);
    let protos = prototypes(&mut rng, g.d(), sentence.feature_dim);
    let mut draw = |id: usize| {
        let n = rng.random_range(cfg.min_sentences..=cfg.max_sentences);
        let sentences: Vec<Sample> = (0..n)
            .map(|_| {
                let y = sample_labeling(&mut rng, g, sentence.activation);
                let x = features_for(&mut rng, &y, sentence, &protos);
                Sample { x, y }
            })
            .collect();
        let labels: Vec<Vec<u8>> = sentences.iter().map(|s| s.y.clone()).collect();
        let ratings = rate_review(&labels, n_aspects, n_polarities, cfg.n_overall, cfg.rating_threshold);
        Review { id, sentences, ratings }
    };
    let train = (0..cfg.n_train).map(&mut draw).collect();
    let test = (cfg.n_train..cfg.n_train + cfg.n_test).map(&mut draw).collect();
    Ok((train, test))
}

/// Componentwise mean of sentence representations.
pub fn review_representation(reps: &[Vec<f64>]) -> Result<Vec<f64>, ExperimentError> {
    let first = reps.first().ok_or(ExperimentError::Empty("review sentences"))?;
    let mut mean = vec![0.0; first.len()];
    for r in reps {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= reps.len() as f64);
    Ok(mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    pub per_aspect: Vec<f64>,
    pub macro_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub oracle: MaeReport,
    pub predicted: MaeReport,
    pub abstention_aware: MaeReport,
    pub mean_abstentions: f64,
}

/// The sentence-level predictor: a surrogate plus the decoding setup.
#[derive(Debug, Clone, Copy)]
pub struct SentenceDecoder<'a> {
    pub model: &'a TrainedSurrogate,
    pub spec: &'a LossSpec,
    pub g: &'a HexGraph,
    /// Space for the abstention-aware path; the plain path disables abstention.
    pub space: &'a PredictionSpace,
}

struct RatingRegressors {
    models: Vec<TrainedSurrogate>,
}

impl RatingRegressors {
    fn fit(reps: &[Vec<f64>], ratings: &[Vec<i8>], lambda: f64) -> Result<Self, ExperimentError> {
        let xs: Vec<Vec<f64>> = reps.iter().map(|r| with_intercept(r)).collect();
        let n_overall = ratings[0].len();
        let models = (0..n_overall)
            .map(|k| {
                let targets: Vec<Vec<f64>> = ratings.iter().map(|r| vec![f64::from(r[k])]).collect();
                fit_ridge(KernelConfig::linear(), &xs, &targets, lambda)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { models })
    }

    fn mae(&self, reps: &[Vec<f64>], ratings: &[Vec<i8>]) -> Result<MaeReport, ExperimentError> {
        let mut per_aspect = Vec::with_capacity(self.models.len());
        for (k, model) in self.models.iter().enumerate() {
            let mut total = 0.0;
            for (rep, rating) in reps.iter().zip(ratings) {
                let raw = model.g_hat(&with_intercept(rep))?[0];
                total += (raw.clamp(-1.0, 1.0).round() - f64::from(rating[k])).abs();
            }
            per_aspect.push(total / reps.len() as f64);
        }
        let macro_mae = per_aspect.iter().sum::<f64>() / per_aspect.len() as f64;
        Ok(MaeReport { per_aspect, macro_mae })
    }
}

fn with_intercept(rep: &[f64]) -> Vec<f64> {
    let mut x = rep.to_vec();
    x.push(1.0);
    x
}

fn true_representation(review: &Review) -> Result<Vec<f64>, ExperimentError> {
    let reps: Vec<Vec<f64>> = review.sentences.iter().map(|s| s.y.iter().map(|&v| f64::from(v)).collect()).collect();
    review_representation(&reps)
}

/// Fits the rating regressors on training reviews and reports test MAE for
/// the three representations.
pub fn star_pipeline(
    train: &[Review],
    test: &[Review],
    decoder: &SentenceDecoder<'_>,
    lambda: f64,
) -> Result<PipelineReport, ExperimentError> {
    if train.is_empty() || test.is_empty() {
        return Err(ExperimentError::Empty("reviews"));
    }
    let n_overall = train[0].ratings.len();
    if let Some(r) = train.iter().chain(test).find(|r| r.ratings.len() != n_overall) {
        return Err(ExperimentError::Dimension { what: "ratings", expected: n_overall, actual: r.ratings.len() });
    }
    let train_reps: Vec<Vec<f64>> = train.iter().map(true_representation).collect::<Result<_, _>>()?;
    let train_ratings: Vec<Vec<i8>> = train.iter().map(|r| r.ratings.clone()).collect();
    let regs = RatingRegressors::fit(&train_reps, &train_ratings, lambda)?;

    let d = decoder.g.d();
    let plain_space = decoder.space.no_abstention(d);
    let test_ratings: Vec<Vec<i8>> = test.iter().map(|r| r.ratings.clone()).collect();
    let oracle_reps: Vec<Vec<f64>> = test.iter().map(true_representation).collect::<Result<_, _>>()?;
    let mut plain_reps = Vec::with_capacity(test.len());
    let mut aware_reps = Vec::with_capacity(test.len());
    let mut abstentions = 0usize;
    let mut sentences = 0usize;
    for review in test {
        let decoded: Vec<(Vec<f64>, Vec<f64>, usize)> = review
            .sentences
            .par_iter()
            .map(|s| {
                let psi = decoder.model.g_hat(&s.x)?;
                let plain = decode_scores(decoder.spec, decoder.g, &psi, &plain_space)?;
                let aware = decode_scores(decoder.spec, decoder.g, &psi, decoder.space)?;
                Ok((
                    plain_representation(&plain.optimum),
                    abstention_representation(&aware.optimum),
                    aware.optimum.abstention_count(),
                ))
            })
            .collect::<Result<_, ExperimentError>>()?;
        sentences += decoded.len();
        abstentions += decoded.iter().map(|t| t.2).sum::<usize>();
        let (p, a): (Vec<_>, Vec<_>) = decoded.into_iter().map(|(p, a, _)| (p, a)).unzip();
        plain_reps.push(review_representation(&p)?);
        aware_reps.push(review_representation(&a)?);
    }
    Ok(PipelineReport {
        oracle: regs.mae(&oracle_reps, &test_ratings)?,
        predicted: regs.mae(&plain_reps, &test_ratings)?,
        abstention_aware: regs.mae(&aware_reps, &test_ratings)?,
        mean_abstentions: abstentions as f64 / sentences.max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::opinion_tree;

    #[test]
    fn ratings_follow_polarity_balance() {
        // 2 aspects, 2 polarities, one overall aspect
        let mut y = vec![0u8; 7];
        y[0] = 1;
        y[1] = 1;
        y[polarity_node(2, 2, 0, 0)] = 1;
        assert_eq!(rate_review(&[y.clone()], 2, 2, 1, 0.1), vec![1]);
        let mut z = vec![0u8; 7];
        z[0] = 1;
        z[2] = 1;
        z[polarity_node(2, 2, 1, 1)] = 1;
        assert_eq!(rate_review(&[y, z.clone()], 2, 2, 1, 0.1), vec![0]);
        assert_eq!(rate_review(&[z], 2, 2, 2, 0.1), vec![0, -1]);
    }

    #[test]
    fn reviews_are_seeded_and_sized() {
        let g = opinion_tree(4, 3, false).unwrap();
        let sentence = SyntheticConfig::new(0, 0, 6, 3);
        let mut cfg = ReviewConfig::new(5, 3);
        cfg.n_overall = 2;
        let (train, test) = synth_reviews(&g, 4, 3, &sentence, &cfg).unwrap();
        assert_eq!((train.len(), test.len()), (5, 3));
        assert_eq!(test[0].id, 5);
        assert!(train.iter().all(|r| (5..=15).contains(&r.sentences.len()) && r.ratings.len() == 2));
        assert_eq!(synth_reviews(&g, 4, 3, &sentence, &cfg).unwrap().0, train);
        cfg.n_overall = 5;
        assert!(synth_reviews(&g, 4, 3, &sentence, &cfg).is_err());
    }

    #[test]
    fn mean_representation() {
        let r = review_representation(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert_eq!(r, vec![0.5, -0.5]);
        assert!(review_representation(&[]).is_err());
    }
}
