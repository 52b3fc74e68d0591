//! End-to-end checks of the synthetic generator, metrics, sweeps and the
//! rating pipeline.

mod common;

use abstain::decode::{brute_force_decode, decode, decode_scores};
use abstain::experiments::{
    aspect_nodes, hamming_excluding_abstained, micro_f1, opinion_tree, polarity_node, star_pipeline, sweep_abstention,
    synth_dataset, synth_reviews, ExclusionMode, ReviewConfig, Sample, SentenceDecoder, SweepGrid, SyntheticConfig,
};
use abstain::hexgraph::{AbstainedPrediction, HexGraph, PredictionSpace};
use abstain::losses::{self, LossSpec};
use abstain::surrogate::{fit_ridge, KernelConfig, TrainedSurrogate};

fn fit(spec: &LossSpec, samples: &[Sample], lambda: f64) -> TrainedSurrogate {
    let xs: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
    let psi: Vec<Vec<f64>> = samples.iter().map(|s| spec.psi_wa(&s.y).unwrap()).collect();
    fit_ridge(KernelConfig::linear(), &xs, &psi, lambda).unwrap()
}

#[test]
fn noiseless_data_is_recovered_exactly() {
    let g = opinion_tree(3, 2, false).unwrap();
    let mut cfg = SyntheticConfig::new(300, 60, 20, 17);
    cfg.feature_noise = 0.0;
    let (train, test) = synth_dataset(&g, &cfg).unwrap();
    let spec = losses::hamming_spec(g.d()).unwrap();
    let model = fit(&spec, &train, 1e-3);
    let space = PredictionSpace::without_abstention(g.d());
    for s in &test {
        let rep = decode(&model, &spec, &g, &s.x, &space).unwrap();
        assert_eq!(rep.optimum.y_h, s.y);
        assert!(rep.optimum.y_r.iter().all(|&r| r == 1));
    }
}

#[test]
fn all_zero_targets_decode_to_zeros() {
    let g = opinion_tree(2, 2, false).unwrap();
    let (mut train, test) = synth_dataset(&g, &SyntheticConfig::new(40, 10, 8, 2)).unwrap();
    for s in &mut train {
        s.y = vec![0; g.d()];
    }
    let spec = losses::hamming_spec(g.d()).unwrap();
    let model = fit(&spec, &train, 0.1);
    for s in &test {
        let rep = decode(&model, &spec, &g, &s.x, &PredictionSpace::standard()).unwrap();
        assert_eq!(rep.optimum.y_h, vec![0; g.d()]);
    }
}

#[test]
fn generated_labels_are_legal_and_seeded() {
    let g = opinion_tree(4, 3, true).unwrap();
    let mut cfg = SyntheticConfig::new(200, 50, 6, 8);
    cfg.noise = 0.2;
    cfg.hard_nodes = aspect_nodes(2);
    let (train, test) = synth_dataset(&g, &cfg).unwrap();
    assert!(train.iter().chain(&test).all(|s| g.is_legal(&s.y).unwrap() && s.x.len() == 6));
    assert_eq!(synth_dataset(&g, &cfg).unwrap(), (train.clone(), test));
    cfg.seed = 9;
    assert_ne!(synth_dataset(&g, &cfg).unwrap().0, train);
}

#[test]
fn right_mode_drops_the_abstained_aspect_and_its_polarities() {
    let g = opinion_tree(2, 2, false).unwrap();
    let y = vec![1, 1, 0, 1, 0, 0, 0];
    // abstain on aspect 1 (node 1), get its first polarity wrong and node 2 wrong
    let mut y_h = y.clone();
    y_h[polarity_node(2, 2, 0, 0)] = 0;
    y_h[2] = 1;
    let mut y_r = vec![1; 7];
    y_r[1] = 0;
    let pred = AbstainedPrediction::new(y_h, y_r).unwrap();
    let left = hamming_excluding_abstained(&g, &pred, &y, ExclusionMode::Left).unwrap();
    let right = hamming_excluding_abstained(&g, &pred, &y, ExclusionMode::Right).unwrap();
    assert_eq!(left, 2.0 / 6.0);
    assert_eq!(right, 1.0 / 4.0);

    // abstain on both aspects: only root and the four polarities (left) or the root (right) remain
    let all = AbstainedPrediction::new(y.clone(), vec![1, 0, 0, 1, 1, 1, 1]).unwrap();
    assert_eq!(hamming_excluding_abstained(&g, &all, &y, ExclusionMode::Left).unwrap(), 0.0);
    let mut wrong_root = y.clone();
    wrong_root[0] = 0;
    let all = AbstainedPrediction::new(wrong_root, vec![1, 0, 0, 1, 1, 1, 1]).unwrap();
    assert_eq!(hamming_excluding_abstained(&g, &all, &y, ExclusionMode::Right).unwrap(), 1.0);
    assert_eq!(hamming_excluding_abstained(&g, &all, &y, ExclusionMode::Left).unwrap(), 1.0 / 5.0);
}

#[test]
fn micro_f1_basics() {
    let truth = vec![vec![1, 1, 0], vec![1, 0, 1]];
    let perfect: Vec<_> = truth.iter().map(|y| AbstainedPrediction::predict_all(y.clone())).collect();
    assert_eq!(micro_f1(&perfect, &truth).unwrap(), 1.0);
    let zeros: Vec<_> = truth.iter().map(|_| AbstainedPrediction::predict_all(vec![0, 0, 0])).collect();
    assert_eq!(micro_f1(&zeros, &truth).unwrap(), 0.0);
    assert!(micro_f1(&[], &[]).is_err());
}

fn sweep_setup(seed: u64) -> (HexGraph, Vec<f64>, TrainedSurrogate, Vec<Sample>, PredictionSpace) {
    let g = opinion_tree(3, 2, false).unwrap();
    let c = losses::sibling_weights(&g).unwrap();
    let mut cfg = SyntheticConfig::new(120, 25, 10, seed);
    cfg.noise = 0.1;
    cfg.hard_nodes = vec![1];
    let (train, test) = synth_dataset(&g, &cfg).unwrap();
    let spec = losses::haloss_spec(&g, &c, 0.0, 0.5).unwrap();
    let model = fit(&spec, &train, 0.5);
    let space = PredictionSpace::standard().abstain_only_on(g.d(), &aspect_nodes(3));
    (g, c, model, test, space)
}

#[test]
fn sweep_coefficient_is_monotone_and_large_k_a_removes_abstention() {
    let (g, c, model, test, space) = sweep_setup(4);
    let mut grid = SweepGrid::default();
    grid.k_a.push(1e6);
    let result = sweep_abstention(&model, &g, &c, &test, &grid, &space).unwrap();
    assert_eq!(result.cells.len(), 36);
    for k_ac in &grid.k_ac {
        let row: Vec<_> = result.cells.iter().filter(|cell| cell.k_ac == *k_ac).collect();
        assert!(row.windows(2).all(|w| w[0].k_a < w[1].k_a));
        for w in row.windows(2) {
            assert!(w[1].weighted_abstention_coeff <= w[0].weighted_abstention_coeff + 1e-6);
        }
        // regression scores can make abstention cheaper than predicting, so a
        // huge K_A leaves only abstentions with a negative coefficient
        let last = row.last().unwrap();
        assert!(last.weighted_abstention_coeff <= 0.0);
        assert!(last.mean_abstentions == 0.0 || last.weighted_abstention_coeff < 0.0);
    }
    assert!(result.cells.iter().any(|c| c.mean_abstentions == 0.0));
    for cell in result.cells.iter().filter(|c| c.mean_abstentions == 0.0) {
        assert_eq!(cell.hamming_left, cell.hamming_right);
        assert_eq!(cell.hamming_left, result.no_abstention_hamming);
    }
}

#[test]
fn sweep_cells_agree_with_brute_force() {
    let (g, c, model, test, space) = sweep_setup(11);
    let grid = SweepGrid { k_a: vec![0.0, 0.1, 0.3], k_ac: vec![0.5] };
    let result = sweep_abstention(&model, &g, &c, &test, &grid, &space).unwrap();
    for cell in &result.cells {
        let spec = losses::haloss_spec(&g, &c, cell.k_a, cell.k_ac).unwrap();
        let mut coeff = 0.0;
        for s in &test {
            let psi = model.g_hat(&s.x).unwrap();
            let (best, value) = brute_force_decode(&spec, &g, &psi, &space, 20).unwrap();
            let rep = decode_scores(&spec, &g, &psi, &space).unwrap();
            assert!((rep.objective_value - value).abs() <= 1e-9);
            coeff += spec.abstention_coefficient(&psi, &best.y_h, &best.y_r).unwrap();
        }
        // equal-objective optima may differ in their coefficient only through ties
        let brute = coeff / test.len() as f64;
        assert!((brute - cell.weighted_abstention_coeff).abs() <= 1e-6 || cell.k_a == 0.0, "{brute} vs {cell:?}");
    }
}

#[test]
fn oracle_representations_rate_at_least_as_well_as_predicted_ones() {
    for seed in [1, 2, 3, 4, 5] {
        let (n_aspects, n_polarities) = (4, 3);
        let g = opinion_tree(n_aspects, n_polarities, false).unwrap();
        let mut sentence = SyntheticConfig::new(0, 0, 16, seed);
        sentence.noise = 0.1;
        sentence.hard_nodes = aspect_nodes(2);
        let mut reviews = ReviewConfig::new(60, 30);
        reviews.n_overall = 2;
        reviews.min_sentences = 3;
        reviews.max_sentences = 8;
        let (train, test) = synth_reviews(&g, n_aspects, n_polarities, &sentence, &reviews).unwrap();
        let c = losses::sibling_weights(&g).unwrap();
        let spec = losses::haloss_spec(&g, &c, 0.1, 0.5).unwrap();
        let sentences: Vec<Sample> = train.iter().flat_map(|r| r.sentences.clone()).collect();
        let model = fit(&spec, &sentences, 1.0);
        let space = PredictionSpace::standard().abstain_only_on(g.d(), &aspect_nodes(n_aspects));
        let decoder = SentenceDecoder { model: &model, spec: &spec, g: &g, space: &space };
        let report = star_pipeline(&train, &test, &decoder, 1.0).unwrap();
        assert!(report.oracle.macro_mae <= report.predicted.macro_mae, "seed {seed}: {report:?}");
        assert!(report.mean_abstentions >= 0.0);
    }
}
