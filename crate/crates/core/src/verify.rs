//! Self-check suites: loss representation, decoder optimality, LP
//! integrality, the excess-risk bound, comparative statics and the
//! reductions between losses. Every suite is seeded and reports
//! deterministically.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{brute_force_decode, decode_scores, DecodeError};
use crate::experiments::risk::{random_world, risk_bound_check};
use crate::hexgraph::{ConsecutiveRule, HexGraph, HierarchyRule, PredictionSpace};
use crate::losses::{self, LossKind, LossSpec};

pub const LOSS_TOL: f64 = 1e-12;
pub const DECODE_TOL: f64 = 1e-9;
pub const STATICS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub loss_max_d: usize,
    pub decoder_instances: usize,
    pub decoder_max_d: usize,
    pub integrality_instances: usize,
    pub integrality_max_d: usize,
    pub risk_worlds: usize,
    pub risk_max_d: usize,
    pub risk_max_x: usize,
    pub statics_instances: usize,
    pub statics_max_d: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            loss_max_d: 5,
            decoder_instances: 500,
            decoder_max_d: 8,
            integrality_instances: 200,
            integrality_max_d: 12,
            risk_worlds: 1000,
            risk_max_d: 4,
            risk_max_x: 5,
            statics_instances: 100,
            statics_max_d: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl SuiteOutcome {
    fn new(name: &str, ok: bool, detail: String) -> Self {
        Self { name: name.into(), status: if ok { Status::Pass } else { Status::Fail }, detail }
    }

    fn skip(name: &str, detail: String) -> Self {
        Self { name: name.into(), status: Status::Skip, detail }
    }
}

impl fmt::Display for SuiteOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.status, self.name, self.detail)
    }
}

/// Every tree on `d` nodes whose parents precede their children.
pub fn all_trees(d: usize) -> Vec<HexGraph> {
    let mut out = Vec::new();
    let mut parents = vec![0usize; d];
    loop {
        let edges: Vec<_> = (1..d).map(|i| (parents[i], i)).collect();
        out.push(HexGraph::new(d, &edges, &[]).expect("parents precede children"));
        let mut i = d;
        loop {
            if i <= 1 {
                return out;
            }
            i -= 1;
            if parents[i] + 1 < i {
                parents[i] += 1;
                parents.iter_mut().skip(i + 1).for_each(|p| *p = 0);
                break;
            }
        }
    }
}

pub fn random_tree<R: Rng>(rng: &mut R, d: usize) -> HexGraph {
    let edges: Vec<_> = (1..d).map(|i| (rng.random_range(0..i), i)).collect();
    HexGraph::new(d, &edges, &[]).expect("parents precede children")
}

fn rule_spaces() -> Vec<PredictionSpace> {
    let mut out = Vec::new();
    for hierarchy in [HierarchyRule::Relaxed, HierarchyRule::Strict] {
        for consecutive in [ConsecutiveRule::NoConsecutiveAbstention, ConsecutiveRule::Literal] {
            out.push(PredictionSpace { hierarchy, consecutive, abstainable: None });
        }
    }
    out
}

fn instance_rng(seed: u64, suite: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (suite << 48) ^ index as u64)
}

/// Inner-product route against the indicator definition on every tree up to
/// `loss_max_d`. `tamper` rewrites each spec before checking (identity in
/// normal runs; negative controls inject a wrong cost entry).
pub fn loss_equality_suite(cfg: &VerifyConfig, cap: usize, tamper: &(dyn Fn(LossSpec) -> LossSpec + Sync)) -> SuiteOutcome {
    const NAME: &str = "loss_equality";
    if cfg.loss_max_d > cap {
        return SuiteOutcome::skip(NAME, format!("loss_max_d={} exceeds cap={cap}", cfg.loss_max_d));
    }
    let graphs: Vec<HexGraph> = (1..=cfg.loss_max_d).flat_map(all_trees).collect();
    let results: Vec<Result<(usize, f64), String>> = graphs
        .par_iter()
        .map(|g| {
            let c = losses::sibling_weights(g).map_err(|e| e.to_string())?;
            let ys = g.enumerate_state_space(cap.max(g.d())).map_err(|e| e.to_string())?;
            let mut checked = 0;
            let mut worst: f64 = 0.0;
            for space in rule_spaces() {
                let specs = [
                    losses::hamming_spec(g.d()),
                    losses::hloss_spec_with_rule(g, &c, space.consecutive),
                    losses::haloss_spec_with_rule(g, &c, 0.37, 0.61, space.consecutive),
                    losses::haloss_spec_with_rule(g, &c, 0.0, 1.3, space.consecutive),
                ];
                let preds = g.enumerate_prediction_space(&space, cap).map_err(|e| e.to_string())?;
                for spec in specs {
                    let spec = tamper(spec.map_err(|e| e.to_string())?);
                    for p in &preds {
                        for y in &ys {
                            let a = spec.loss_innerproduct(&p.y_h, &p.y_r, &y.y).map_err(|e| e.to_string())?;
                            let b = spec.loss_direct(&p.y_h, &p.y_r, &y.y).map_err(|e| e.to_string())?;
                            worst = worst.max((a - b).abs());
                            checked += 1;
                        }
                    }
                }
            }
            Ok((checked, worst))
        })
        .collect();
    let mut binary = vec![];
    for c in [0.0, 0.25, 0.3, 0.5] {
        binary.push(losses::binary_abstention_spec(c).map(tamper));
    }
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for r in results {
        match r {
            Ok((n, w)) => {
                checked += n;
                worst = worst.max(w);
            }
            Err(e) => return SuiteOutcome::new(NAME, false, format!("error: {e}")),
        }
    }
    for spec in binary {
        let Ok(spec) = spec else { return SuiteOutcome::new(NAME, false, "binary spec rejected".into()) };
        for (h, r) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
            for y in [0u8, 1] {
                let a = spec.loss_innerproduct(&[h], &[r], &[y]).unwrap_or(f64::NAN);
                let b = spec.loss_direct(&[h], &[r], &[y]).unwrap_or(f64::NAN);
                worst = worst.max((a - b).abs());
                if a.is_nan() || b.is_nan() {
                    worst = f64::INFINITY;
                }
                checked += 1;
            }
        }
    }
    SuiteOutcome::new(NAME, worst <= LOSS_TOL, format!("pairs={checked} max_abs_err={worst:e}"))
}

fn random_space<R: Rng>(rng: &mut R, d: usize) -> PredictionSpace {
    let mut space = PredictionSpace::standard().strict(rng.random_bool(0.5));
    if rng.random_bool(0.5) {
        space.consecutive = ConsecutiveRule::Literal;
    }
    if rng.random_bool(0.25) {
        space.abstainable = Some((0..d).map(|_| rng.random_bool(0.6)).collect());
    }
    space
}

fn random_spec<R: Rng>(rng: &mut R, kind: LossKind, g: &HexGraph, rule: ConsecutiveRule) -> Result<LossSpec, String> {
    let c = losses::sibling_weights(g).map_err(|e| e.to_string())?;
    match kind {
        LossKind::BinaryAbstention => losses::binary_abstention_spec(rng.random_range(0.0..=0.5)),
        LossKind::Hamming => losses::hamming_spec(g.d()),
        LossKind::HLoss => losses::hloss_spec_with_rule(g, &c, rule),
        LossKind::HaLoss => {
            losses::haloss_spec_with_rule(g, &c, rng.random_range(0.0..1.0), rng.random_range(0.0..1.5), rule)
        }
    }
    .map_err(|e| e.to_string())
}

fn random_scores<R: Rng>(rng: &mut R, spec: &LossSpec, g: &HexGraph) -> Vec<f64> {
    if rng.random_bool(0.5) {
        return (0..spec.q()).map(|_| rng.random_range(-1.0..1.0)).collect();
    }
    let ys = g.enumerate_state_space(g.d()).expect("size checked by caller");
    let mut psi = vec![0.0; spec.q()];
    let mut total = 0.0;
    for _ in 0..3 {
        let y = &ys[rng.random_range(0..ys.len())].y;
        let w: f64 = rng.random_range(0.05..1.0);
        total += w;
        for (p, v) in psi.iter_mut().zip(spec.psi_wa(y).expect("legal labeling")) {
            *p += w * v;
        }
    }
    psi.iter_mut().for_each(|p| *p /= total);
    psi
}

/// Branch and bound against enumeration, `decoder_instances` per loss kind.
pub fn decoder_suite(cfg: &VerifyConfig, cap: usize, seed: u64) -> SuiteOutcome {
    const NAME: &str = "decoder_oracle";
    if cfg.decoder_max_d > cap {
        return SuiteOutcome::skip(NAME, format!("decoder_max_d={} exceeds cap={cap}", cfg.decoder_max_d));
    }
    let jobs: Vec<(LossKind, usize)> =
        LossKind::ALL.iter().flat_map(|&k| (0..cfg.decoder_instances).map(move |i| (k, i))).collect();
    let results: Vec<Result<f64, String>> = jobs
        .par_iter()
        .map(|&(kind, i)| {
            let mut rng = instance_rng(seed, 2 + kind as u64, i);
            let d = if kind == LossKind::BinaryAbstention { 1 } else { rng.random_range(1..=cfg.decoder_max_d) };
            let g = random_tree(&mut rng, d);
            let space = random_space(&mut rng, d);
            let spec = random_spec(&mut rng, kind, &g, space.consecutive)?;
            let psi = random_scores(&mut rng, &spec, &g);
            match (decode_scores(&spec, &g, &psi, &space), brute_force_decode(&spec, &g, &psi, &space, cap)) {
                (Ok(rep), Ok((_, best))) => {
                    if !space.contains(&g, &rep.optimum).map_err(|e| e.to_string())? {
                        return Err(format!("{} instance {i}: infeasible optimum", kind.name()));
                    }
                    Ok((rep.objective_value - best).abs())
                }
                (Err(DecodeError::Infeasible), Err(DecodeError::Infeasible)) => Ok(0.0),
                (a, b) => Err(format!("{} instance {i}: {a:?} / {b:?}", kind.name())),
            }
        })
        .collect();
    let mut worst: f64 = 0.0;
    for r in results {
        match r {
            Ok(w) => worst = worst.max(w),
            Err(e) => return SuiteOutcome::new(NAME, false, e),
        }
    }
    SuiteOutcome::new(
        NAME,
        worst <= DECODE_TOL,
        format!("instances={} max_abs_gap={worst:e}", jobs.len()),
    )
}

/// Abstention-free H-loss decoding must be solved at the root LP.
pub fn integrality_suite(cfg: &VerifyConfig, seed: u64) -> SuiteOutcome {
    const NAME: &str = "lp_integrality";
    let results: Vec<Result<bool, String>> = (0..cfg.integrality_instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(seed, 10, i);
            let d = rng.random_range(1..=cfg.integrality_max_d.max(1));
            let g = random_tree(&mut rng, d);
            let c = losses::sibling_weights(&g).map_err(|e| e.to_string())?;
            let spec = losses::hloss_spec(&g, &c).map_err(|e| e.to_string())?;
            let psi: Vec<f64> = (0..spec.q()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let space = PredictionSpace::without_abstention(d).strict(rng.random_bool(0.5));
            let rep = decode_scores(&spec, &g, &psi, &space).map_err(|e| e.to_string())?;
            Ok(rep.lp_integral_at_root && rep.nodes_explored == 1)
        })
        .collect();
    let mut integral = 0;
    for r in results {
        match r {
            Ok(true) => integral += 1,
            Ok(false) => {}
            Err(e) => return SuiteOutcome::new(NAME, false, e),
        }
    }
    SuiteOutcome::new(
        NAME,
        integral == cfg.integrality_instances,
        format!("integral_roots={integral}/{}", cfg.integrality_instances),
    )
}

/// The excess-risk bound on random finite worlds with perturbed estimates.
pub fn risk_suite(cfg: &VerifyConfig, cap: usize, seed: u64) -> SuiteOutcome {
    const NAME: &str = "risk_bound";
    if cfg.risk_max_d > cap {
        return SuiteOutcome::skip(NAME, format!("risk_max_d={} exceeds cap={cap}", cfg.risk_max_d));
    }
    let results: Vec<Result<(bool, f64), String>> = (0..cfg.risk_worlds)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(seed, 11, i);
            let d = rng.random_range(1..=cfg.risk_max_d.max(1));
            let g = random_tree(&mut rng, d);
            let n_x = rng.random_range(1..=cfg.risk_max_x.max(1));
            let kind = LossKind::ALL[i % 4];
            let (g, spec) = if kind == LossKind::BinaryAbstention {
                let g1 = random_tree(&mut rng, 1);
                let spec = random_spec(&mut rng, kind, &g1, ConsecutiveRule::default())?;
                (g1, spec)
            } else {
                let spec = random_spec(&mut rng, kind, &g, ConsecutiveRule::default())?;
                (g, spec)
            };
            let space = PredictionSpace::standard().strict(rng.random_bool(0.5));
            let world = random_world(&mut rng, &g, n_x, cap).map_err(|e| e.to_string())?;
            let g_star = crate::experiments::risk::bayes_scores(&spec, &world).map_err(|e| e.to_string())?;
            let scale = [0.01, 0.1, 0.5, 2.0][rng.random_range(0..4)];
            let g_est: Vec<Vec<f64>> = g_star
                .iter()
                .map(|gx| gx.iter().map(|v| v + scale * rng.random_range(-1.0..1.0)).collect())
                .collect();
            let rep = risk_bound_check(&spec, &g, &space, &world, &g_est, cap).map_err(|e| e.to_string())?;
            let ratio = if rep.bound > 0.0 { rep.excess_risk / rep.bound } else { 0.0 };
            Ok((rep.holds, ratio))
        })
        .collect();
    let mut held = 0;
    let mut worst: f64 = 0.0;
    for r in results {
        match r {
            Ok((h, ratio)) => {
                held += usize::from(h);
                worst = worst.max(ratio);
            }
            Err(e) => return SuiteOutcome::new(NAME, false, e),
        }
    }
    SuiteOutcome::new(
        NAME,
        held == cfg.risk_worlds,
        format!("held={held}/{} max_excess_to_bound_ratio={worst:.6}", cfg.risk_worlds),
    )
}

/// The `K_A` coefficient of the objective at the optimum must not increase
/// along an ascending `K_A` grid.
pub fn statics_suite(cfg: &VerifyConfig, seed: u64) -> SuiteOutcome {
    const NAME: &str = "comparative_statics";
    let grid: Vec<f64> = (0..=10).map(|i| f64::from(i) / 20.0).collect();
    let results: Vec<Result<f64, String>> = (0..cfg.statics_instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(seed, 12, i);
            let d = rng.random_range(2..=cfg.statics_max_d.max(2));
            let g = random_tree(&mut rng, d);
            let c = losses::sibling_weights(&g).map_err(|e| e.to_string())?;
            let space = PredictionSpace::standard().strict(rng.random_bool(0.5));
            let k_ac = rng.random_range(0.0..1.0);
            let probe = losses::haloss_spec(&g, &c, 0.0, k_ac).map_err(|e| e.to_string())?;
            let psi = random_scores(&mut rng, &probe, &g);
            let mut prev = f64::INFINITY;
            let mut worst_rise: f64 = 0.0;
            for &k_a in &grid {
                let spec = losses::haloss_spec(&g, &c, k_a, k_ac).map_err(|e| e.to_string())?;
                let rep = decode_scores(&spec, &g, &psi, &space).map_err(|e| e.to_string())?;
                let a = spec
                    .abstention_coefficient(&psi, &rep.optimum.y_h, &rep.optimum.y_r)
                    .map_err(|e| e.to_string())?;
                worst_rise = worst_rise.max(a - prev);
                prev = a;
            }
            Ok(worst_rise)
        })
        .collect();
    let mut worst: f64 = 0.0;
    for r in results {
        match r {
            Ok(w) => worst = worst.max(w),
            Err(e) => return SuiteOutcome::new(NAME, false, e),
        }
    }
    SuiteOutcome::new(
        NAME,
        worst <= STATICS_TOL,
        format!("instances={} max_rise={worst:e}", cfg.statics_instances),
    )
}

/// Ha-loss with `r ≡ 1` against the H-loss, and the binary case table.
pub fn reductions_suite(cfg: &VerifyConfig, cap: usize) -> SuiteOutcome {
    const NAME: &str = "reductions";
    if cfg.loss_max_d > cap {
        return SuiteOutcome::skip(NAME, format!("loss_max_d={} exceeds cap={cap}", cfg.loss_max_d));
    }
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for g in (1..=cfg.loss_max_d).flat_map(all_trees) {
        let c = losses::sibling_weights(&g).expect("tree");
        let h = losses::hloss_spec(&g, &c).expect("valid weights");
        let ys = g.enumerate_state_space(cap.max(g.d())).expect("within cap");
        let ones = vec![1u8; g.d()];
        for (k_a, k_ac) in [(0.0, 0.0), (0.3, 0.7), (1.0, 2.0)] {
            let ha = losses::haloss_spec(&g, &c, k_a, k_ac).expect("valid weights");
            for pred in &ys {
                for y in &ys {
                    let a = ha.loss_direct(&pred.y, &ones, &y.y).unwrap_or(f64::NAN);
                    let b = h.loss_direct(&pred.y, &ones, &y.y).unwrap_or(f64::NAN);
                    let a2 = ha.loss_innerproduct(&pred.y, &ones, &y.y).unwrap_or(f64::NAN);
                    let err = (a - b).abs().max((a2 - b).abs());
                    worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
                    checked += 1;
                }
            }
        }
    }
    // (h, r) → loss for y = 0 and y = 1: predict 1, predict 0, abstain
    for c in [0.0, 0.25, 0.5] {
        let spec = losses::binary_abstention_spec(c).expect("c in range");
        let table = [((1u8, 1u8), [1.0, 0.0]), ((0, 1), [0.0, 1.0]), ((0, 0), [c, c]), ((1, 0), [c, c])];
        for ((h, r), expected) in table {
            for y in [0u8, 1] {
                let got = spec.loss_innerproduct(&[h], &[r], &[y]).unwrap_or(f64::NAN);
                let err = (got - expected[y as usize]).abs();
                worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
                checked += 1;
            }
        }
    }
    SuiteOutcome::new(NAME, worst <= LOSS_TOL, format!("checks={checked} max_abs_err={worst:e}"))
}

/// All suites in their fixed order.
pub fn run_all(cfg: &VerifyConfig, cap: usize, seed: u64) -> Vec<SuiteOutcome> {
    vec![
        loss_equality_suite(cfg, cap, &|s| s),
        decoder_suite(cfg, cap, seed),
        integrality_suite(cfg, seed),
        risk_suite(cfg, cap, seed),
        statics_suite(cfg, seed),
        reductions_suite(cfg, cap),
    ]
}

pub fn render_report(outcomes: &[SuiteOutcome]) -> String {
    outcomes.iter().map(|o| format!("{o}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyConfig {
        VerifyConfig {
            loss_max_d: 3,
            decoder_instances: 20,
            decoder_max_d: 5,
            integrality_instances: 10,
            integrality_max_d: 6,
            risk_worlds: 20,
            risk_max_d: 3,
            risk_max_x: 3,
            statics_instances: 10,
            statics_max_d: 5,
        }
    }

    #[test]
    fn small_run_passes() {
        for o in run_all(&small(), 10, 1) {
            assert_eq!(o.status, Status::Pass, "{o}");
        }
    }

    #[test]
    fn tampered_cost_fails_loss_equality() {
        let bad = |s: LossSpec| {
            let mut c = s.cost().clone();
            c[(0, 0)] += 0.5;
            s.with_cost(c)
        };
        assert_eq!(loss_equality_suite(&small(), 10, &bad).status, Status::Fail);
    }

    #[test]
    fn low_cap_skips() {
        let outcomes = run_all(&small(), 2, 1);
        let skipped: Vec<_> = outcomes.iter().filter(|o| o.status == Status::Skip).map(|o| o.name.as_str()).collect();
        assert_eq!(skipped, ["loss_equality", "decoder_oracle", "risk_bound", "reductions"]);
        assert!(outcomes.iter().all(|o| o.status != Status::Fail));
    }

    #[test]
    fn tree_counts() {
        // (d−1)! trees with parents drawn from earlier indices
        assert_eq!(all_trees(1).len(), 1);
        assert_eq!(all_trees(4).len(), 6);
        assert_eq!(all_trees(5).len(), 24);
    }
}
