//! Abstention-aware losses written as `⟨ψ_wa(y), C ψ_a(y_h, y_r)⟩`.
//!
//! Every loss carries two evaluation paths: the feature-map/cost-matrix route
//! used by learning and decoding, and a direct indicator-sum evaluator
//! (`loss_direct`) that never touches a matrix. The tests hold the two equal
//! over whole prediction spaces.
//!
//! `ψ_a` coordinates are affine forms over the monomials `{1, h_i, r_i, h_i r_j}`,
//! so `ψ_a = M · (y_h; y_r; y_h ⊗ y_r; 1)`. The trailing constant column of `M`
//! carries the `1 − h` and `1 − r` style terms.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hexgraph::{check_binary, compose_prediction, ConsecutiveRule, GraphError, HexGraph, Label};

const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("rejection cost {0} outside [0, 0.5]")]
    RejectCost(f64),
    #[error("abstention multipliers must be non-negative (K_A={k_a}, K_Ac={k_ac})")]
    NegativeMultiplier { k_a: f64, k_ac: f64 },
    #[error("weight vector has length {actual}, graph has {expected} nodes")]
    WeightLength { expected: usize, actual: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("{what}: expected length {expected}, got {actual}")]
    Dimension { what: &'static str, expected: usize, actual: usize },
    #[error("target labeling is not legal for the hierarchy")]
    IllegalTarget,
    #[error("structure size must be at least 1")]
    EmptyStructure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    BinaryAbstention,
    Hamming,
    HLoss,
    HaLoss,
}

impl LossKind {
    pub const ALL: [LossKind; 4] =
        [LossKind::BinaryAbstention, LossKind::Hamming, LossKind::HLoss, LossKind::HaLoss];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::BinaryAbstention => "binary_abstention",
            LossKind::Hamming => "hamming",
            LossKind::HLoss => "h_loss",
            LossKind::HaLoss => "ha_loss",
        }
    }
}

/// A product of prediction variables: `1`, `h_i`, `r_i` or `h_i r_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Monomial {
    One,
    H(usize),
    R(usize),
    HR(usize, usize),
}

impl Monomial {
    pub fn eval(self, h: &[u8], r: &[u8]) -> f64 {
        f64::from(match self {
            Monomial::One => 1,
            Monomial::H(i) => h[i],
            Monomial::R(i) => r[i],
            Monomial::HR(i, j) => h[i] * r[j],
        })
    }

    /// Column of this monomial in `(y_h; y_r; y_h ⊗ y_r; 1)`.
    pub fn stack_column(self, d: usize) -> usize {
        match self {
            Monomial::H(i) => i,
            Monomial::R(i) => d + i,
            Monomial::HR(i, j) => 2 * d + i * d + j,
            Monomial::One => 2 * d + d * d,
        }
    }
}

/// `(y_h; y_r; y_h ⊗ y_r; 1)`, length `2d + d² + 1`.
pub fn interaction_stack(h: &[u8], r: &[u8]) -> Vec<f64> {
    let d = h.len();
    let mut s = Vec::with_capacity(2 * d + d * d + 1);
    s.extend(h.iter().map(|&v| f64::from(v)));
    s.extend(r.iter().map(|&v| f64::from(v)));
    for &hi in h {
        s.extend(r.iter().map(|&rj| f64::from(hi * rj)));
    }
    s.push(1.0);
    s
}

/// One coordinate of `ψ_wa`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaFeature {
    Y(usize),
    NotY(usize),
    /// `(G y)_i`: number of active children of node `i`.
    ChildSum(usize),
    One,
}

/// Linear combination of monomials.
pub type AffineForm = Vec<(Monomial, f64)>;

/// Per-node weights of the tree losses: `c_A = K_A c`, `c_Ac = K_Ac c`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightScheme {
    pub c: Vec<f64>,
    pub c_a: Vec<f64>,
    pub c_ac: Vec<f64>,
}

impl WeightScheme {
    pub fn new(c: Vec<f64>, k_a: f64, k_ac: f64) -> Self {
        let c_a = c.iter().map(|w| k_a * w).collect();
        let c_ac = c.iter().map(|w| k_ac * w).collect();
        Self { c, c_a, c_ac }
    }
}

/// `c_0 = 1`, `c_i = c_{p(i)} / |siblings(i)|` where the sibling group counts `i` itself.
pub fn sibling_weights(g: &HexGraph) -> Result<Vec<f64>, LossError> {
    let parents = g.tree_parents()?;
    let mut c = vec![0.0; g.d()];
    for node in g.topological_order() {
        c[node] = match parents[node] {
            None => 1.0,
            Some(p) => c[p] / g.children(p).len() as f64,
        };
    }
    Ok(c)
}

/// The cost matrix split by which multiplier scales it:
/// `C = base + K_A · abstain + K_Ac · regret`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostParts {
    pub base: DMatrix<f64>,
    pub abstain: DMatrix<f64>,
    pub regret: DMatrix<f64>,
}

/// A fully specified loss: feature maps, cost matrix and the parameters that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    kind: LossKind,
    d: usize,
    wa: Vec<WaFeature>,
    a: Vec<AffineForm>,
    cost: DMatrix<f64>,
    parts: CostParts,
    weights: Vec<f64>,
    k_a: f64,
    k_ac: f64,
    parents: Vec<Option<usize>>,
    consecutive: ConsecutiveRule,
}

/// Binary classification with a reject option at cost `c_reject ∈ [0, 0.5]`.
pub fn binary_abstention_spec(c_reject: f64) -> Result<LossSpec, LossError> {
    if !(0.0..=0.5).contains(&c_reject) {
        return Err(LossError::RejectCost(c_reject));
    }
    use Monomial::*;
    let a = vec![
        vec![(HR(0, 0), 1.0)],
        vec![(R(0), 1.0), (HR(0, 0), -1.0)],
        vec![(One, 1.0), (R(0), -1.0)],
    ];
    let base = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    let abstain = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    let regret = DMatrix::zeros(2, 3);
    Ok(LossSpec::assemble(
        LossKind::BinaryAbstention,
        1,
        vec![WaFeature::Y(0), WaFeature::NotY(0)],
        a,
        CostParts { base, abstain, regret },
        vec![1.0],
        c_reject,
        0.0,
        vec![None],
        ConsecutiveRule::default(),
    ))
}

/// Hamming loss: `ψ_wa = (y; 1 − y)`, `ψ_a = (1 − h; h)`, `C = I_2d`.
pub fn hamming_spec(d: usize) -> Result<LossSpec, LossError> {
    if d == 0 {
        return Err(LossError::EmptyStructure);
    }
    let mut wa: Vec<WaFeature> = (0..d).map(WaFeature::Y).collect();
    wa.extend((0..d).map(WaFeature::NotY));
    let mut a: Vec<AffineForm> =
        (0..d).map(|i| vec![(Monomial::One, 1.0), (Monomial::H(i), -1.0)]).collect();
    a.extend((0..d).map(|i| vec![(Monomial::H(i), 1.0)]));
    let parts = CostParts {
        base: DMatrix::identity(2 * d, 2 * d),
        abstain: DMatrix::zeros(2 * d, 2 * d),
        regret: DMatrix::zeros(2 * d, 2 * d),
    };
    Ok(LossSpec::assemble(
        LossKind::Hamming,
        d,
        wa,
        a,
        parts,
        vec![1.0; d],
        0.0,
        0.0,
        vec![None; d],
        ConsecutiveRule::default(),
    ))
}

/// H-loss on the composed labeling, abstention counting as a wrong label.
///
/// Without abstention this is exactly `Σ c_i 1{h_i ≠ y_i} 1{h_p(i) = y_p(i)}`.
pub fn hloss_spec(g: &HexGraph, c: &[f64]) -> Result<LossSpec, LossError> {
    hloss_spec_with_rule(g, c, ConsecutiveRule::default())
}

pub fn hloss_spec_with_rule(
    g: &HexGraph,
    c: &[f64],
    rule: ConsecutiveRule,
) -> Result<LossSpec, LossError> {
    // An abstention under a correct parent costs c_i, exactly like a mistake,
    // and nothing below an abstained parent is charged.
    tree_spec(LossKind::HLoss, g, c, 1.0, 0.0, rule)
}

/// Abstention-aware H-loss with `c_A = K_A c` and `c_Ac = K_Ac c`.
pub fn haloss_spec(g: &HexGraph, c: &[f64], k_a: f64, k_ac: f64) -> Result<LossSpec, LossError> {
    haloss_spec_with_rule(g, c, k_a, k_ac, ConsecutiveRule::default())
}

pub fn haloss_spec_with_rule(
    g: &HexGraph,
    c: &[f64],
    k_a: f64,
    k_ac: f64,
    rule: ConsecutiveRule,
) -> Result<LossSpec, LossError> {
    if !(k_a >= 0.0 && k_ac >= 0.0) || !k_a.is_finite() || !k_ac.is_finite() {
        return Err(LossError::NegativeMultiplier { k_a, k_ac });
    }
    tree_spec(LossKind::HaLoss, g, c, k_a, k_ac, rule)
}

fn validate_weights(g: &HexGraph, c: &[f64]) -> Result<(), LossError> {
    if c.len() != g.d() {
        return Err(LossError::WeightLength { expected: g.d(), actual: c.len() });
    }
    if let Some(i) = c.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(LossError::InvalidWeights(format!("c[{i}] = {} is not a finite non-negative value", c[i])));
    }
    for &(p, ch) in g.hierarchy_edges() {
        if c[ch] > c[p] + WEIGHT_TOL {
            return Err(LossError::InvalidWeights(format!(
                "c[{ch}] = {} exceeds its parent's weight c[{p}] = {}",
                c[ch], c[p]
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Part {
    Base,
    Abstain,
    Regret,
}

/// Target-side factor of a term. On legal targets `y_i y_p(i) = y_i`, so every
/// term is affine in `y`.
#[derive(Clone, Copy)]
enum YTerm {
    One,
    Y(usize),
}

#[derive(Default)]
struct TermSink {
    terms: Vec<(Part, YTerm, Monomial, f64)>,
}

impl TermSink {
    fn add(&mut self, part: Part, weight: f64, y: YTerm, items: &[(Monomial, f64)]) {
        for &(m, coef) in items {
            self.terms.push((part, y, m, weight * coef));
        }
    }
}

/// Emits the per-node terms of the abstention-aware H-loss.
///
/// Each term is the product of indicators from the loss definition, reduced
/// with identities that hold on the prediction space: `h_i ≤ h_p` whenever
/// `r_p = 1`, and `r_i r_p = r_i + r_p − 1` (no consecutive abstention) or
/// `r_i r_p = 0` (literal rule). The reductions are what keep `ψ_a` inside the
/// span of `(h, r, h ⊗ r, 1)`.
fn emit_tree_terms(sink: &mut TermSink, parents: &[Option<usize>], c: &[f64], rule: ConsecutiveRule) {
    use Monomial::*;
    use YTerm as Yt;
    for (i, parent) in parents.iter().enumerate() {
        let w = c[i];
        let Some(p) = *parent else {
            // root: the parent conditions hold vacuously, regret never applies
            sink.add(Part::Abstain, w, Yt::One, &[(One, 1.0), (R(i), -1.0)]);
            sink.add(Part::Base, w, Yt::One, &[(HR(i, i), 1.0)]);
            sink.add(Part::Base, w, Yt::Y(i), &[(R(i), 1.0), (HR(i, i), -2.0)]);
            continue;
        };
        match rule {
            ConsecutiveRule::NoConsecutiveAbstention => {
                // (1 − r_i) · 1{h_p = y_p}
                sink.add(
                    Part::Abstain,
                    w,
                    Yt::One,
                    &[(One, 1.0), (R(i), -1.0), (H(p), -1.0), (HR(p, i), 1.0)],
                );
                sink.add(
                    Part::Abstain,
                    w,
                    Yt::Y(p),
                    &[(One, -1.0), (R(i), 1.0), (H(p), 2.0), (HR(p, i), -2.0)],
                );
                // (1 − r_p) · 1{h_i ≠ y_i}
                sink.add(Part::Regret, w, Yt::One, &[(H(i), 1.0), (HR(i, p), -1.0)]);
                sink.add(
                    Part::Regret,
                    w,
                    Yt::Y(i),
                    &[(One, 1.0), (R(p), -1.0), (H(i), -2.0), (HR(i, p), 2.0)],
                );
                // r_i r_p · (h_i y_p + y_i h_p − 2 h_i y_i)
                sink.add(
                    Part::Base,
                    w,
                    Yt::Y(p),
                    &[(HR(i, i), 1.0), (HR(i, p), 1.0), (H(i), -1.0)],
                );
                sink.add(
                    Part::Base,
                    w,
                    Yt::Y(i),
                    &[
                        (HR(p, i), 1.0),
                        (HR(p, p), 1.0),
                        (H(p), -1.0),
                        (HR(i, i), -2.0),
                        (HR(i, p), -2.0),
                        (H(i), 2.0),
                    ],
                );
            }
            ConsecutiveRule::Literal => {
                // r_p · 1{h_p = y_p}
                sink.add(Part::Abstain, w, Yt::One, &[(R(p), 1.0), (HR(p, p), -1.0)]);
                sink.add(Part::Abstain, w, Yt::Y(p), &[(R(p), -1.0), (HR(p, p), 2.0)]);
                // (1 − r_p) · (1 − r_i + r_i 1{h_i ≠ y_i})
                sink.add(
                    Part::Regret,
                    w,
                    Yt::One,
                    &[(One, 1.0), (R(i), -1.0), (R(p), -1.0), (HR(i, i), 1.0)],
                );
                sink.add(Part::Regret, w, Yt::Y(i), &[(R(i), 1.0), (HR(i, i), -2.0)]);
                // r_i r_p = 0: no misclassification term below the root
            }
        }
    }
}

fn tree_spec(
    kind: LossKind,
    g: &HexGraph,
    c: &[f64],
    k_a: f64,
    k_ac: f64,
    rule: ConsecutiveRule,
) -> Result<LossSpec, LossError> {
    let parents = g.tree_parents()?.to_vec();
    validate_weights(g, c)?;
    let d = g.d();

    let mut sink = TermSink::default();
    emit_tree_terms(&mut sink, &parents, c, rule);

    // ψ_a layout: h, r, the referenced products in (i, j) order, then 1.
    let pairs: BTreeSet<(usize, usize)> = sink
        .terms
        .iter()
        .filter_map(|t| match t.2 {
            Monomial::HR(i, j) => Some((i, j)),
            _ => None,
        })
        .collect();
    let mut layout: Vec<Monomial> = (0..d).map(Monomial::H).collect();
    layout.extend((0..d).map(Monomial::R));
    layout.extend(pairs.iter().map(|&(i, j)| Monomial::HR(i, j)));
    layout.push(Monomial::One);
    let column: BTreeMap<Monomial, usize> = layout.iter().enumerate().map(|(k, m)| (*m, k)).collect();

    // ψ_wa layout: y, G y, 1. The G y block keeps the child-count features of the
    // plain H-loss; its cost rows stay zero because y_p(i) is already a coordinate of y.
    let mut wa: Vec<WaFeature> = (0..d).map(WaFeature::Y).collect();
    wa.extend((0..d).map(WaFeature::ChildSum));
    wa.push(WaFeature::One);
    let (q, p) = (wa.len(), layout.len());

    let mut parts = CostParts {
        base: DMatrix::zeros(q, p),
        abstain: DMatrix::zeros(q, p),
        regret: DMatrix::zeros(q, p),
    };
    for &(part, y, m, coef) in &sink.terms {
        let row = match y {
            YTerm::Y(i) => i,
            YTerm::One => 2 * d,
        };
        let target = match part {
            Part::Base => &mut parts.base,
            Part::Abstain => &mut parts.abstain,
            Part::Regret => &mut parts.regret,
        };
        target[(row, column[&m])] += coef;
    }
    let a = layout.into_iter().map(|m| vec![(m, 1.0)]).collect();
    Ok(LossSpec::assemble(kind, d, wa, a, parts, c.to_vec(), k_a, k_ac, parents, rule))
}

impl LossSpec {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: LossKind,
        d: usize,
        wa: Vec<WaFeature>,
        a: Vec<AffineForm>,
        parts: CostParts,
        weights: Vec<f64>,
        k_a: f64,
        k_ac: f64,
        parents: Vec<Option<usize>>,
        consecutive: ConsecutiveRule,
    ) -> Self {
        let cost = &parts.base + &parts.abstain * k_a + &parts.regret * k_ac;
        Self { kind, d, wa, a, cost, parts, weights, k_a, k_ac, parents, consecutive }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Dimension of `ψ_wa`.
    pub fn q(&self) -> usize {
        self.wa.len()
    }

    /// Dimension of `ψ_a`.
    pub fn p(&self) -> usize {
        self.a.len()
    }

    pub fn cost(&self) -> &DMatrix<f64> {
        &self.cost
    }

    pub fn cost_parts(&self) -> &CostParts {
        &self.parts
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Abstention-cost multiplier. For the binary loss this is the rejection cost.
    pub fn k_a(&self) -> f64 {
        self.k_a
    }

    pub fn k_ac(&self) -> f64 {
        self.k_ac
    }

    pub fn consecutive_rule(&self) -> ConsecutiveRule {
        self.consecutive
    }

    pub fn wa_features(&self) -> &[WaFeature] {
        &self.wa
    }

    pub fn a_features(&self) -> &[AffineForm] {
        &self.a
    }

    /// Replaces the cost matrix. Intended for negative controls in the
    /// verification suites.
    pub fn with_cost(mut self, cost: DMatrix<f64>) -> Self {
        self.cost = cost;
        self
    }

    pub fn psi_wa(&self, y: &[u8]) -> Result<Vec<f64>, LossError> {
        check_binary(y, self.d).map_err(|_| self.dim_err("target", y.len()))?;
        Ok(self.psi_wa_unchecked(y))
    }

    pub(crate) fn psi_wa_unchecked(&self, y: &[u8]) -> Vec<f64> {
        self.wa
            .iter()
            .map(|f| match *f {
                WaFeature::Y(i) => f64::from(y[i]),
                WaFeature::NotY(i) => f64::from(1 - y[i]),
                WaFeature::ChildSum(i) => self
                    .parents
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p == Some(i))
                    .map(|(j, _)| f64::from(y[j]))
                    .sum(),
                WaFeature::One => 1.0,
            })
            .collect()
    }

    pub fn psi_a(&self, y_h: &[u8], y_r: &[u8]) -> Result<Vec<f64>, LossError> {
        check_binary(y_h, self.d).map_err(|_| self.dim_err("y_h", y_h.len()))?;
        check_binary(y_r, self.d).map_err(|_| self.dim_err("y_r", y_r.len()))?;
        Ok(self.psi_a_unchecked(y_h, y_r))
    }

    pub(crate) fn psi_a_unchecked(&self, y_h: &[u8], y_r: &[u8]) -> Vec<f64> {
        self.a
            .iter()
            .map(|form| form.iter().map(|&(m, coef)| coef * m.eval(y_h, y_r)).sum())
            .collect()
    }

    /// `M` with `ψ_a = M · (y_h; y_r; y_h ⊗ y_r; 1)`, shape `p × (2d + d² + 1)`.
    pub fn interaction_matrix(&self) -> DMatrix<f64> {
        let d = self.d;
        let mut m = DMatrix::zeros(self.p(), 2 * d + d * d + 1);
        for (row, form) in self.a.iter().enumerate() {
            for &(mono, coef) in form {
                m[(row, mono.stack_column(d))] += coef;
            }
        }
        m
    }

    /// `Cᵀ ψ_x`: the per-coordinate weights of `ψ_a` in the decoding objective.
    pub fn fold_cost(&self, psi_x: &[f64]) -> Result<Vec<f64>, LossError> {
        if psi_x.len() != self.q() {
            return Err(self.dim_err("psi_x", psi_x.len()));
        }
        Ok(self.fold_with(&self.cost, psi_x))
    }

    /// `⟨ψ_x, C_A ψ_a(y_h, y_r)⟩` with `C_A` the part of `C` scaled by `K_A`:
    /// the derivative of the decoding objective with respect to `K_A`.
    pub fn abstention_coefficient(&self, psi_x: &[f64], y_h: &[u8], y_r: &[u8]) -> Result<f64, LossError> {
        if psi_x.len() != self.q() {
            return Err(self.dim_err("psi_x", psi_x.len()));
        }
        let a = self.psi_a(y_h, y_r)?;
        Ok(self.fold_with(&self.parts.abstain, psi_x).iter().zip(&a).map(|(w, v)| w * v).sum())
    }

    pub(crate) fn fold_with(&self, matrix: &DMatrix<f64>, psi_x: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(psi_x);
        (matrix.transpose() * v).iter().copied().collect()
    }

    fn dim_err(&self, what: &'static str, actual: usize) -> LossError {
        let expected = if what == "psi_x" { self.q() } else { self.d };
        LossError::Dimension { what, expected, actual }
    }

    fn check_triple(&self, y_h: &[u8], y_r: &[u8], y: &[u8]) -> Result<(), LossError> {
        check_binary(y_h, self.d).map_err(|_| self.dim_err("y_h", y_h.len()))?;
        check_binary(y_r, self.d).map_err(|_| self.dim_err("y_r", y_r.len()))?;
        check_binary(y, self.d).map_err(|_| self.dim_err("target", y.len()))?;
        let legal = self
            .parents
            .iter()
            .enumerate()
            .all(|(i, p)| p.is_none_or(|p| y[i] <= y[p]));
        if legal {
            Ok(())
        } else {
            Err(LossError::IllegalTarget)
        }
    }

    /// The loss through the feature maps: `⟨ψ_wa(y), C ψ_a(y_h, y_r)⟩`.
    pub fn loss_innerproduct(&self, y_h: &[u8], y_r: &[u8], y: &[u8]) -> Result<f64, LossError> {
        self.check_triple(y_h, y_r, y)?;
        let wa = DVector::from_vec(self.psi_wa_unchecked(y));
        let a = DVector::from_vec(self.psi_a_unchecked(y_h, y_r));
        Ok(wa.dot(&(&self.cost * a)))
    }

    /// The loss from its indicator-sum definition; no matrices involved.
    pub fn loss_direct(&self, y_h: &[u8], y_r: &[u8], y: &[u8]) -> Result<f64, LossError> {
        self.check_triple(y_h, y_r, y)?;
        let f = compose_prediction(y_h, y_r)?;
        let value = match self.kind {
            LossKind::BinaryAbstention => match f[0] {
                Label::Abstain => self.k_a,
                l if l.matches(y[0]) => 0.0,
                _ => 1.0,
            },
            LossKind::Hamming => y_h.iter().zip(y).filter(|(h, y)| h != y).count() as f64,
            LossKind::HLoss => (0..self.d)
                .filter(|&i| {
                    let parent_ok = self.parents[i].is_none_or(|p| f[p].matches(y[p]));
                    !f[i].matches(y[i]) && parent_ok
                })
                .map(|i| self.weights[i])
                .sum(),
            LossKind::HaLoss => (0..self.d)
                .map(|i| {
                    let (parent_ok, parent_abstained) = match self.parents[i] {
                        None => (true, false),
                        Some(p) => (f[p].matches(y[p]), f[p] == Label::Abstain),
                    };
                    let wrong = !f[i].matches(y[i]);
                    let w = self.weights[i];
                    let mut total = 0.0;
                    if f[i] == Label::Abstain && parent_ok {
                        total += self.k_a * w;
                    }
                    if wrong && parent_abstained {
                        total += self.k_ac * w;
                    }
                    if wrong && parent_ok && f[i] != Label::Abstain {
                        total += w;
                    }
                    total
                })
                .sum(),
        };
        Ok(value)
    }

    /// Dense dump for audits.
    pub fn to_dump(&self) -> LossSpecDump {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        LossSpecDump {
            kind: self.kind,
            d: self.d,
            q: self.q(),
            p: self.p(),
            c: self.weights.clone(),
            k_a: self.k_a,
            k_ac: self.k_ac,
            consecutive: self.consecutive,
            cost: rows(&self.cost),
            interaction: rows(&self.interaction_matrix()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_dump()).expect("loss dump serializes")
    }
}

/// Structured-object form of a [`LossSpec`]; matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpecDump {
    pub kind: LossKind,
    pub d: usize,
    pub q: usize,
    pub p: usize,
    pub c: Vec<f64>,
    #[serde(rename = "K_A")]
    pub k_a: f64,
    #[serde(rename = "K_Ac")]
    pub k_ac: f64,
    pub consecutive: ConsecutiveRule,
    #[serde(rename = "C")]
    pub cost: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    pub interaction: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain2() -> HexGraph {
        HexGraph::new(2, &[(0, 1)], &[]).unwrap()
    }

    #[test]
    fn sibling_weight_recursion() {
        let single = HexGraph::new(1, &[], &[]).unwrap();
        assert_eq!(sibling_weights(&single).unwrap(), vec![1.0]);

        let mut h = Vec::new();
        for a in 0..10 {
            h.push((0, 1 + a));
            for k in 0..3 {
                h.push((1 + a, 11 + 3 * a + k));
            }
        }
        let g = HexGraph::new(41, &h, &[]).unwrap();
        let c = sibling_weights(&g).unwrap();
        assert_eq!(c[0], 1.0);
        assert!(c[1..11].iter().all(|&w| (w - 0.1).abs() < 1e-15));
        assert!(c[11..].iter().all(|&w| (w - 0.1 / 3.0).abs() < 1e-15));

        let dag = HexGraph::new(3, &[(0, 2), (1, 2)], &[]).unwrap();
        assert!(matches!(sibling_weights(&dag), Err(LossError::Graph(GraphError::NotATree))));
    }

    #[test]
    fn weight_scheme_multipliers() {
        let ws = WeightScheme::new(vec![1.0, 0.5], 0.4, 0.5);
        assert_eq!(ws.c_a, vec![0.4, 0.2]);
        assert_eq!(ws.c_ac, vec![0.5, 0.25]);
    }

    #[test]
    fn binary_case_table() {
        let spec = binary_abstention_spec(0.3).unwrap();
        assert_eq!(spec.loss_innerproduct(&[1], &[1], &[1]).unwrap(), 0.0);
        assert_eq!(spec.loss_innerproduct(&[0], &[1], &[1]).unwrap(), 1.0);
        for h in 0..2 {
            for y in 0..2 {
                assert!((spec.loss_innerproduct(&[h], &[0], &[y]).unwrap() - 0.3).abs() < 1e-15);
            }
        }
        let spec = binary_abstention_spec(0.2).unwrap();
        assert_eq!(spec.loss_direct(&[0], &[0], &[0]).unwrap(), 0.2);
        assert!(matches!(binary_abstention_spec(0.6), Err(LossError::RejectCost(_))));
        assert!(matches!(binary_abstention_spec(-0.1), Err(LossError::RejectCost(_))));
    }

    #[test]
    fn binary_printed_matrices() {
        let spec = binary_abstention_spec(0.3).unwrap();
        let expected = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.3, 1.0, 0.0, 0.3]);
        assert_eq!(spec.cost(), &expected);
        assert_eq!(spec.psi_a(&[1], &[0]).unwrap(), vec![0.0, 0.0, 1.0]);
        assert_eq!(spec.psi_wa(&[1]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn hamming_examples() {
        let spec = hamming_spec(3).unwrap();
        let ones = [1, 1, 1];
        assert_eq!(spec.loss_innerproduct(&[1, 0, 1], &ones, &[1, 0, 1]).unwrap(), 0.0);
        assert_eq!(spec.loss_innerproduct(&[0, 0, 1], &ones, &[1, 0, 1]).unwrap(), 1.0);
        let spec2 = hamming_spec(2).unwrap();
        assert_eq!(spec2.loss_innerproduct(&[0, 0], &[1, 1], &[1, 1]).unwrap(), 2.0);
        assert_eq!(spec2.psi_wa(&[1, 0]).unwrap(), vec![1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(hamming_spec(0), Err(LossError::EmptyStructure)));
    }

    #[test]
    fn hloss_examples() {
        let g = chain2();
        let spec = hloss_spec(&g, &[1.0, 1.0]).unwrap();
        let ones = [1, 1];
        assert_eq!(spec.loss_innerproduct(&[1, 1], &ones, &[1, 1]).unwrap(), 0.0);
        assert!((spec.loss_innerproduct(&[0, 0], &ones, &[1, 1]).unwrap() - 1.0).abs() < 1e-15);
        let spec = hloss_spec(&g, &[1.0, 0.5]).unwrap();
        assert!((spec.loss_innerproduct(&[1, 1], &ones, &[1, 0]).unwrap() - 0.5).abs() < 1e-15);
        // ψ_wa = (z; G z; 1)
        assert_eq!(spec.psi_wa(&[1, 1]).unwrap(), vec![1.0, 1.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn hloss_rejects_bad_weights() {
        let g = chain2();
        assert!(matches!(hloss_spec(&g, &[1.0]), Err(LossError::WeightLength { .. })));
        assert!(matches!(hloss_spec(&g, &[0.5, 1.0]), Err(LossError::InvalidWeights(_))));
        let dag = HexGraph::new(3, &[(0, 2), (1, 2)], &[]).unwrap();
        assert!(matches!(hloss_spec(&dag, &[1.0; 3]), Err(LossError::Graph(GraphError::NotATree))));
    }

    #[test]
    fn haloss_examples() {
        let g = chain2();
        let spec = haloss_spec(&g, &[1.0, 0.5], 0.4, 0.5).unwrap();
        assert!(spec.loss_innerproduct(&[1, 0], &[1, 1], &[1, 0]).unwrap().abs() < 1e-15);
        // abstain at the root, child correct
        let v = spec.loss_innerproduct(&[0, 1], &[0, 1], &[1, 1]).unwrap();
        assert!((v - 0.4).abs() < 1e-15, "{v}");
        assert!((spec.loss_direct(&[0, 1], &[0, 1], &[1, 1]).unwrap() - 0.4).abs() < 1e-15);
        // child wrong after the root abstention adds K_Ac · c_1
        let v = spec.loss_innerproduct(&[0, 0], &[0, 1], &[1, 1]).unwrap();
        assert!((v - 0.65).abs() < 1e-15, "{v}");
        assert!(matches!(
            haloss_spec(&g, &[1.0, 0.5], -0.1, 0.0),
            Err(LossError::NegativeMultiplier { .. })
        ));
    }

    #[test]
    fn illegal_target_is_an_error() {
        let spec = haloss_spec(&chain2(), &[1.0, 0.5], 0.2, 0.2).unwrap();
        assert_eq!(spec.loss_direct(&[0, 0], &[1, 1], &[0, 1]).unwrap_err(), LossError::IllegalTarget);
        assert!(matches!(
            spec.loss_innerproduct(&[0], &[1, 1], &[0, 0]).unwrap_err(),
            LossError::Dimension { .. }
        ));
    }

    #[test]
    fn cost_parts_recombine() {
        let spec = haloss_spec(&chain2(), &[1.0, 0.5], 0.3, 0.7).unwrap();
        let parts = spec.cost_parts();
        let rebuilt = &parts.base + &parts.abstain * 0.3 + &parts.regret * 0.7;
        assert!((rebuilt - spec.cost()).amax() < 1e-15);
    }

    #[test]
    fn dump_has_dense_matrices() {
        let spec = haloss_spec(&chain2(), &[1.0, 0.5], 0.3, 0.7).unwrap();
        let dump: LossSpecDump = serde_json::from_str(&spec.to_json()).unwrap();
        assert_eq!(dump.cost.len(), spec.q());
        assert_eq!(dump.interaction.len(), spec.p());
        assert_eq!(dump.interaction[0].len(), 2 * 2 + 4 + 1);
        assert_eq!(dump.k_a, 0.3);
    }
}
