#![allow(dead_code)]

use abstain::hexgraph::{ConsecutiveRule, HexGraph, PredictionSpace};
use abstain::losses::{self, LossKind, LossSpec};
use rand::Rng;

/// Random tree on `d` nodes rooted at 0; node `i` hangs under a uniform earlier node.
pub fn random_tree<R: Rng>(rng: &mut R, d: usize) -> HexGraph {
    let edges: Vec<_> = (1..d).map(|i| (rng.random_range(0..i), i)).collect();
    HexGraph::new(d, &edges, &[]).unwrap()
}

/// Every tree shape on `d` nodes with parents drawn from earlier indices.
pub fn all_trees(d: usize) -> Vec<HexGraph> {
    let mut out = Vec::new();
    let mut parents = vec![0usize; d];
    loop {
        let edges: Vec<_> = (1..d).map(|i| (parents[i], i)).collect();
        out.push(HexGraph::new(d, &edges, &[]).unwrap());
        // odometer over parents[i] ∈ 0..i
        let mut i = d;
        loop {
            if i <= 1 {
                return out;
            }
            i -= 1;
            if parents[i] + 1 < i {
                parents[i] += 1;
                for p in parents.iter_mut().skip(i + 1) {
                    *p = 0;
                }
                break;
            }
        }
    }
}

/// A spec of the given kind on `g`, with sibling weights for the tree losses.
pub fn spec_for(kind: LossKind, g: &HexGraph, k_a: f64, k_ac: f64) -> LossSpec {
    let c = losses::sibling_weights(g).unwrap();
    match kind {
        LossKind::BinaryAbstention => losses::binary_abstention_spec(k_a.min(0.5)).unwrap(),
        LossKind::Hamming => losses::hamming_spec(g.d()).unwrap(),
        LossKind::HLoss => losses::hloss_spec(g, &c).unwrap(),
        LossKind::HaLoss => losses::haloss_spec(g, &c, k_a, k_ac).unwrap(),
    }
}

pub fn standard_space() -> PredictionSpace {
    PredictionSpace::standard()
}

/// One of the four rule combinations, drawn uniformly, sometimes with a
/// random abstention mask.
pub fn random_space<R: Rng>(rng: &mut R, d: usize) -> PredictionSpace {
    let mut space = PredictionSpace::standard().strict(rng.random_bool(0.5));
    if rng.random_bool(0.5) {
        space.consecutive = ConsecutiveRule::Literal;
    }
    if rng.random_bool(0.25) {
        space.abstainable = Some((0..d).map(|_| rng.random_bool(0.6)).collect());
    }
    space
}

/// A spec of `kind` matching the consecutive rule of `space`, with random
/// abstention multipliers.
pub fn random_spec<R: Rng>(rng: &mut R, kind: LossKind, g: &HexGraph, space: &PredictionSpace) -> LossSpec {
    let c = losses::sibling_weights(g).unwrap();
    match kind {
        LossKind::BinaryAbstention => losses::binary_abstention_spec(rng.random_range(0.0..=0.5)).unwrap(),
        LossKind::Hamming => losses::hamming_spec(g.d()).unwrap(),
        LossKind::HLoss => losses::hloss_spec_with_rule(g, &c, space.consecutive).unwrap(),
        LossKind::HaLoss => losses::haloss_spec_with_rule(
            g,
            &c,
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.5),
            space.consecutive,
        )
        .unwrap(),
    }
}

/// A score vector: half the time uniform noise, otherwise a random mixture of
/// `ψ_wa` over legal labelings (what a well-fitted surrogate outputs).
pub fn random_scores<R: Rng>(rng: &mut R, spec: &LossSpec, g: &HexGraph) -> Vec<f64> {
    if rng.random_bool(0.5) {
        return (0..spec.q()).map(|_| rng.random_range(-1.0..1.0)).collect();
    }
    let ys = g.enumerate_state_space(20).unwrap();
    let mut psi = vec![0.0; spec.q()];
    let mut total = 0.0;
    for _ in 0..3 {
        let y = &ys[rng.random_range(0..ys.len())];
        let w: f64 = rng.random_range(0.05..1.0);
        total += w;
        for (p, v) in psi.iter_mut().zip(spec.psi_wa(&y.y).unwrap()) {
            *p += w * v;
        }
    }
    psi.iter_mut().for_each(|p| *p /= total);
    psi
}

/// Tree size for a loss kind: the binary loss lives on a single node.
pub fn random_size<R: Rng>(rng: &mut R, kind: LossKind, max_d: usize) -> usize {
    if kind == LossKind::BinaryAbstention {
        1
    } else {
        rng.random_range(1..=max_d)
    }
}

/// Kernel values computed from the definitions, independent of the library.
pub fn kernel_value(gaussian: Option<f64>, a: &[f64], b: &[f64]) -> f64 {
    match gaussian {
        None => a.iter().zip(b).map(|(u, v)| u * v).sum(),
        Some(gamma) => (-gamma * a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>()).exp(),
    }
}

/// Ridge prediction from the full `qn × qn` operator system
/// `(K ⊗ I_q + λ I) c = vec(Ψ)`, solved by LU; `ĝ(x) = Σ_i k(x, x_i) c_i`.
pub fn dense_operator_ridge(
    gaussian: Option<f64>,
    xs: &[Vec<f64>],
    psi: &[Vec<f64>],
    lambda: f64,
    x: &[f64],
) -> Vec<f64> {
    let (n, q) = (xs.len(), psi[0].len());
    let big = nalgebra::DMatrix::from_fn(n * q, n * q, |r, c| {
        let (i, a) = (r / q, r % q);
        let (j, b) = (c / q, c % q);
        let k = if a == b { kernel_value(gaussian, &xs[i], &xs[j]) } else { 0.0 };
        k + if r == c { lambda } else { 0.0 }
    });
    let rhs = nalgebra::DVector::from_fn(n * q, |r, _| psi[r / q][r % q]);
    let coef = big.lu().solve(&rhs).expect("regularized system is invertible");
    (0..q).map(|a| (0..n).map(|i| kernel_value(gaussian, x, &xs[i]) * coef[i * q + a]).sum()).collect()
}

/// Linear-kernel ridge in primal form: `W = (XᵀX + λ I_m)⁻¹ XᵀΨ`, `ĝ(x) = Wᵀx`.
pub fn primal_linear_ridge(xs: &[Vec<f64>], psi: &[Vec<f64>], lambda: f64, x: &[f64]) -> Vec<f64> {
    let (n, m, q) = (xs.len(), xs[0].len(), psi[0].len());
    let xm = nalgebra::DMatrix::from_fn(n, m, |i, j| xs[i][j]);
    let pm = nalgebra::DMatrix::from_fn(n, q, |i, j| psi[i][j]);
    let lhs = xm.transpose() * &xm + nalgebra::DMatrix::identity(m, m) * lambda;
    let w = lhs.lu().solve(&(xm.transpose() * pm)).expect("regularized system is invertible");
    (w.transpose() * nalgebra::DVector::from_column_slice(x)).iter().copied().collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}
