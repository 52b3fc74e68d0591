//! Branch and bound over the binary `h` and `r` variables of an
//! [`IlpInstance`], with LP relaxations solved by the in-crate simplex.
//!
//! Nodes are explored depth first (the child nearer the fractional value
//! first) and the search falls back to best-bound order once the node count
//! passes `depth_first_limit`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::ilp::IlpInstance;
use super::simplex::{solve, LpOutcome, LpProblem};
use super::DecodeError;
use crate::hexgraph::AbstainedPrediction;

const INT_TOL: f64 = 1e-7;
const PRUNE_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BnbOptions {
    pub depth_first_limit: usize,
    pub max_nodes: usize,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self { depth_first_limit: 10_000, max_nodes: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbReport {
    pub optimum: AbstainedPrediction,
    /// Objective at `optimum`, offset included, recomputed exactly.
    pub objective_value: f64,
    /// Number of LP relaxations solved.
    pub nodes_explored: usize,
    pub lp_integral_at_root: bool,
    /// LP bound at the root, offset included.
    pub root_bound: f64,
    pub warm_start_used: bool,
}

#[derive(Debug, Clone)]
struct Node {
    bound: f64,
    seq: usize,
    fixings: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap on the reversed bound: smallest bound pops first, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.seq.cmp(&self.seq))
    }
}

struct Incumbent {
    h: Vec<u8>,
    r: Vec<u8>,
    value: f64,
}

impl Incumbent {
    fn improved_by(&self, value: f64, h: &[u8], r: &[u8]) -> bool {
        value < self.value - TIE_TOL
            || (value <= self.value + TIE_TOL && (h, r) < (self.h.as_slice(), self.r.as_slice()))
    }
}

/// Solves the LP relaxation of `ilp`. Returns the fractional optimum and its
/// value (offset included), a lower bound on the integer optimum.
pub fn solve_lp_relaxation(ilp: &IlpInstance) -> Result<(Vec<f64>, f64), DecodeError> {
    match solve(LpProblem {
        objective: ilp.objective(),
        rows: ilp.rows(),
        rhs: ilp.rhs(),
        lower: ilp.lower(),
        upper: ilp.upper(),
    })? {
        LpOutcome::Optimal { x, value } => Ok((x, value + ilp.offset())),
        LpOutcome::Infeasible => Err(DecodeError::Infeasible),
    }
}

pub fn branch_and_bound(
    ilp: &IlpInstance,
    warm_start: Option<&AbstainedPrediction>,
) -> Result<BnbReport, DecodeError> {
    branch_and_bound_with(ilp, warm_start, BnbOptions::default())
}

pub fn branch_and_bound_with(
    ilp: &IlpInstance,
    warm_start: Option<&AbstainedPrediction>,
    options: BnbOptions,
) -> Result<BnbReport, DecodeError> {
    let d = ilp.d();
    let mut incumbent: Option<Incumbent> = None;
    let mut warm_start_used = false;
    if let Some(w) = warm_start {
        if w.d() != d || !ilp.is_feasible(&ilp.point(&w.y_h, &w.y_r)) {
            return Err(DecodeError::InvalidWarmStart);
        }
        incumbent = Some(Incumbent {
            h: w.y_h.clone(),
            r: w.y_r.clone(),
            value: ilp.evaluate(&w.y_h, &w.y_r),
        });
        warm_start_used = true;
    }

    let mut depth_stack: Vec<Node> = vec![Node { bound: f64::NEG_INFINITY, seq: 0, fixings: Vec::new() }];
    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut seq = 1usize;
    let mut nodes = 0usize;
    let mut root: Option<(bool, f64)> = None;
    let mut lower = ilp.lower().to_vec();
    let mut upper = ilp.upper().to_vec();

    loop {
        if nodes >= options.depth_first_limit && !depth_stack.is_empty() {
            heap.extend(depth_stack.drain(..));
        }
        let Some(node) = depth_stack.pop().or_else(|| heap.pop()) else { break };
        if incumbent.as_ref().is_some_and(|inc| node.bound >= inc.value - PRUNE_TOL) {
            continue;
        }
        if nodes >= options.max_nodes {
            return Err(DecodeError::NodeLimit(options.max_nodes));
        }

        lower.copy_from_slice(ilp.lower());
        upper.copy_from_slice(ilp.upper());
        for &(var, val) in &node.fixings {
            lower[var] = val;
            upper[var] = val;
        }
        nodes += 1;
        let outcome = solve(LpProblem {
            objective: ilp.objective(),
            rows: ilp.rows(),
            rhs: ilp.rhs(),
            lower: &lower,
            upper: &upper,
        })?;
        let LpOutcome::Optimal { x, value } = outcome else {
            if root.is_none() {
                root = Some((false, f64::INFINITY));
            }
            continue;
        };
        let bound = value + ilp.offset();

        let mut branch: Option<(usize, f64)> = None;
        let mut best_frac = INT_TOL;
        for (k, &v) in x.iter().enumerate().take(ilp.binary_count()) {
            let frac = (v - v.round()).abs();
            if frac > best_frac + TIE_TOL {
                best_frac = frac;
                branch = Some((k, v));
            }
        }
        if root.is_none() {
            root = Some((branch.is_none(), bound));
        }
        if incumbent.as_ref().is_some_and(|inc| bound >= inc.value - PRUNE_TOL) {
            continue;
        }

        match branch {
            None => {
                let h: Vec<u8> = x[..d].iter().map(|v| v.round() as u8).collect();
                let r: Vec<u8> = x[d..2 * d].iter().map(|v| v.round() as u8).collect();
                let exact = ilp.evaluate(&h, &r);
                if incumbent.as_ref().is_none_or(|inc| inc.improved_by(exact, &h, &r)) {
                    incumbent = Some(Incumbent { h, r, value: exact });
                }
            }
            Some((var, v)) => {
                let near = if v >= 0.5 { 1.0 } else { 0.0 };
                // push the far child first so the near one is popped next
                for val in [1.0 - near, near] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((var, val));
                    let child = Node { bound, seq, fixings };
                    seq += 1;
                    if nodes >= options.depth_first_limit {
                        heap.push(child);
                    } else {
                        depth_stack.push(child);
                    }
                }
            }
        }
    }

    let inc = incumbent.ok_or(DecodeError::Infeasible)?;
    let (lp_integral_at_root, root_bound) = root.unwrap_or((false, f64::INFINITY));
    Ok(BnbReport {
        optimum: AbstainedPrediction::new(inc.h, inc.r)?,
        objective_value: inc.value,
        nodes_explored: nodes,
        lp_integral_at_root,
        root_bound,
        warm_start_used,
    })
}
