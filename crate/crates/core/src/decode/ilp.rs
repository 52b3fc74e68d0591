//! Integer program for the abstention-aware decoding step.
//!
//! Variables are `h_i`, `r_i` and one product variable `c_ij ≈ h_i r_j` for
//! every pair the loss actually references. Products are linearized with the
//! McCormick rows `c ≤ h_i`, `c ≤ r_j`, `h_i + r_j − c ≤ 1`. Nodes that cannot
//! abstain get `r_i` fixed to one, and their products collapse to `h_i`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::simplex::SparseRow;
use super::DecodeError;
use crate::hexgraph::{ConsecutiveRule, HexGraph, HierarchyRule, PredictionSpace};
use crate::losses::{LossSpec, Monomial};

const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    Predict(usize),
    Reject(usize),
    Product(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    ProductBelowH(usize, usize),
    ProductBelowR(usize, usize),
    ProductAbove(usize, usize),
    Hierarchy(usize),
    Consecutive(usize),
}

/// `min objᵀ v + offset  s.t.  rows · v ≤ rhs,  lower ≤ v ≤ upper`, with the
/// first `2d` variables binary.
#[derive(Debug, Clone)]
pub struct IlpInstance {
    d: usize,
    vars: Vec<VarRole>,
    objective: Vec<f64>,
    offset: f64,
    rows: Vec<SparseRow>,
    rhs: Vec<f64>,
    row_kinds: Vec<RowKind>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    stacked: Vec<f64>,
}

/// Where a monomial lands once abstention-free nodes are substituted.
#[derive(Clone, Copy)]
enum Term {
    Const,
    Var(usize),
}

struct Layout<'a> {
    d: usize,
    space: &'a PredictionSpace,
    products: BTreeMap<(usize, usize), usize>,
}

impl Layout<'_> {
    fn fixed(&self, j: usize) -> bool {
        !self.space.can_abstain(j)
    }

    fn needs_product(&self, m: Monomial) -> Option<(usize, usize)> {
        match m {
            Monomial::HR(i, j) if !self.fixed(j) => Some((i, j)),
            _ => None,
        }
    }

    fn term(&self, m: Monomial) -> Term {
        match m {
            Monomial::One => Term::Const,
            Monomial::H(i) => Term::Var(i),
            Monomial::R(j) if self.fixed(j) => Term::Const,
            Monomial::R(j) => Term::Var(self.d + j),
            Monomial::HR(i, j) if self.fixed(j) => Term::Var(i),
            Monomial::HR(i, j) => Term::Var(self.products[&(i, j)]),
        }
    }
}

/// Builds the decoding ILP for the folded score `Cᵀ ψ_x`.
pub fn build_ilp(
    spec: &LossSpec,
    g: &HexGraph,
    psi_x: &[f64],
    space: &PredictionSpace,
) -> Result<IlpInstance, DecodeError> {
    let d = g.d();
    if spec.d() != d {
        return Err(DecodeError::Dimension { what: "loss size", expected: d, actual: spec.d() });
    }
    if psi_x.iter().any(|v| !v.is_finite()) {
        return Err(DecodeError::NonFinite);
    }
    let parents = g.tree_parents()?.to_vec();
    space.check_mask(d)?;
    let weights = spec.fold_cost(psi_x)?;
    let stacked = spec.fold_with(&spec.interaction_matrix(), &weights);

    let mut layout = Layout { d, space, products: BTreeMap::new() };
    let mut pairs = BTreeSet::new();
    for form in spec.a_features() {
        for &(m, _) in form {
            if let Some(pair) = layout.needs_product(m) {
                pairs.insert(pair);
            }
        }
    }
    if space.hierarchy == HierarchyRule::Relaxed {
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                for pair in [(i, p), (p, p)] {
                    if let Some(pair) = layout.needs_product(Monomial::HR(pair.0, pair.1)) {
                        pairs.insert(pair);
                    }
                }
            }
        }
    }
    let mut vars: Vec<VarRole> = (0..d).map(VarRole::Predict).chain((0..d).map(VarRole::Reject)).collect();
    for &(i, j) in &pairs {
        layout.products.insert((i, j), vars.len());
        vars.push(VarRole::Product(i, j));
    }
    let nvars = vars.len();

    let mut objective = vec![0.0; nvars];
    let mut offset = 0.0;
    for (form, &w) in spec.a_features().iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        for &(m, coef) in form {
            match layout.term(m) {
                Term::Const => offset += w * coef,
                Term::Var(v) => objective[v] += w * coef,
            }
        }
    }

    let mut lower = vec![0.0; nvars];
    let upper = vec![1.0; nvars];
    for j in 0..d {
        if layout.fixed(j) {
            lower[d + j] = 1.0;
        }
    }

    let mut rows: Vec<SparseRow> = Vec::new();
    let mut rhs = Vec::new();
    let mut row_kinds = Vec::new();
    for (&(i, j), &c) in &layout.products {
        rows.push(vec![(c, 1.0), (i, -1.0)]);
        rhs.push(0.0);
        row_kinds.push(RowKind::ProductBelowH(i, j));
        rows.push(vec![(c, 1.0), (d + j, -1.0)]);
        rhs.push(0.0);
        row_kinds.push(RowKind::ProductBelowR(i, j));
        rows.push(vec![(i, 1.0), (d + j, 1.0), (c, -1.0)]);
        rhs.push(1.0);
        row_kinds.push(RowKind::ProductAbove(i, j));
    }
    for (i, p) in parents.iter().enumerate() {
        let Some(p) = *p else { continue };
        let row = match space.hierarchy {
            HierarchyRule::Strict => linear_row(&layout, &[(Monomial::H(i), 1.0), (Monomial::H(p), -1.0)]),
            HierarchyRule::Relaxed => {
                linear_row(&layout, &[(Monomial::HR(i, p), 1.0), (Monomial::HR(p, p), -1.0)])
            }
        };
        push_row(&mut rows, &mut rhs, &mut row_kinds, row, 0.0, RowKind::Hierarchy(i));
        let (row, b) = match space.consecutive {
            ConsecutiveRule::NoConsecutiveAbstention => {
                (linear_row(&layout, &[(Monomial::R(i), -1.0), (Monomial::R(p), -1.0)]), -1.0)
            }
            ConsecutiveRule::Literal => {
                (linear_row(&layout, &[(Monomial::R(i), 1.0), (Monomial::R(p), 1.0)]), 1.0)
            }
        };
        push_row(&mut rows, &mut rhs, &mut row_kinds, row, b, RowKind::Consecutive(i));
    }

    Ok(IlpInstance { d, vars, objective, offset, rows, rhs, row_kinds, lower, upper, stacked })
}

/// Linear row over variables plus a constant part moved to the right-hand side.
fn linear_row(layout: &Layout<'_>, terms: &[(Monomial, f64)]) -> (SparseRow, f64) {
    let mut coefs: BTreeMap<usize, f64> = BTreeMap::new();
    let mut constant = 0.0;
    for &(m, a) in terms {
        match layout.term(m) {
            Term::Const => constant += a,
            Term::Var(v) => *coefs.entry(v).or_insert(0.0) += a,
        }
    }
    (coefs.into_iter().filter(|(_, a)| *a != 0.0).collect(), constant)
}

fn push_row(
    rows: &mut Vec<SparseRow>,
    rhs: &mut Vec<f64>,
    kinds: &mut Vec<RowKind>,
    (row, constant): (SparseRow, f64),
    b: f64,
    kind: RowKind,
) {
    rows.push(row);
    rhs.push(b - constant);
    kinds.push(kind);
}

impl IlpInstance {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn vars(&self) -> &[VarRole] {
        &self.vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    /// `Mᵀ(Cᵀ ψ_x)` over the full stack `(y_h; y_r; y_h ⊗ y_r; 1)`, before
    /// sparsification and substitution of fixed reject variables.
    pub fn stacked_objective(&self) -> &[f64] {
        &self.stacked
    }

    /// Constant term of the objective.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn row_kinds(&self) -> &[RowKind] {
        &self.row_kinds
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Number of binary variables (`h` then `r`).
    pub fn binary_count(&self) -> usize {
        2 * self.d
    }

    /// The full variable vector for a binary `(h, r)` pair.
    pub fn point(&self, h: &[u8], r: &[u8]) -> Vec<f64> {
        self.vars
            .iter()
            .map(|v| match *v {
                VarRole::Predict(i) => f64::from(h[i]),
                VarRole::Reject(j) => f64::from(r[j]),
                VarRole::Product(i, j) => f64::from(h[i] * r[j]),
            })
            .collect()
    }

    /// Objective value of a point, offset included.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Objective value of a binary `(h, r)` pair.
    pub fn evaluate(&self, h: &[u8], r: &[u8]) -> f64 {
        self.value_at(&self.point(h, r))
    }

    pub fn is_feasible(&self, x: &[f64]) -> bool {
        x.len() == self.vars.len()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - FEAS_TOL && *v <= u + FEAS_TOL)
            && self
                .rows
                .iter()
                .zip(&self.rhs)
                .all(|(row, b)| row.iter().map(|&(j, a)| a * x[j]).sum::<f64>() <= b + FEAS_TOL)
    }

    /// Dense constraint matrix.
    pub fn constraint_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.rows.len(), self.vars.len());
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                a[(i, j)] += v;
            }
        }
        a
    }

    fn var_name(&self, k: usize) -> String {
        match self.vars[k] {
            VarRole::Predict(i) => format!("h{i}"),
            VarRole::Reject(j) => format!("r{j}"),
            VarRole::Product(i, j) => format!("c{i}_{j}"),
        }
    }

    fn row_name(&self, k: usize) -> String {
        match self.row_kinds[k] {
            RowKind::ProductBelowH(i, j) => format!("mc_h_{i}_{j}"),
            RowKind::ProductBelowR(i, j) => format!("mc_r_{i}_{j}"),
            RowKind::ProductAbove(i, j) => format!("mc_hr_{i}_{j}"),
            RowKind::Hierarchy(i) => format!("hier_{i}"),
            RowKind::Consecutive(i) => format!("rej_{i}"),
        }
    }

    fn write_expr(&self, out: &mut String, terms: impl Iterator<Item = (usize, f64)>) {
        let mut first = true;
        for (j, a) in terms {
            if a == 0.0 {
                continue;
            }
            let sign = if a < 0.0 { "-" } else if first { "" } else { "+" };
            let mag = a.abs();
            if !first || sign == "-" {
                out.push(' ');
            }
            out.push_str(sign);
            if !sign.is_empty() {
                out.push(' ');
            }
            if mag != 1.0 {
                let _ = write!(out, "{mag} ");
            }
            out.push_str(&self.var_name(j));
            first = false;
        }
        if first {
            out.push_str(" 0 h0");
        }
    }

    /// The instance in CPLEX LP format. The objective constant is recorded in
    /// a comment because the format has no portable slot for it.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\\ objective offset {}", self.offset);
        out.push_str("Minimize\n obj:");
        self.write_expr(&mut out, self.objective.iter().copied().enumerate());
        out.push_str("\nSubject To\n");
        for (k, row) in self.rows.iter().enumerate() {
            let _ = write!(out, " {}:", self.row_name(k));
            self.write_expr(&mut out, row.iter().copied());
            let _ = writeln!(out, " <= {}", self.rhs[k]);
        }
        out.push_str("Bounds\n");
        for k in 0..self.vars.len() {
            let _ = writeln!(out, " {} <= {} <= {}", self.lower[k], self.var_name(k), self.upper[k]);
        }
        out.push_str("Binaries\n");
        for k in 0..self.binary_count() {
            let _ = writeln!(out, " {}", self.var_name(k));
        }
        out.push_str("End\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hexgraph::binary_vectors;
    use crate::losses::{haloss_spec, hamming_spec};

    fn chain(d: usize) -> HexGraph {
        let edges: Vec<(usize, usize)> = (1..d).map(|i| (i - 1, i)).collect();
        HexGraph::new(d, &edges, &[]).unwrap()
    }

    #[test]
    fn integer_points_match_the_prediction_space() {
        let g = chain(3);
        let spec = haloss_spec(&g, &[1.0, 0.5, 0.25], 0.3, 0.6).unwrap();
        let psi = vec![0.1; spec.q()];
        for space in [
            PredictionSpace::standard(),
            PredictionSpace::standard().strict(true),
            PredictionSpace { consecutive: ConsecutiveRule::Literal, ..PredictionSpace::standard() },
            PredictionSpace::standard().abstain_only_on(3, &[1]),
        ] {
            let ilp = build_ilp(&spec, &g, &psi, &space).unwrap();
            for h in binary_vectors(3) {
                for r in binary_vectors(3) {
                    let pred = crate::hexgraph::AbstainedPrediction::new(h.clone(), r.clone()).unwrap();
                    let inside = space.contains(&g, &pred).unwrap();
                    assert_eq!(ilp.is_feasible(&ilp.point(&h, &r)), inside, "{h:?} {r:?} {space:?}");
                }
            }
        }
    }

    #[test]
    fn objective_matches_folded_score() {
        let g = chain(4);
        let spec = haloss_spec(&g, &[1.0, 0.5, 0.25, 0.125], 0.2, 0.9).unwrap();
        let psi: Vec<f64> = (0..spec.q()).map(|k| (k as f64 * 0.37).sin()).collect();
        let w = spec.fold_cost(&psi).unwrap();
        let ilp = build_ilp(&spec, &g, &psi, &PredictionSpace::standard()).unwrap();
        for h in binary_vectors(4) {
            for r in binary_vectors(4) {
                let direct: f64 = spec.psi_a(&h, &r).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum();
                assert!((ilp.evaluate(&h, &r) - direct).abs() < 1e-12);
                let stack = crate::losses::interaction_stack(&h, &r);
                let dense: f64 = stack.iter().zip(ilp.stacked_objective()).map(|(a, b)| a * b).sum();
                assert!((dense - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fixed_reject_variables_drop_products() {
        let g = chain(3);
        let spec = haloss_spec(&g, &[1.0, 0.5, 0.25], 0.2, 0.9).unwrap();
        let psi = vec![0.5; spec.q()];
        let ilp = build_ilp(&spec, &g, &psi, &PredictionSpace::without_abstention(3)).unwrap();
        assert_eq!(ilp.vars().len(), 6);
        assert!(ilp.lower()[3..].iter().all(|&l| l == 1.0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = chain(3);
        let spec = hamming_spec(4).unwrap();
        let err = build_ilp(&spec, &g, &vec![0.0; spec.q()], &PredictionSpace::standard()).unwrap_err();
        assert!(matches!(err, DecodeError::Dimension { .. }));
    }

    #[test]
    fn lp_format_lists_every_section() {
        let g = chain(2);
        let spec = haloss_spec(&g, &[1.0, 0.5], 0.2, 0.9).unwrap();
        let ilp = build_ilp(&spec, &g, &vec![0.3; spec.q()], &PredictionSpace::standard()).unwrap();
        let text = ilp.to_lp_format();
        for section in ["Minimize", "Subject To", "Bounds", "Binaries", "End"] {
            assert!(text.contains(section), "{text}");
        }
        assert_eq!(text.matches("mc_hr_").count(), ilp.vars().len() - 4);
    }
}
