//! Dense bounded-variable primal simplex.
//!
//! Solves `min cᵀx  s.t.  A x ≤ b,  l ≤ x ≤ u` with finite bounds. Fixed
//! variables (`l = u`) are folded into the right-hand side before the tableau
//! is built. Phase one drives artificial variables out for rows whose slack
//! starts negative. Pricing is Dantzig's rule; after a run of degenerate pivots
//! the solver switches to Bland's rule until it makes progress again, which
//! rules out cycling.

use std::fmt;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const DEGENERATE_RUN: usize = 50;

/// A sparse row: `(column, coefficient)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

/// Borrowed view of an LP in inequality form.
#[derive(Debug, Clone, Copy)]
pub struct LpProblem<'a> {
    pub objective: &'a [f64],
    pub rows: &'a [SparseRow],
    pub rhs: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpError {
    Unbounded,
    IterationLimit(usize),
    Malformed(String),
}

impl fmt::Display for LpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpError::Unbounded => write!(f, "linear program is unbounded"),
            LpError::IterationLimit(n) => write!(f, "simplex exceeded {n} iterations"),
            LpError::Malformed(m) => write!(f, "malformed linear program: {m}"),
        }
    }
}

impl std::error::Error for LpError {}

struct Tableau {
    m: usize,
    cols: usize,
    t: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    at_upper: Vec<bool>,
    ub: Vec<f64>,
    enterable: Vec<bool>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.cols + j]
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.ub[j]
        } else {
            0.0
        }
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.cols..(i + 1) * self.cols];
                for (dj, tij) in d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        d
    }

    fn pivot(&mut self, r: usize, j: usize, d: &mut [f64]) {
        let cols = self.cols;
        let piv = self.at(r, j);
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v /= piv;
        }
        let pivot_row: Vec<f64> = self.t[r * cols..(r + 1) * cols].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * cols + j];
            if f != 0.0 {
                for (v, p) in self.t[i * cols..(i + 1) * cols].iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
        let dj = d[j];
        if dj != 0.0 {
            for (v, p) in d.iter_mut().zip(&pivot_row) {
                *v -= dj * p;
            }
        }
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.is_basic[j] = true;
        self.basis[r] = j;
    }

    /// Runs simplex iterations for `cost` until optimal.
    fn optimize(&mut self, cost: &[f64], max_iter: usize) -> Result<(), LpError> {
        let mut d = self.reduced_costs(cost);
        let mut degenerate = 0usize;
        for _ in 0..max_iter {
            let bland = degenerate >= DEGENERATE_RUN;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.cols {
                if self.is_basic[j] || !self.enterable[j] {
                    continue;
                }
                let gain = if self.at_upper[j] { d[j] } else { -d[j] };
                if gain > COST_TOL {
                    if bland {
                        entering = Some((j, gain));
                        break;
                    }
                    if entering.is_none_or(|(_, g)| gain > g) {
                        entering = Some((j, gain));
                    }
                }
            }
            let Some((j, _)) = entering else {
                return Ok(());
            };
            let dir = if self.at_upper[j] { -1.0 } else { 1.0 };

            // ratio test
            let mut best_t = f64::INFINITY;
            let mut leave: Option<usize> = None;
            for i in 0..self.m {
                let a = dir * self.at(i, j);
                let k = self.basis[i];
                let limit = if a > PIVOT_TOL {
                    self.beta[i] / a
                } else if a < -PIVOT_TOL && self.ub[k].is_finite() {
                    (self.ub[k] - self.beta[i]) / -a
                } else {
                    continue;
                };
                let limit = limit.max(0.0);
                let better = match leave {
                    None => true,
                    Some(cur) => {
                        if limit < best_t - PIVOT_TOL {
                            true
                        } else if limit <= best_t + PIVOT_TOL {
                            if bland {
                                k < self.basis[cur]
                            } else {
                                a.abs() > (dir * self.at(cur, j)).abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    best_t = if leave.is_none() { limit } else { best_t.min(limit) };
                    leave = Some(i);
                }
            }
            let flip = self.ub[j].is_finite() && self.ub[j] <= best_t + PIVOT_TOL;
            let step = if flip { self.ub[j] } else { best_t };
            if !step.is_finite() {
                return Err(LpError::Unbounded);
            }
            if step > 1e-12 {
                degenerate = 0;
            } else {
                degenerate += 1;
            }
            for i in 0..self.m {
                let a = dir * self.at(i, j);
                if a != 0.0 {
                    self.beta[i] -= a * step;
                }
            }
            if flip {
                self.at_upper[j] = !self.at_upper[j];
                continue;
            }
            let r = leave.expect("finite step implies a leaving row");
            let k = self.basis[r];
            let a = dir * self.at(r, j);
            self.at_upper[k] = a < 0.0;
            let entering_value = self.nonbasic_value(j) + dir * step;
            self.at_upper[j] = false;
            self.pivot(r, j, &mut d);
            self.beta[r] = entering_value;
        }
        Err(LpError::IterationLimit(max_iter))
    }
}

/// Solves the LP. Every bound must be finite and `lower ≤ upper`.
pub fn solve(lp: LpProblem<'_>) -> Result<LpOutcome, LpError> {
    let nvars = lp.objective.len();
    if lp.lower.len() != nvars || lp.upper.len() != nvars || lp.rows.len() != lp.rhs.len() {
        return Err(LpError::Malformed("inconsistent dimensions".into()));
    }
    for j in 0..nvars {
        if !(lp.lower[j].is_finite() && lp.upper[j].is_finite()) || lp.lower[j] > lp.upper[j] + FEAS_TOL {
            return Err(LpError::Malformed(format!("bad bounds on variable {j}")));
        }
    }

    // fold fixed variables and shift the rest to start at zero
    let mut free_index = vec![usize::MAX; nvars];
    let mut free = Vec::new();
    for j in 0..nvars {
        if lp.upper[j] - lp.lower[j] > FEAS_TOL {
            free_index[j] = free.len();
            free.push(j);
        }
    }
    let n = free.len();
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::with_capacity(lp.rows.len());
    for (row, &b) in lp.rows.iter().zip(lp.rhs) {
        let mut shifted = b;
        let mut coefs = Vec::new();
        for &(j, a) in row {
            if j >= nvars {
                return Err(LpError::Malformed(format!("column {j} out of range")));
            }
            shifted -= a * lp.lower[j];
            if free_index[j] != usize::MAX && a != 0.0 {
                coefs.push((free_index[j], a));
            }
        }
        if coefs.is_empty() {
            if shifted < -FEAS_TOL {
                return Ok(LpOutcome::Infeasible);
            }
            continue;
        }
        rows.push((coefs, shifted));
    }
    let m = rows.len();
    let constant: f64 = (0..nvars).map(|j| lp.objective[j] * lp.lower[j]).sum();

    let x_from = |values: &[f64]| -> Vec<f64> {
        let mut x = lp.lower.to_vec();
        for (k, &j) in free.iter().enumerate() {
            x[j] = (lp.lower[j] + values[k]).clamp(lp.lower[j], lp.upper[j]);
        }
        x
    };

    if m == 0 {
        // box-constrained: each variable sits at whichever bound its cost prefers
        let values: Vec<f64> = free
            .iter()
            .map(|&j| if lp.objective[j] < 0.0 { lp.upper[j] - lp.lower[j] } else { 0.0 })
            .collect();
        let x = x_from(&values);
        let value = x.iter().zip(lp.objective).map(|(a, b)| a * b).sum();
        return Ok(LpOutcome::Optimal { x, value });
    }

    let n_art = rows.iter().filter(|(_, b)| *b < 0.0).count();
    let cols = n + m + n_art;
    let mut tab = Tableau {
        m,
        cols,
        t: vec![0.0; m * cols],
        beta: vec![0.0; m],
        basis: vec![0; m],
        is_basic: vec![false; cols],
        at_upper: vec![false; cols],
        ub: vec![f64::INFINITY; cols],
        enterable: vec![true; cols],
    };
    for (k, &j) in free.iter().enumerate() {
        tab.ub[k] = lp.upper[j] - lp.lower[j];
    }
    let mut art = n + m;
    for (i, (coefs, b)) in rows.iter().enumerate() {
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        for &(k, a) in coefs {
            tab.t[i * cols + k] += sign * a;
        }
        tab.t[i * cols + n + i] = sign;
        tab.beta[i] = sign * b;
        if *b < 0.0 {
            tab.t[i * cols + art] = 1.0;
            tab.basis[i] = art;
            art += 1;
        } else {
            tab.basis[i] = n + i;
        }
        tab.is_basic[tab.basis[i]] = true;
    }
    let max_iter = 20_000 + 50 * (m + cols);

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        for c in phase1.iter_mut().skip(n + m) {
            *c = 1.0;
        }
        tab.optimize(&phase1, max_iter)?;
        let infeasibility: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= n + m)
            .map(|i| tab.beta[i])
            .sum();
        if infeasibility > FEAS_TOL {
            return Ok(LpOutcome::Infeasible);
        }
        // artificials stay at zero from here on
        for j in n + m..cols {
            tab.ub[j] = 0.0;
            tab.enterable[j] = false;
            tab.at_upper[j] = false;
        }
    }

    let mut phase2 = vec![0.0; cols];
    for (k, &j) in free.iter().enumerate() {
        phase2[k] = lp.objective[j];
    }
    tab.optimize(&phase2, max_iter)?;

    let mut values = vec![0.0; n];
    for (k, v) in values.iter_mut().enumerate() {
        *v = tab.nonbasic_value(k);
    }
    for i in 0..m {
        if tab.basis[i] < n {
            values[tab.basis[i]] = tab.beta[i];
        }
    }
    let x = x_from(&values);
    let value = constant + free.iter().map(|&j| lp.objective[j] * (x[j] - lp.lower[j])).sum::<f64>();
    Ok(LpOutcome::Optimal { x, value })
}
