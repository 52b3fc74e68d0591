//! HEX graphs: a DAG of hierarchy edges plus undirected exclusion edges.
//!
//! Besides the graph itself this module owns the two output spaces the rest of
//! the crate works with: legal assignments `y ∈ {0,1}^d` and abstention-aware
//! predictions `(y_h, y_r)` where `y_r[i] = 1` means "predict node i" and
//! `y_r[i] = 0` means "abstain on node i".

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on `d` for enumerating legal assignments (`2^d` candidates).
pub const DEFAULT_STATE_SPACE_CAP: usize = 20;
/// Default cap on `d` for enumerating abstention-aware predictions (`4^d` candidates).
pub const DEFAULT_PREDICTION_SPACE_CAP: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("node index {index} out of range for d={d}")]
    Index { index: usize, d: usize },
    #[error("hierarchy contains a directed cycle through node {0}")]
    Cycle(usize),
    #[error("exclusion edge is a self loop on node {0}")]
    SelfLoop(usize),
    #[error("expected a vector of length {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("entry {index} is {value}, expected 0 or 1")]
    NotBinary { index: usize, value: u8 },
    #[error("hierarchy is not a tree rooted at node 0")]
    NotATree,
    #[error("enumeration over d={d} exceeds cap {cap}")]
    CapExceeded { d: usize, cap: usize },
    #[error("graph parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A validated HEX graph.
#[derive(Debug, Clone, PartialEq)]
pub struct HexGraph {
    d: usize,
    hierarchy: Vec<(usize, usize)>,
    exclusion: Vec<(usize, usize)>,
    parent: Option<Vec<Option<usize>>>,
    children: Vec<Vec<usize>>,
}

impl HexGraph {
    /// Validates edge lists and builds the graph.
    ///
    /// Exclusion edges are stored as `(min, max)` and deduplicated. The parent
    /// map is computed whenever every node has at most one hierarchy parent.
    pub fn new(
        d: usize,
        hierarchy: &[(usize, usize)],
        exclusion: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        if d == 0 {
            return Err(GraphError::Empty);
        }
        let check = |index: usize| {
            if index < d {
                Ok(())
            } else {
                Err(GraphError::Index { index, d })
            }
        };
        let mut h_set = BTreeSet::new();
        for &(p, c) in hierarchy {
            check(p)?;
            check(c)?;
            if p == c {
                return Err(GraphError::Cycle(p));
            }
            h_set.insert((p, c));
        }
        let mut e_set = BTreeSet::new();
        for &(i, j) in exclusion {
            check(i)?;
            check(j)?;
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            e_set.insert((i.min(j), i.max(j)));
        }
        // Keep the caller's edge order; only drop duplicates.
        let mut seen = BTreeSet::new();
        let hierarchy: Vec<_> = hierarchy.iter().copied().filter(|e| seen.insert(*e)).collect();
        let exclusion: Vec<_> = e_set.into_iter().collect();

        let mut children = vec![Vec::new(); d];
        let mut parents = vec![Vec::new(); d];
        for &(p, c) in &hierarchy {
            children[p].push(c);
            parents[c].push(p);
        }
        for ch in &mut children {
            ch.sort_unstable();
        }
        if let Some(node) = find_cycle(d, &children) {
            return Err(GraphError::Cycle(node));
        }
        let parent = if parents.iter().all(|p| p.len() <= 1) {
            Some(parents.iter().map(|p| p.first().copied()).collect())
        } else {
            None
        };
        Ok(Self { d, hierarchy, exclusion, parent, children })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn hierarchy_edges(&self) -> &[(usize, usize)] {
        &self.hierarchy
    }

    pub fn exclusion_edges(&self) -> &[(usize, usize)] {
        &self.exclusion
    }

    /// Parent map, present when the hierarchy is a forest.
    pub fn parent_map(&self) -> Option<&[Option<usize>]> {
        self.parent.as_deref()
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent.as_ref().and_then(|p| p[node])
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// True when the hierarchy is a single tree whose root is node 0.
    pub fn is_rooted_tree(&self) -> bool {
        match &self.parent {
            Some(p) => p[0].is_none() && p.iter().skip(1).all(Option::is_some),
            None => false,
        }
    }

    /// Parent map of a tree rooted at 0, or `NotATree`.
    pub fn tree_parents(&self) -> Result<&[Option<usize>], GraphError> {
        if self.is_rooted_tree() {
            Ok(self.parent.as_deref().expect("checked by is_rooted_tree"))
        } else {
            Err(GraphError::NotATree)
        }
    }

    /// Number of nodes on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.d];
        let mut best = 0;
        for node in self.topological_order().into_iter().rev() {
            let below = self.children[node].iter().map(|&c| depth[c]).max().unwrap_or(0);
            depth[node] = below + 1;
            best = best.max(depth[node]);
        }
        best
    }

    /// Nodes ordered so that every hierarchy parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut indegree = vec![0usize; self.d];
        for &(_, c) in &self.hierarchy {
            indegree[c] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..self.d).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(self.d);
        while let Some(node) = ready.pop_first() {
            order.push(node);
            for &c in &self.children[node] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        order
    }

    /// Child-indicator adjacency: `G[i][j] = 1` iff `(i, j)` is a hierarchy edge.
    pub fn adjacency(&self) -> Vec<Vec<f64>> {
        let mut g = vec![vec![0.0; self.d]; self.d];
        for &(p, c) in &self.hierarchy {
            g[p][c] = 1.0;
        }
        g
    }

    /// Checks that `y` is a legal assignment (hierarchy and exclusion rules).
    pub fn is_legal(&self, y: &[u8]) -> Result<bool, GraphError> {
        check_binary(y, self.d)?;
        Ok(self.is_legal_unchecked(y))
    }

    pub(crate) fn is_legal_unchecked(&self, y: &[u8]) -> bool {
        self.hierarchy.iter().all(|&(p, c)| y[c] <= y[p])
            && self.exclusion.iter().all(|&(i, j)| y[i] + y[j] <= 1)
    }

    /// All legal assignments, in lexicographic order of `y`.
    pub fn enumerate_state_space(&self, cap: usize) -> Result<Vec<Assignment>, GraphError> {
        if self.d > cap {
            return Err(GraphError::CapExceeded { d: self.d, cap });
        }
        Ok(binary_vectors(self.d)
            .filter(|y| self.is_legal_unchecked(y))
            .map(|y| Assignment { y })
            .collect())
    }

    /// All `(y_h, y_r)` pairs of the prediction space, lexicographic in the
    /// concatenation `(y_h, y_r)`.
    pub fn enumerate_prediction_space(
        &self,
        space: &PredictionSpace,
        cap: usize,
    ) -> Result<Vec<AbstainedPrediction>, GraphError> {
        if self.d > cap {
            return Err(GraphError::CapExceeded { d: self.d, cap });
        }
        let parents = self.tree_parents()?;
        space.check_mask(self.d)?;
        let rejects: Vec<Vec<u8>> = binary_vectors(self.d)
            .filter(|r| space.reject_feasible(parents, r))
            .collect();
        let mut out = Vec::new();
        for h in binary_vectors(self.d) {
            for r in &rejects {
                if space.hierarchy_feasible(parents, &h, r) {
                    out.push(AbstainedPrediction::new_unchecked(h.clone(), r.clone()));
                }
            }
        }
        Ok(out)
    }
}

/// Returns some node on a directed cycle, if there is one.
fn find_cycle(d: usize, children: &[Vec<usize>]) -> Option<usize> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut mark = vec![Mark::New; d];
    for start in 0..d {
        if mark[start] != Mark::New {
            continue;
        }
        // iterative DFS: (node, next child position)
        let mut stack = vec![(start, 0usize)];
        mark[start] = Mark::Active;
        while let Some(&mut (node, ref mut pos)) = stack.last_mut() {
            if let Some(&next) = children[node].get(*pos) {
                *pos += 1;
                match mark[next] {
                    Mark::Active => return Some(next),
                    Mark::New => {
                        mark[next] = Mark::Active;
                        stack.push((next, 0));
                    }
                    Mark::Done => {}
                }
            } else {
                mark[node] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

/// Iterates `{0,1}^d` in lexicographic order (index 0 most significant).
pub(crate) fn binary_vectors(d: usize) -> impl Iterator<Item = Vec<u8>> {
    (0u64..(1u64 << d)).map(move |k| (0..d).map(|i| ((k >> (d - 1 - i)) & 1) as u8).collect())
}

pub(crate) fn check_binary(v: &[u8], d: usize) -> Result<(), GraphError> {
    if v.len() != d {
        return Err(GraphError::LengthMismatch { expected: d, actual: v.len() });
    }
    match v.iter().position(|&b| b > 1) {
        Some(index) => Err(GraphError::NotBinary { index, value: v[index] }),
        None => Ok(()),
    }
}

/// A legal binary labeling.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Assignment {
    pub y: Vec<u8>,
}

/// One component of a composed prediction in `{0, 1, a}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Zero,
    One,
    Abstain,
}

impl Label {
    pub fn as_char(self) -> char {
        match self {
            Label::Zero => '0',
            Label::One => '1',
            Label::Abstain => 'a',
        }
    }

    /// Whether this predicted label equals the true binary label.
    pub fn matches(self, y: u8) -> bool {
        matches!((self, y), (Label::Zero, 0) | (Label::One, 1))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Composes the predict and reject vectors: `a` where `y_r = 0`, otherwise `y_h`.
pub fn compose_prediction(y_h: &[u8], y_r: &[u8]) -> Result<Vec<Label>, GraphError> {
    check_binary(y_h, y_h.len())?;
    check_binary(y_r, y_h.len())?;
    Ok(compose_unchecked(y_h, y_r))
}

fn compose_unchecked(y_h: &[u8], y_r: &[u8]) -> Vec<Label> {
    y_h.iter()
        .zip(y_r)
        .map(|(&h, &r)| match (h, r) {
            (_, 0) => Label::Abstain,
            (1, _) => Label::One,
            _ => Label::Zero,
        })
        .collect()
}

/// Renders a composed labeling as a compact string such as `"10a1"`.
pub fn render_labeling(labels: &[Label]) -> String {
    labels.iter().map(|l| l.as_char()).collect()
}

/// A predict/reject pair together with its composed labeling.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AbstainedPrediction {
    pub y_h: Vec<u8>,
    pub y_r: Vec<u8>,
    pub composed: Vec<Label>,
}

impl AbstainedPrediction {
    pub fn new(y_h: Vec<u8>, y_r: Vec<u8>) -> Result<Self, GraphError> {
        check_binary(&y_h, y_h.len())?;
        check_binary(&y_r, y_h.len())?;
        Ok(Self::new_unchecked(y_h, y_r))
    }

    pub(crate) fn new_unchecked(y_h: Vec<u8>, y_r: Vec<u8>) -> Self {
        let composed = compose_unchecked(&y_h, &y_r);
        Self { y_h, y_r, composed }
    }

    /// A prediction without abstention.
    pub fn predict_all(y_h: Vec<u8>) -> Self {
        let d = y_h.len();
        Self::new_unchecked(y_h, vec![1; d])
    }

    pub fn d(&self) -> usize {
        self.y_h.len()
    }

    pub fn abstention_count(&self) -> usize {
        self.y_r.iter().filter(|&&r| r == 0).count()
    }

    pub fn render(&self) -> String {
        render_labeling(&self.composed)
    }

    /// Ordering key: lexicographic in `(y_h, y_r)`.
    pub fn lex_key(&self) -> (&[u8], &[u8]) {
        (&self.y_h, &self.y_r)
    }
}

/// Relation between a node and its parent's prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierarchyRule {
    /// `y_h[i]·y_r[p] ≤ y_h[p]·y_r[p]`: a child may be active under an abstained parent.
    #[default]
    Relaxed,
    /// `y_h[i] ≤ y_h[p]` regardless of abstention.
    Strict,
}

/// How abstention on consecutive nodes is restricted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsecutiveRule {
    /// `(1 − y_r[i]) + (1 − y_r[p]) ≤ 1`: never abstain on a node and its parent.
    #[default]
    NoConsecutiveAbstention,
    /// `y_r[i] + y_r[p] ≤ 1`, the inequality read literally.
    Literal,
}

/// Constraints defining the abstention-aware prediction space on a tree.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionSpace {
    pub hierarchy: HierarchyRule,
    pub consecutive: ConsecutiveRule,
    /// Nodes on which abstention is allowed; `None` allows every node.
    pub abstainable: Option<Vec<bool>>,
}

impl PredictionSpace {
    /// Relaxed hierarchy, no consecutive abstention, abstention anywhere.
    pub fn standard() -> Self {
        Self::default()
    }

    /// The no-abstention space: `y_r` fixed to all ones.
    pub fn without_abstention(d: usize) -> Self {
        Self { abstainable: Some(vec![false; d]), ..Self::default() }
    }

    /// Same rules with abstention allowed only on `nodes`.
    pub fn abstain_only_on(mut self, d: usize, nodes: &[usize]) -> Self {
        let mut mask = vec![false; d];
        for &n in nodes {
            if n < d {
                mask[n] = true;
            }
        }
        self.abstainable = Some(mask);
        self
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.hierarchy = if strict { HierarchyRule::Strict } else { HierarchyRule::Relaxed };
        self
    }

    /// Copy of this space with abstention disabled everywhere.
    pub fn no_abstention(&self, d: usize) -> Self {
        Self { abstainable: Some(vec![false; d]), ..self.clone() }
    }

    pub fn can_abstain(&self, node: usize) -> bool {
        self.abstainable.as_ref().is_none_or(|m| m[node])
    }

    pub fn allows_any_abstention(&self, d: usize) -> bool {
        (0..d).any(|i| self.can_abstain(i))
    }

    pub(crate) fn check_mask(&self, d: usize) -> Result<(), GraphError> {
        match &self.abstainable {
            Some(m) if m.len() != d => {
                Err(GraphError::LengthMismatch { expected: d, actual: m.len() })
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn reject_feasible(&self, parents: &[Option<usize>], r: &[u8]) -> bool {
        if (0..r.len()).any(|i| r[i] == 0 && !self.can_abstain(i)) {
            return false;
        }
        parents.iter().enumerate().all(|(i, p)| match p {
            Some(p) => match self.consecutive {
                ConsecutiveRule::NoConsecutiveAbstention => (1 - r[i]) + (1 - r[*p]) <= 1,
                ConsecutiveRule::Literal => r[i] + r[*p] <= 1,
            },
            None => true,
        })
    }

    pub(crate) fn hierarchy_feasible(&self, parents: &[Option<usize>], h: &[u8], r: &[u8]) -> bool {
        parents.iter().enumerate().all(|(i, p)| match p {
            Some(p) => match self.hierarchy {
                HierarchyRule::Relaxed => h[i] * r[*p] <= h[*p] * r[*p],
                HierarchyRule::Strict => h[i] <= h[*p],
            },
            None => true,
        })
    }

    /// Membership test for a `(y_h, y_r)` pair on the tree `g`.
    pub fn contains(&self, g: &HexGraph, pred: &AbstainedPrediction) -> Result<bool, GraphError> {
        let parents = g.tree_parents()?;
        check_binary(&pred.y_h, g.d())?;
        check_binary(&pred.y_r, g.d())?;
        self.check_mask(g.d())?;
        Ok(self.reject_feasible(parents, &pred.y_r)
            && self.hierarchy_feasible(parents, &pred.y_h, &pred.y_r))
    }
}

/// On-disk structured form of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub d: usize,
    #[serde(default)]
    pub hierarchy: Vec<[usize; 2]>,
    #[serde(default)]
    pub exclusion: Vec<[usize; 2]>,
}

impl From<&HexGraph> for GraphFile {
    fn from(g: &HexGraph) -> Self {
        Self {
            d: g.d,
            hierarchy: g.hierarchy.iter().map(|&(p, c)| [p, c]).collect(),
            exclusion: g.exclusion.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

impl TryFrom<GraphFile> for HexGraph {
    type Error = GraphError;

    fn try_from(f: GraphFile) -> Result<Self, GraphError> {
        let h: Vec<_> = f.hierarchy.iter().map(|e| (e[0], e[1])).collect();
        let e: Vec<_> = f.exclusion.iter().map(|e| (e[0], e[1])).collect();
        HexGraph::new(f.d, &h, &e)
    }
}

impl HexGraph {
    /// Text form: `d=<n>`, then `h <parent> <child>` and `e <i> <j>` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!("d={}\n", self.d);
        for &(p, c) in &self.hierarchy {
            out.push_str(&format!("h {p} {c}\n"));
        }
        for &(i, j) in &self.exclusion {
            out.push_str(&format!("e {i} {j}\n"));
        }
        out
    }

    /// Parses the text form. Blank lines and `#` comments are ignored.
    pub fn from_text(text: &str) -> Result<Self, GraphError> {
        let mut d = None;
        let mut hierarchy = Vec::new();
        let mut exclusion = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |message: String| GraphError::Parse { line: k + 1, message };
            if let Some(rest) = line.strip_prefix("d=") {
                let n = rest.trim().parse::<usize>().map_err(|e| perr(e.to_string()))?;
                d = Some(n);
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(perr(format!("expected `<h|e> <i> <j>`, got `{line}`")));
            }
            let i = parts[1].parse::<usize>().map_err(|e| perr(e.to_string()))?;
            let j = parts[2].parse::<usize>().map_err(|e| perr(e.to_string()))?;
            match parts[0] {
                "h" => hierarchy.push((i, j)),
                "e" => exclusion.push((i, j)),
                other => return Err(perr(format!("unknown edge kind `{other}`"))),
            }
        }
        let d = d.ok_or(GraphError::Parse { line: 0, message: "missing `d=` line".into() })?;
        HexGraph::new(d, &hierarchy, &exclusion)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GraphFile::from(self)).expect("graph file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_str(text)
            .map_err(|e| GraphError::Parse { line: e.line(), message: e.to_string() })?;
        HexGraph::try_from(file)
    }
}
