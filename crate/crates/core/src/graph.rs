//! Window causal graphs over lagged variables.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A directed link `X_source[t - lag] -> X_target[t]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize, usize)", into = "(usize, usize, usize)")]
pub struct LaggedEdge {
    pub source: usize,
    pub target: usize,
    pub lag: usize,
}

impl LaggedEdge {
    pub const fn new(source: usize, target: usize, lag: usize) -> Self {
        Self {
            source,
            target,
            lag,
        }
    }

    /// The parent slot this edge occupies in its target's parent set.
    pub const fn parent(&self) -> Parent {
        Parent {
            source: self.source,
            lag: self.lag,
        }
    }
}

impl From<(usize, usize, usize)> for LaggedEdge {
    fn from((source, target, lag): (usize, usize, usize)) -> Self {
        Self::new(source, target, lag)
    }
}

impl From<LaggedEdge> for (usize, usize, usize) {
    fn from(e: LaggedEdge) -> Self {
        (e.source, e.target, e.lag)
    }
}

impl fmt::Display for LaggedEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[t-{}] -> {}[t]", self.source, self.lag, self.target)
    }
}

/// A lagged parent of some target variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Parent {
    pub source: usize,
    pub lag: usize,
}

/// Lag-specific directed graph over `n_vars` variables replicated at lags `0..=max_lag`.
///
/// Lag-0 edges must form a DAG; self-transitions need `lag >= 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct WindowCausalGraph {
    n_vars: usize,
    max_lag: usize,
    edges: BTreeSet<LaggedEdge>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    n_vars: usize,
    max_lag: usize,
    edges: Vec<LaggedEdge>,
}

impl TryFrom<RawGraph> for WindowCausalGraph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        WindowCausalGraph::from_edges(raw.n_vars, raw.max_lag, raw.edges)
    }
}

impl From<WindowCausalGraph> for RawGraph {
    fn from(g: WindowCausalGraph) -> Self {
        RawGraph {
            n_vars: g.n_vars,
            max_lag: g.max_lag,
            edges: g.edges.into_iter().collect(),
        }
    }
}

impl WindowCausalGraph {
    pub fn empty(n_vars: usize, max_lag: usize) -> Self {
        Self {
            n_vars,
            max_lag,
            edges: BTreeSet::new(),
        }
    }

    /// Build a graph, rejecting duplicates, out-of-range edges and lag-0 cycles.
    pub fn from_edges(
        n_vars: usize,
        max_lag: usize,
        edges: impl IntoIterator<Item = LaggedEdge>,
    ) -> Result<Self> {
        let mut g = Self::empty(n_vars, max_lag);
        for e in edges {
            if g.edges.contains(&e) {
                return Err(Error::InvalidGraph(format!("duplicate edge {e}")));
            }
            g.insert(e)?;
        }
        Ok(g)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn edges(&self) -> impl Iterator<Item = &LaggedEdge> + '_ {
        self.edges.iter()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, edge: &LaggedEdge) -> bool {
        self.edges.contains(edge)
    }

    /// Checks bounds and the self-loop rule; does not look at cycles.
    pub fn check_edge(&self, e: &LaggedEdge) -> Result<()> {
        if e.source >= self.n_vars || e.target >= self.n_vars {
            return Err(Error::InvalidGraph(format!(
                "edge {e} references a variable outside 0..{}",
                self.n_vars
            )));
        }
        if e.lag > self.max_lag {
            return Err(Error::InvalidGraph(format!(
                "edge {e} exceeds max lag {}",
                self.max_lag
            )));
        }
        if e.lag == 0 && e.source == e.target {
            return Err(Error::InvalidGraph(format!(
                "self-loop {e} requires lag >= 1"
            )));
        }
        Ok(())
    }

    /// Whether adding `e` would close a lag-0 cycle.
    pub fn would_create_cycle(&self, e: &LaggedEdge) -> bool {
        if e.lag != 0 {
            return false;
        }
        // A cycle appears iff source is already reachable from target via lag-0 edges.
        let mut stack = vec![e.target];
        let mut seen = vec![false; self.n_vars];
        while let Some(v) = stack.pop() {
            if v == e.source {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(
                self.edges
                    .iter()
                    .filter(|x| x.lag == 0 && x.source == v)
                    .map(|x| x.target),
            );
        }
        false
    }

    /// Insert an edge. Inserting an existing edge is a no-op.
    pub fn insert(&mut self, e: LaggedEdge) -> Result<()> {
        self.check_edge(&e)?;
        if self.edges.contains(&e) {
            return Ok(());
        }
        if self.would_create_cycle(&e) {
            return Err(Error::CycleViolation(e));
        }
        self.edges.insert(e);
        Ok(())
    }

    pub fn remove(&mut self, e: &LaggedEdge) -> bool {
        self.edges.remove(e)
    }

    /// Sorted parent slots of `target`.
    pub fn parents_of(&self, target: usize) -> Vec<Parent> {
        let mut ps: Vec<Parent> = self
            .edges
            .iter()
            .filter(|e| e.target == target)
            .map(LaggedEdge::parent)
            .collect();
        ps.sort_unstable();
        ps
    }

    /// True when the lag-0 subgraph is acyclic.
    pub fn is_acyclic(&self) -> bool {
        let mut indeg = vec![0usize; self.n_vars];
        for e in self.edges.iter().filter(|e| e.lag == 0) {
            indeg[e.target] += 1;
        }
        let mut queue: Vec<usize> = (0..self.n_vars).filter(|&v| indeg[v] == 0).collect();
        let mut visited = 0;
        while let Some(v) = queue.pop() {
            visited += 1;
            for e in self.edges.iter().filter(|e| e.lag == 0 && e.source == v) {
                indeg[e.target] -= 1;
                if indeg[e.target] == 0 {
                    queue.push(e.target);
                }
            }
        }
        visited == self.n_vars
    }

    /// Collapse lags into a summary graph over the base variables, dropping self-transitions.
    pub fn summarize(&self) -> SummaryGraph {
        SummaryGraph {
            n_vars: self.n_vars,
            edges: self
                .edges
                .iter()
                .filter(|e| e.source != e.target)
                .map(|e| (e.source, e.target))
                .collect(),
        }
    }
}

/// Lag-collapsed directed graph over the base variables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryGraph {
    pub n_vars: usize,
    pub edges: BTreeSet<(usize, usize)>,
}

impl SummaryGraph {
    /// Summarizing a summary is the identity.
    pub fn summarize(&self) -> SummaryGraph {
        SummaryGraph {
            n_vars: self.n_vars,
            edges: self.edges.iter().copied().filter(|(i, j)| i != j).collect(),
        }
    }
}
