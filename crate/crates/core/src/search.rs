//! Edge-greedy search for the window causal graph under fixed changepoints and partitions.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LaggedEdge, Parent, WindowCausalGraph};
use crate::panel::TimeSeriesPanel;
use crate::regime::{ChangepointSet, PartitionAssignment};
use crate::score::{score_parents, ScoreCache, ScoreOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub max_parents: usize,
    pub score: ScoreOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            max_parents: 5,
            score: ScoreOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Move {
    Add { edge: LaggedEdge },
    Remove { edge: LaggedEdge },
    Relag { from: LaggedEdge, to: LaggedEdge },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    #[serde(flatten)]
    pub change: Move,
    pub score_before: f64,
    pub score_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub graph: WindowCausalGraph,
    /// Total score in bits.
    pub score: f64,
    /// Score of each variable under its final parents.
    pub variable_scores: Vec<f64>,
    pub steps: Vec<SearchStep>,
}

impl SearchResult {
    pub fn edge_insertions(&self) -> Vec<LaggedEdge> {
        self.steps
            .iter()
            .filter_map(|s| match s.change {
                Move::Add { edge } => Some(edge),
                _ => None,
            })
            .collect()
    }
}

/// Fixed inputs of one search.
pub struct SearchContext<'a> {
    pub panel: &'a TimeSeriesPanel,
    pub changepoints: &'a ChangepointSet,
    pub partition: &'a PartitionAssignment,
    pub max_lag: usize,
    pub cache: &'a ScoreCache,
    pub options: &'a SearchOptions,
}

impl SearchContext<'_> {
    fn validate(&self) -> Result<()> {
        self.partition.check_dims(
            self.panel.n_vars(),
            self.panel.n_datasets(),
            self.changepoints,
        )?;
        if self.options.max_parents == 0 {
            return Err(Error::config("max_parents", "must be positive"));
        }
        Ok(())
    }

    /// Score of `target` under `parents`.
    pub fn score(&self, target: usize, parents: &[Parent]) -> Result<f64> {
        score_parents(
            self.panel,
            target,
            parents,
            self.max_lag,
            self.changepoints,
            self.partition.variable(target),
            self.cache,
            &self.options.score,
        )
    }

    fn variable_scores(&self, graph: &WindowCausalGraph) -> Result<Vec<f64>> {
        (0..self.panel.n_vars())
            .into_par_iter()
            .map(|i| self.score(i, &graph.parents_of(i)))
            .collect()
    }

    /// `δE`: score decrease of the target when `edge` is added to `graph`.
    pub fn edge_gain(&self, graph: &WindowCausalGraph, edge: &LaggedEdge) -> Result<f64> {
        graph.check_edge(edge)?;
        if graph.contains(edge) {
            return Err(Error::InvalidGraph(format!("{edge} already present")));
        }
        if edge.lag == 0 && graph.would_create_cycle(edge) {
            return Err(Error::CycleViolation(*edge));
        }
        let parents = graph.parents_of(edge.target);
        let mut extended = parents.clone();
        extended.push(edge.parent());
        Ok(self.score(edge.target, &parents)? - self.score(edge.target, &extended)?)
    }

    /// `δE` of each edge present in `graph`: the target's score increase if it were removed.
    pub fn edge_strengths(&self, graph: &WindowCausalGraph) -> Result<BTreeMap<LaggedEdge, f64>> {
        let edges: Vec<LaggedEdge> = graph.edges().copied().collect();
        let vals: Vec<f64> = edges
            .par_iter()
            .map(|e| {
                let parents = graph.parents_of(e.target);
                let without: Vec<Parent> = parents
                    .iter()
                    .copied()
                    .filter(|p| *p != e.parent())
                    .collect();
                Ok(self.score(e.target, &without)? - self.score(e.target, &parents)?)
            })
            .collect::<Result<_>>()?;
        Ok(edges.into_iter().zip(vals).collect())
    }

    fn candidates_for(&self, graph: &WindowCausalGraph, target: usize) -> Vec<LaggedEdge> {
        if graph.parents_of(target).len() >= self.options.max_parents {
            return Vec::new();
        }
        let mut out = Vec::new();
        for lag in 0..=self.max_lag {
            for source in 0..self.panel.n_vars() {
                let e = LaggedEdge::new(source, target, lag);
                if !(lag == 0 && source == target) && !graph.contains(&e) {
                    out.push(e);
                }
            }
        }
        out
    }
}

fn total(scores: &[f64]) -> f64 {
    scores.iter().sum()
}

/// Greedy insertion of the highest-gain admissible edge while some gain is positive.
pub fn forward_phase(ctx: &SearchContext<'_>, state: &mut SearchResult) -> Result<()> {
    let n = ctx.panel.n_vars();
    // cached gains per target; `None` means stale
    let mut gains: Vec<Option<Vec<(LaggedEdge, f64)>>> = vec![None; n];
    loop {
        let stale: Vec<(usize, LaggedEdge)> = (0..n)
            .filter(|&j| gains[j].is_none())
            .flat_map(|j| {
                ctx.candidates_for(&state.graph, j)
                    .into_iter()
                    .map(move |e| (j, e))
            })
            .collect();
        let evaluated: Vec<(usize, LaggedEdge, Option<f64>)> = stale
            .par_iter()
            .map(|&(j, e)| {
                let mut parents = state.graph.parents_of(j);
                parents.push(e.parent());
                match ctx.score(j, &parents) {
                    Ok(s) => (j, e, Some(state.variable_scores[j] - s)),
                    Err(err) => {
                        log::warn!("skipping candidate {e}: {err}");
                        (j, e, None)
                    }
                }
            })
            .collect();
        for j in 0..n {
            if gains[j].is_none() {
                gains[j] = Some(Vec::new());
            }
        }
        for (j, e, g) in evaluated {
            if let Some(g) = g {
                gains[j].as_mut().expect("initialized above").push((e, g));
            }
        }

        let mut best: Option<(LaggedEdge, f64)> = None;
        for (e, g) in gains.iter().flatten().flatten() {
            if !(*g > 0.0) || (e.lag == 0 && state.graph.would_create_cycle(e)) {
                continue;
            }
            let better = match best {
                None => true,
                Some((be, bg)) => {
                    *g > bg
                        || (*g == bg
                            && (e.lag, e.source, e.target) < (be.lag, be.source, be.target))
                }
            };
            if better {
                best = Some((*e, *g));
            }
        }
        let Some((edge, gain)) = best else {
            return Ok(());
        };
        let before = total(&state.variable_scores);
        state.graph.insert(edge)?;
        state.variable_scores[edge.target] -= gain;
        let after = total(&state.variable_scores);
        debug_assert!(after < before);
        log::debug!("add {edge}: gain {gain:.3} bits");
        state.steps.push(SearchStep {
            change: Move::Add { edge },
            score_before: before,
            score_after: after,
        });
        gains[edge.target] = None;
    }
}

/// Per variable: drop the parent whose removal lowers the score most until none does, then
/// move each remaining edge to its best lag.
pub fn backward_phase(ctx: &SearchContext<'_>, state: &mut SearchResult) -> Result<()> {
    for j in 0..ctx.panel.n_vars() {
        prune_parents(ctx, state, j)?;
        relag_parents(ctx, state, j)?;
    }
    Ok(())
}

fn prune_parents(ctx: &SearchContext<'_>, state: &mut SearchResult, j: usize) -> Result<()> {
    loop {
        let parents = state.graph.parents_of(j);
        if parents.is_empty() {
            break;
        }
        let scored: Vec<(Parent, f64)> = parents
            .par_iter()
            .map(|p| {
                let rest: Vec<Parent> = parents.iter().copied().filter(|q| q != p).collect();
                Ok((*p, ctx.score(j, &rest)?))
            })
            .collect::<Result<_>>()?;
        let (p, s) = scored
            .into_iter()
            .fold(None, |acc: Option<(Parent, f64)>, (p, s)| match acc {
                Some((_, bs)) if bs <= s => acc,
                _ => Some((p, s)),
            })
            .expect("parents non-empty");
        if !(s < state.variable_scores[j]) {
            break;
        }
        let edge = LaggedEdge::new(p.source, j, p.lag);
        let before = total(&state.variable_scores);
        state.graph.remove(&edge);
        state.variable_scores[j] = s;
        log::debug!("remove {edge}");
        state.steps.push(SearchStep {
            change: Move::Remove { edge },
            score_before: before,
            score_after: total(&state.variable_scores),
        });
    }
    Ok(())
}

fn relag_parents(ctx: &SearchContext<'_>, state: &mut SearchResult, j: usize) -> Result<()> {
    for p in state.graph.parents_of(j) {
        let from = LaggedEdge::new(p.source, j, p.lag);
        if !state.graph.contains(&from) {
            continue;
        }
        let base: Vec<Parent> = state
            .graph
            .parents_of(j)
            .into_iter()
            .filter(|q| *q != p)
            .collect();
        let mut best: Option<(LaggedEdge, f64)> = None;
        for lag in 0..=ctx.max_lag {
            let to = LaggedEdge::new(p.source, j, lag);
            if lag == p.lag || (lag == 0 && p.source == j) || state.graph.contains(&to) {
                continue;
            }
            if lag == 0 {
                let mut g = state.graph.clone();
                g.remove(&from);
                if g.would_create_cycle(&to) {
                    continue;
                }
            }
            let mut cand = base.clone();
            cand.push(to.parent());
            let s = ctx.score(j, &cand)?;
            if best.is_none_or(|(_, bs)| s < bs) {
                best = Some((to, s));
            }
        }
        if let Some((to, s)) = best {
            if s < state.variable_scores[j] {
                let before = total(&state.variable_scores);
                state.graph.remove(&from);
                state.graph.insert(to)?;
                state.variable_scores[j] = s;
                log::debug!("relag {from} -> {to}");
                state.steps.push(SearchStep {
                    change: Move::Relag { from, to },
                    score_before: before,
                    score_after: total(&state.variable_scores),
                });
            }
        }
    }
    Ok(())
}

/// Forward then backward search from `initial`.
pub fn search_from(ctx: &SearchContext<'_>, initial: WindowCausalGraph) -> Result<SearchResult> {
    ctx.validate()?;
    if initial.n_vars() != ctx.panel.n_vars() || initial.max_lag() != ctx.max_lag {
        return Err(Error::InvalidGraph(
            "initial graph does not match the search space".into(),
        ));
    }
    let variable_scores = ctx.variable_scores(&initial)?;
    let mut state = SearchResult {
        score: total(&variable_scores),
        graph: initial,
        variable_scores,
        steps: Vec::new(),
    };
    forward_phase(ctx, &mut state)?;
    backward_phase(ctx, &mut state)?;
    state.score = total(&state.variable_scores);
    Ok(state)
}

/// Forward then backward search from the empty graph.
pub fn discover_graph(ctx: &SearchContext<'_>) -> Result<SearchResult> {
    search_from(
        ctx,
        WindowCausalGraph::empty(ctx.panel.n_vars(), ctx.max_lag),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::total_score;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// `x` is white noise, `y[t] = 0.9 x[t-1] + noise`, `z` is independent noise.
    fn chain(n: usize, seed: u64) -> TimeSeriesPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = vec![vec![0.0; 3]; n];
        for t in 0..n {
            let e: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
            let prev = if t > 0 { rows[t - 1][0] } else { 0.0 };
            rows[t] = vec![e[0], 0.9 * prev + 0.3 * e[1], e[2]];
        }
        let names = ["x", "y", "z"].map(String::from).to_vec();
        TimeSeriesPanel::from_rows(names, vec![("d".into(), rows)]).unwrap()
    }

    fn run(panel: &TimeSeriesPanel, max_lag: usize) -> (SearchResult, f64) {
        let cps = ChangepointSet::none(panel.n_time());
        let part = PartitionAssignment::trivial(panel.n_vars(), 1, 1);
        let cache = ScoreCache::new();
        let opts = SearchOptions::default();
        let ctx = SearchContext {
            panel,
            changepoints: &cps,
            partition: &part,
            max_lag,
            cache: &cache,
            options: &opts,
        };
        let r = discover_graph(&ctx).unwrap();
        let fresh = total_score(
            panel,
            &r.graph,
            &cps,
            &part,
            &ScoreCache::new(),
            &opts.score,
        )
        .unwrap();
        (r, fresh)
    }

    #[test]
    fn recovers_lagged_edge() {
        let p = chain(150, 1);
        let (r, fresh) = run(&p, 2);
        assert!(r.graph.contains(&LaggedEdge::new(0, 1, 1)), "{:?}", r.graph);
        assert!((r.score - fresh).abs() < 1e-6);
        for s in &r.steps {
            assert!(s.score_after < s.score_before);
        }
    }

    #[test]
    fn deterministic_insertions() {
        let p = chain(100, 2);
        let (a, _) = run(&p, 1);
        let (b, _) = run(&p, 1);
        assert_eq!(a.steps, b.steps);
    }

    #[test]
    fn single_variable_has_only_self_lags() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = vec![vec![0.0]; 120];
        for t in 1..120 {
            let e: f64 = StandardNormal.sample(&mut rng);
            rows[t] = vec![0.7 * rows[t - 1][0] + e];
        }
        let p = TimeSeriesPanel::from_rows(vec!["x".into()], vec![("d".into(), rows)]).unwrap();
        let (r, _) = run(&p, 2);
        assert!(r
            .graph
            .edges()
            .all(|e| e.source == 0 && e.target == 0 && e.lag >= 1));
    }

    #[test]
    fn gain_prefers_true_lag() {
        let p = chain(150, 4);
        let cps = ChangepointSet::none(150);
        let part = PartitionAssignment::trivial(3, 1, 1);
        let cache = ScoreCache::new();
        let opts = SearchOptions::default();
        let ctx = SearchContext {
            panel: &p,
            changepoints: &cps,
            partition: &part,
            max_lag: 2,
            cache: &cache,
            options: &opts,
        };
        let g = WindowCausalGraph::empty(3, 2);
        let g1 = ctx.edge_gain(&g, &LaggedEdge::new(0, 1, 1)).unwrap();
        let g2 = ctx.edge_gain(&g, &LaggedEdge::new(0, 1, 2)).unwrap();
        assert!(g1 > 0.0 && g1 > g2);
    }

    #[test]
    fn backward_fixes_wrong_lag() {
        let p = chain(150, 5);
        let cps = ChangepointSet::none(150);
        let part = PartitionAssignment::trivial(3, 1, 1);
        let cache = ScoreCache::new();
        let opts = SearchOptions::default();
        let ctx = SearchContext {
            panel: &p,
            changepoints: &cps,
            partition: &part,
            max_lag: 2,
            cache: &cache,
            options: &opts,
        };
        let g = WindowCausalGraph::from_edges(3, 2, [LaggedEdge::new(0, 1, 2)]).unwrap();
        let scores = ctx.variable_scores(&g).unwrap();
        let mut state = SearchResult {
            score: total(&scores),
            graph: g,
            variable_scores: scores,
            steps: Vec::new(),
        };
        let before = state.score;
        relag_parents(&ctx, &mut state, 1).unwrap();
        assert!(total(&state.variable_scores) < before);
        assert!(state.graph.contains(&LaggedEdge::new(0, 1, 1)));
        assert_eq!(state.graph.len(), 1);
    }
}
