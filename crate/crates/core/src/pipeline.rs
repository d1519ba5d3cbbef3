//! Alternating estimation of changepoints, partitions and the causal graph.

use serde::{Deserialize, Serialize};

use crate::changepoint::{detect_changepoints, ChangepointConfig};
use crate::error::{Error, Result};
use crate::graph::{LaggedEdge, WindowCausalGraph};
use crate::kernel_test::TestOptions;
use crate::panel::TimeSeriesPanel;
use crate::partition::partition_all;
use crate::regime::{ChangepointSet, PartitionAssignment, VariablePartition};
use crate::score::{total_score, ScoreCache, ScoreOptions};
use crate::search::{discover_graph, SearchContext, SearchOptions};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub d_min: usize,
    pub max_lag: usize,
    pub train_window: usize,
    pub alpha: f64,
    pub n_perm: usize,
    pub max_iter: usize,
    /// A new state must lower the score by more than this many bits.
    pub tol_bits: f64,
    pub max_parents: usize,
    /// PELT penalty in nats; `None` uses `2 · channels · ln n`.
    pub penalty: Option<f64>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            d_min: 30,
            max_lag: 2,
            train_window: 30,
            alpha: 0.05,
            n_perm: 200,
            max_iter: 5,
            tol_bits: 1e-3,
            max_parents: 5,
            penalty: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let floor = 2 * (self.max_lag + 1);
        if self.train_window < floor {
            return Err(Error::config(
                "train_window",
                format!("must be at least 2 * (max_lag + 1) = {floor}"),
            ));
        }
        if self.d_min < self.train_window {
            return Err(Error::config(
                "d_min",
                format!("must be at least train_window ({})", self.train_window),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(
                "alpha",
                format!("must lie in (0, 1), got {}", self.alpha),
            ));
        }
        if self.n_perm == 0 {
            return Err(Error::config("n_perm", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter", "must be positive"));
        }
        if !(self.tol_bits >= 0.0) {
            return Err(Error::config("tol_bits", "must be non-negative"));
        }
        if self.max_parents == 0 {
            return Err(Error::config("max_parents", "must be positive"));
        }
        if let Some(p) = self.penalty {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::config("penalty", "must be positive and finite"));
            }
        }
        Ok(())
    }

    pub fn test_options(&self) -> TestOptions {
        TestOptions {
            alpha: self.alpha,
            n_perm: self.n_perm,
            ..TestOptions::default()
        }
    }

    pub fn score_options(&self) -> ScoreOptions {
        ScoreOptions {
            seed: seed::derive(self.seed, &[u64::MAX]),
            ..ScoreOptions::default()
        }
    }

    fn search_options(&self) -> SearchOptions {
        SearchOptions {
            max_parents: self.max_parents,
            score: self.score_options(),
        }
    }

    fn changepoint_config(&self) -> ChangepointConfig {
        ChangepointConfig {
            penalty: self.penalty,
            ..ChangepointConfig::new(self.d_min, self.train_window)
        }
    }
}

/// Components held fixed instead of estimated.
#[derive(Clone, Debug, Default)]
pub struct Fixed {
    pub graph: Option<WindowCausalGraph>,
    pub changepoints: Option<ChangepointSet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub graph: WindowCausalGraph,
    pub changepoints: ChangepointSet,
    /// Per-variable partitions.
    pub partitions: PartitionAssignment,
    /// Common refinement of the per-variable partitions; defines the scored cells.
    pub meet: VariablePartition,
    pub total_score: f64,
    pub iteration: usize,
}

impl ModelState {
    fn same_model(&self, other: &ModelState) -> bool {
        self.graph == other.graph
            && self.changepoints == other.changepoints
            && self.partitions == other.partitions
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub score: f64,
    pub n_changepoints: usize,
    pub n_contexts: usize,
    pub n_regimes: usize,
    pub n_edges: usize,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub state: ModelState,
    pub trace: Vec<TraceEntry>,
    /// Score reduction from each final edge, in bits.
    pub edge_strengths: Vec<(LaggedEdge, f64)>,
    pub warnings: Vec<String>,
}

impl PipelineResult {
    pub fn accepted_iterations(&self) -> usize {
        self.trace.iter().filter(|e| e.accepted).count()
    }
}

pub fn run(panel: &TimeSeriesPanel, config: &PipelineConfig) -> Result<PipelineResult> {
    run_with(panel, config, &Fixed::default())
}

pub fn run_with(
    panel: &TimeSeriesPanel,
    config: &PipelineConfig,
    fixed: &Fixed,
) -> Result<PipelineResult> {
    config.validate()?;
    if let Some(g) = &fixed.graph {
        if g.n_vars() != panel.n_vars() {
            return Err(Error::InvalidGraph(format!(
                "fixed graph has {} variables, panel {}",
                g.n_vars(),
                panel.n_vars()
            )));
        }
    }
    if let Some(c) = &fixed.changepoints {
        if c.n_time() != panel.n_time() {
            return Err(Error::InvalidChangepoints(format!(
                "fixed changepoints cover {} steps, panel {}",
                c.n_time(),
                panel.n_time()
            )));
        }
    }
    let max_lag = fixed.graph.as_ref().map_or(config.max_lag, |g| g.max_lag());
    let cache = ScoreCache::new();
    let mut warnings = Vec::new();
    let skip_cps = fixed.changepoints.is_none() && 2 * config.d_min > panel.n_time();
    if skip_cps {
        let msg = format!(
            "d_min {} exceeds half the series length {}; changepoint detection skipped",
            config.d_min,
            panel.n_time()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let per_dataset = VariablePartition::new(&(0..panel.n_datasets()).collect::<Vec<_>>(), &[0])?;
    let mut graph = fixed
        .graph
        .clone()
        .unwrap_or_else(|| WindowCausalGraph::empty(panel.n_vars(), max_lag));
    let mut contexts = PartitionAssignment::uniform(panel.n_vars(), per_dataset);
    let mut best: Option<ModelState> = None;
    let mut trace = Vec::new();

    for it in 0..config.max_iter {
        let step = iterate(
            panel, config, fixed, skip_cps, &graph, &contexts, max_lag, &cache, it,
        );
        let candidate = match step {
            Ok(c) => c,
            Err(e) if best.is_some() => {
                let msg = format!("iteration {it} failed, keeping the previous state: {e}");
                log::warn!("{msg}");
                warnings.push(msg);
                break;
            }
            Err(e) => return Err(e),
        };
        let accepted = best
            .as_ref()
            .is_none_or(|b| candidate.total_score < b.total_score - config.tol_bits);
        trace.push(TraceEntry {
            iteration: it,
            score: candidate.total_score,
            n_changepoints: candidate.changepoints.len(),
            n_contexts: candidate.meet.n_contexts(),
            n_regimes: candidate.meet.n_regimes(),
            n_edges: candidate.graph.len(),
            accepted,
        });
        log::info!(
            "iteration {it}: score {:.3} bits, {} edges, {} changepoints{}",
            candidate.total_score,
            candidate.graph.len(),
            candidate.changepoints.len(),
            if accepted { "" } else { " (rejected)" }
        );
        if !accepted {
            break;
        }
        let fixpoint = best.as_ref().is_some_and(|b| b.same_model(&candidate));
        graph = candidate.graph.clone();
        contexts = candidate.partitions.clone();
        best = Some(candidate);
        if fixpoint || (fixed.graph.is_some() && (fixed.changepoints.is_some() || skip_cps)) {
            break;
        }
    }

    let state = best.expect("iteration 0 either succeeds or returns early");
    let scoring = PartitionAssignment::uniform(panel.n_vars(), state.meet.clone());
    let search_opts = config.search_options();
    let ctx = SearchContext {
        panel,
        changepoints: &state.changepoints,
        partition: &scoring,
        max_lag,
        cache: &cache,
        options: &search_opts,
    };
    let edge_strengths = ctx.edge_strengths(&state.graph)?.into_iter().collect();
    let (hits, misses) = cache.stats();
    log::debug!("score cache: {hits} hits, {misses} misses");
    Ok(PipelineResult {
        state,
        trace,
        edge_strengths,
        warnings,
    })
}

#[allow(clippy::too_many_arguments)]
fn iterate(
    panel: &TimeSeriesPanel,
    config: &PipelineConfig,
    fixed: &Fixed,
    skip_cps: bool,
    graph: &WindowCausalGraph,
    contexts: &PartitionAssignment,
    max_lag: usize,
    cache: &ScoreCache,
    it: usize,
) -> Result<ModelState> {
    let changepoints = match &fixed.changepoints {
        Some(c) => c.clone(),
        None if skip_cps => ChangepointSet::none(panel.n_time()),
        None => detect_changepoints(
            panel,
            graph,
            contexts,
            &config.changepoint_config(),
            seed::derive(config.seed, &[it as u64, 0]),
        )?,
    };
    let partitions = partition_all(
        panel,
        graph,
        &changepoints,
        &config.test_options(),
        seed::derive(config.seed, &[it as u64, 1]),
    )?;
    let meet = partitions.meet();
    let scoring = PartitionAssignment::uniform(panel.n_vars(), meet.clone());
    let search_opts = config.search_options();
    let (graph, total) = match &fixed.graph {
        Some(g) => {
            let s = total_score(panel, g, &changepoints, &scoring, cache, &search_opts.score)?;
            (g.clone(), s)
        }
        None => {
            let ctx = SearchContext {
                panel,
                changepoints: &changepoints,
                partition: &scoring,
                max_lag,
                cache,
                options: &search_opts,
            };
            let found = discover_graph(&ctx)?;
            (found.graph, found.score)
        }
    };
    Ok(ModelState {
        graph,
        changepoints,
        partitions,
        meet,
        total_score: total,
        iteration: it,
    })
}
