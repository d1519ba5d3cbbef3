//! Per-variable MDL score: GP code lengths summed over a variable's subsamples plus a structure cost.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{code_length, fit_gp, marginal_code_length, GpOptions};
use crate::graph::{Parent, WindowCausalGraph};
use crate::panel::TimeSeriesPanel;
use crate::regime::{ChangepointSet, PartitionAssignment, VariablePartition};
use crate::seed;
use crate::subsample::{regression_data, variable_subsamples, Row};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub gp: GpOptions,
    pub seed: u64,
}

/// Bits for naming a parent set: each parent picks a variable and a lag, plus the set size.
pub fn structure_cost_bits(n_parents: usize, n_vars: usize, max_lag: usize) -> f64 {
    let per_parent = (n_vars as f64).log2() + ((max_lag + 1) as f64).log2();
    n_parents as f64 * per_parent + ((n_parents + 1) as f64).log2()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct ScoreKey {
    variable: usize,
    parents: Vec<Parent>,
    max_lag: usize,
    changepoints: Vec<usize>,
    contexts: Vec<usize>,
    regimes: Vec<usize>,
}

/// Memo of per-variable scores; concurrent reads, exclusive inserts.
#[derive(Debug, Default)]
pub struct ScoreCache {
    map: RwLock<HashMap<ScoreKey, f64>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("score cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(hits, misses)`.
    pub fn stats(&self) -> (usize, usize) {
        (
            self.hits.load(Ordering::Relaxed),
            self.misses.load(Ordering::Relaxed),
        )
    }

    fn get(&self, key: &ScoreKey) -> Option<f64> {
        let v = self
            .map
            .read()
            .expect("score cache poisoned")
            .get(key)
            .copied();
        if v.is_some() {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        v
    }

    fn insert(&self, key: ScoreKey, bits: f64) {
        self.misses.fetch_add(1, Ordering::Relaxed);
        self.map
            .write()
            .expect("score cache poisoned")
            .insert(key, bits);
    }
}

/// Code length in bits of one cell's targets given its parents (no structure cost).
///
/// With parents this is the GP evidence code, the negative log marginal likelihood, which already
/// contains the data fit, the function norm and the log-determinant complexity. It is charged
/// `½ log₂ n` for each of the fitted mean, noise level and input lengthscales.
pub fn cell_code_bits(
    panel: &TimeSeriesPanel,
    variable: usize,
    parents: &[Parent],
    rows: &[Row],
    seed: u64,
    gp: &GpOptions,
) -> Result<f64> {
    let (x, y) = regression_data(panel, variable, parents, rows);
    if parents.is_empty() {
        return Ok(marginal_code_length(&y)?.code.bits);
    }
    let fit = fit_gp(&x, &y, seed, gp)?;
    let n_params = (2 + parents.len()) as f64;
    Ok(code_length(&fit)?.neg_log_lik_bits + n_params * 0.5 * (y.len() as f64).log2())
}

fn parent_seed(
    base: u64,
    variable: usize,
    context: usize,
    regime: usize,
    parents: &[Parent],
) -> u64 {
    let mut parts = vec![variable as u64, context as u64, regime as u64];
    parts.extend(parents.iter().flat_map(|p| [p.source as u64, p.lag as u64]));
    seed::derive(base, &parts)
}

/// Score of `variable` under an explicit parent set. Rows with `t < max_lag` are dropped in
/// every cell, so all parent sets are compared on the same data.
#[allow(clippy::too_many_arguments)]
pub fn score_parents(
    panel: &TimeSeriesPanel,
    variable: usize,
    parents: &[Parent],
    max_lag: usize,
    changepoints: &ChangepointSet,
    partition: &VariablePartition,
    cache: &ScoreCache,
    opts: &ScoreOptions,
) -> Result<f64> {
    let mut parents = parents.to_vec();
    parents.sort_unstable();
    if let Some(p) = parents
        .iter()
        .find(|p| p.lag > max_lag || p.source >= panel.n_vars())
    {
        return Err(Error::InvalidGraph(format!("parent {p:?} out of range")));
    }
    let key = ScoreKey {
        variable,
        parents: parents.clone(),
        max_lag,
        changepoints: changepoints.points().to_vec(),
        contexts: partition.context_of.clone(),
        regimes: partition.regime_of.clone(),
    };
    if let Some(bits) = cache.get(&key) {
        return Ok(bits);
    }
    let cells = variable_subsamples(panel, changepoints, partition, variable)?;
    let mut total = structure_cost_bits(parents.len(), panel.n_vars(), max_lag);
    for cell in &cells {
        let rows: Vec<Row> = cell
            .rows
            .iter()
            .copied()
            .filter(|&(_, t)| t >= max_lag)
            .collect();
        if rows.len() < 2 {
            return Err(Error::TooFewSamples {
                got: rows.len(),
                need: 2,
            });
        }
        let seed = parent_seed(opts.seed, variable, cell.context, cell.regime, &parents);
        total += cell_code_bits(panel, variable, &parents, &rows, seed, &opts.gp)?;
    }
    if !total.is_finite() {
        return Err(Error::NonFiniteScore("score"));
    }
    cache.insert(key, total);
    Ok(total)
}

/// Score of variable `i` with its parents from `graph`, on `partition.variable(i)`'s cells.
pub fn score_variable(
    panel: &TimeSeriesPanel,
    graph: &WindowCausalGraph,
    changepoints: &ChangepointSet,
    partition: &PartitionAssignment,
    i: usize,
    cache: &ScoreCache,
    opts: &ScoreOptions,
) -> Result<f64> {
    score_parents(
        panel,
        i,
        &graph.parents_of(i),
        graph.max_lag(),
        changepoints,
        partition.variable(i),
        cache,
        opts,
    )
}

/// Σ_i score_variable(i).
pub fn total_score(
    panel: &TimeSeriesPanel,
    graph: &WindowCausalGraph,
    changepoints: &ChangepointSet,
    partition: &PartitionAssignment,
    cache: &ScoreCache,
    opts: &ScoreOptions,
) -> Result<f64> {
    if graph.n_vars() != panel.n_vars() {
        return Err(Error::InvalidGraph(format!(
            "graph has {} variables, panel {}",
            graph.n_vars(),
            panel.n_vars()
        )));
    }
    partition.check_dims(panel.n_vars(), panel.n_datasets(), changepoints)?;
    (0..panel.n_vars())
        .map(|i| score_variable(panel, graph, changepoints, partition, i, cache, opts))
        .sum()
}
