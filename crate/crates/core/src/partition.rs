//! Per-variable context and regime partitions from pairwise mechanism tests.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::WindowCausalGraph;
use crate::kernel_test::{axis_units, pairwise_tests, Axis, PairwiseTests, TestOptions};
use crate::panel::TimeSeriesPanel;
use crate::regime::{canonicalize, ChangepointSet, PartitionAssignment, VariablePartition};
use crate::seed;

/// Complete-linkage grouping: two clusters merge only if no cross pair is marked changed.
///
/// Among mergeable pairs the one with the highest mean cross p-value merges first; ties go to
/// the pair with the smallest unit indices. Labels are canonical (first appearance order).
pub fn complete_linkage(tests: &PairwiseTests) -> Vec<usize> {
    let k = tests.n_units();
    let mut clusters: Vec<Vec<usize>> = (0..k).map(|u| vec![u]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let cross = clusters[a]
                    .iter()
                    .flat_map(|&u| clusters[b].iter().map(move |&v| (u, v)));
                if cross.clone().any(|(u, v)| tests.changed[u][v]) {
                    continue;
                }
                let (sum, cnt) = cross.fold((0.0, 0usize), |(s, c), (u, v)| {
                    (s + tests.p_values[u][v], c + 1)
                });
                let mean = sum / cnt as f64;
                // clusters stay sorted by smallest member, so (a, b) order is the index tie-break
                if best.is_none_or(|(m, _, _)| mean > m) {
                    best = Some((mean, a, b));
                }
            }
        }
        let Some((_, a, b)) = best else {
            break;
        };
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
        clusters[a].sort_unstable();
    }
    let mut labels = vec![0; k];
    for (c, members) in clusters.iter().enumerate() {
        for &u in members {
            labels[u] = c;
        }
    }
    canonicalize(&labels)
}

fn check_pure(labels: &[usize], tests: &PairwiseTests) -> Result<()> {
    for u in 0..labels.len() {
        for v in u + 1..labels.len() {
            if labels[u] == labels[v] && tests.changed[u][v] {
                return Err(Error::InvalidPartition(format!(
                    "units {u} and {v} share a group despite a detected change"
                )));
            }
        }
    }
    Ok(())
}

fn partition_axis(
    panel: &TimeSeriesPanel,
    graph: &WindowCausalGraph,
    changepoints: &ChangepointSet,
    variable: usize,
    axis: Axis,
    opts: &TestOptions,
    seed: u64,
) -> Result<(Vec<usize>, PairwiseTests)> {
    let units = axis_units(panel, changepoints, axis, graph.max_lag());
    let tag = match axis {
        Axis::Context => 0,
        Axis::Regime => 1,
    };
    let tests = pairwise_tests(
        panel,
        variable,
        &graph.parents_of(variable),
        &units,
        opts,
        seed::derive(seed, &[variable as u64, tag]),
    )?;
    let labels = complete_linkage(&tests);
    check_pure(&labels, &tests)?;
    Ok((labels, tests))
}

/// Context labels over datasets for `variable`.
pub fn partition_contexts(
    panel: &TimeSeriesPanel,
    graph: &WindowCausalGraph,
    variable: usize,
    opts: &TestOptions,
    seed: u64,
) -> Result<Vec<usize>> {
    let none = ChangepointSet::none(panel.n_time());
    Ok(partition_axis(panel, graph, &none, variable, Axis::Context, opts, seed)?.0)
}

/// Regime labels over the changepoint intervals for `variable`, all datasets pooled.
pub fn partition_regimes(
    panel: &TimeSeriesPanel,
    graph: &WindowCausalGraph,
    changepoints: &ChangepointSet,
    variable: usize,
    opts: &TestOptions,
    seed: u64,
) -> Result<Vec<usize>> {
    Ok(partition_axis(
        panel,
        graph,
        changepoints,
        variable,
        Axis::Regime,
        opts,
        seed,
    )?
    .0)
}

/// Context and regime partitions of every variable.
pub fn partition_all(
    panel: &TimeSeriesPanel,
    graph: &WindowCausalGraph,
    changepoints: &ChangepointSet,
    opts: &TestOptions,
    seed: u64,
) -> Result<PartitionAssignment> {
    let vars: Vec<VariablePartition> = (0..panel.n_vars())
        .into_par_iter()
        .map(|i| {
            let contexts = partition_contexts(panel, graph, i, opts, seed)?;
            let regimes = partition_regimes(panel, graph, changepoints, i, opts, seed)?;
            VariablePartition::new(&contexts, &regimes)
        })
        .collect::<Result<_>>()?;
    PartitionAssignment::new(vars)
}
