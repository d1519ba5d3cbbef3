//! Seeded generator of non-stationary multi-dataset benchmarks with known structure.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LaggedEdge, WindowCausalGraph};
use crate::panel::TimeSeriesPanel;
use crate::regime::{ChangepointSet, PartitionAssignment, VariablePartition};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionalForm {
    Linear,
    Nonlinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_vars: usize,
    pub n_time: usize,
    pub n_datasets: usize,
    pub n_contexts: usize,
    pub n_regimes: usize,
    pub n_changepoints: usize,
    pub max_lag: usize,
    pub d_min: usize,
    /// Fraction of edges whose coefficient is re-sampled in each non-base (context, regime) cell.
    pub intervention_fraction: f64,
    /// Minimum absolute change of a re-sampled coefficient.
    pub min_change: f64,
    pub functional_form: FunctionalForm,
    pub noise: NoiseKind,
    pub edge_density: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_vars: 5,
            n_time: 200,
            n_datasets: 2,
            n_contexts: 2,
            n_regimes: 3,
            n_changepoints: 2,
            max_lag: 2,
            d_min: 30,
            intervention_fraction: 0.5,
            min_change: 0.3,
            functional_form: FunctionalForm::Linear,
            noise: NoiseKind::Gaussian,
            edge_density: 0.1,
            burn_in: 50,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_vars == 0 {
            return Err(Error::config("n_vars", "must be positive"));
        }
        if self.n_datasets == 0 {
            return Err(Error::config("n_datasets", "must be positive"));
        }
        if self.n_contexts == 0 || self.n_contexts > self.n_datasets {
            return Err(Error::config(
                "n_contexts",
                format!("must lie in 1..={} (n_datasets)", self.n_datasets),
            ));
        }
        if self.n_regimes == 0 || self.n_regimes > self.n_changepoints + 1 {
            return Err(Error::config(
                "n_regimes",
                format!(
                    "must lie in 1..={} (n_changepoints + 1)",
                    self.n_changepoints + 1
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.intervention_fraction) {
            return Err(Error::config(
                "intervention_fraction",
                format!("must lie in [0, 1], got {}", self.intervention_fraction),
            ));
        }
        if !(0.0..=1.0).contains(&self.edge_density) {
            return Err(Error::config(
                "edge_density",
                format!("must lie in [0, 1], got {}", self.edge_density),
            ));
        }
        if !(0.0..=1.0).contains(&self.min_change) {
            return Err(Error::config(
                "min_change",
                format!("must lie in [0, 1], got {}", self.min_change),
            ));
        }
        if self.d_min < 2 {
            return Err(Error::config("d_min", "must be at least 2"));
        }
        if self.n_time < 2 {
            return Err(Error::config("n_time", "must be at least 2"));
        }
        if (self.n_changepoints + 1) * self.d_min > self.n_time {
            return Err(Error::InfeasibleConfig(format!(
                "{} intervals of length >= {} do not fit in {} time steps",
                self.n_changepoints + 1,
                self.d_min,
                self.n_time
            )));
        }
        Ok(())
    }
}

/// Coefficients of every edge in one (context, regime) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMechanism {
    pub context: usize,
    pub regime: usize,
    /// Aligned with the graph's edge order.
    pub coefficients: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub graph: WindowCausalGraph,
    pub changepoints: ChangepointSet,
    /// Generating context of each dataset.
    pub context_of: Vec<usize>,
    /// Generating regime of each interval.
    pub regime_of: Vec<usize>,
    /// Per-variable partitions implied by the mechanism table.
    pub partitions: PartitionAssignment,
    pub mechanisms: Vec<CellMechanism>,
}

impl GroundTruth {
    pub fn mechanism(&self, context: usize, regime: usize) -> &CellMechanism {
        self.mechanisms
            .iter()
            .find(|m| m.context == context && m.regime == regime)
            .expect("every cell has a mechanism")
    }
}

const MAX_ATTEMPTS: u64 = 200;
const BLOWUP: f64 = 1e6;

fn coefficient(rng: &mut ChaCha8Rng) -> f64 {
    let mag = rng.random_range(0.2..=0.8);
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

fn resample(rng: &mut ChaCha8Rng, old: f64, min_change: f64) -> f64 {
    loop {
        let c = coefficient(rng);
        if (c - old).abs() >= min_change {
            return c;
        }
    }
}

fn random_graph(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<WindowCausalGraph> {
    let mut order: Vec<usize> = (0..cfg.n_vars).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for a in 0..cfg.n_vars {
        for b in a + 1..cfg.n_vars {
            if rng.random_bool(cfg.edge_density) {
                edges.push(LaggedEdge::new(order[a], order[b], 0));
            }
        }
    }
    for lag in 1..=cfg.max_lag {
        for source in 0..cfg.n_vars {
            for target in 0..cfg.n_vars {
                if rng.random_bool(cfg.edge_density) {
                    edges.push(LaggedEdge::new(source, target, lag));
                }
            }
        }
    }
    WindowCausalGraph::from_edges(cfg.n_vars, cfg.max_lag, edges)
}

/// Interval lengths `d_min + extra`, with the extras uniform over compositions of the slack.
fn random_changepoints(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<ChangepointSet> {
    let k = cfg.n_changepoints;
    let slack = cfg.n_time - (k + 1) * cfg.d_min;
    let mut bars: Vec<usize> = sample(rng, slack + k, k).into_vec();
    bars.sort_unstable();
    let mut points = Vec::with_capacity(k);
    let mut prev_bar: isize = -1;
    let mut at = 0;
    for &b in &bars {
        let extra = (b as isize - prev_bar - 1) as usize;
        at += cfg.d_min + extra;
        points.push(at);
        prev_bar = b as isize;
    }
    ChangepointSet::with_min_duration(cfg.n_time, points, cfg.d_min)
}

/// Groups `units` whose rows of `key` are equal; returns canonical labels.
fn group_equal(keys: &[Vec<f64>]) -> Vec<usize> {
    let mut labels = Vec::with_capacity(keys.len());
    let mut reps: Vec<&Vec<f64>> = Vec::new();
    for k in keys {
        match reps.iter().position(|r| *r == k) {
            Some(l) => labels.push(l),
            None => {
                labels.push(reps.len());
                reps.push(k);
            }
        }
    }
    labels
}

fn true_partitions(
    cfg: &SynthConfig,
    graph: &WindowCausalGraph,
    mechanisms: &[CellMechanism],
    context_of: &[usize],
    regime_of: &[usize],
) -> Result<PartitionAssignment> {
    let edges: Vec<LaggedEdge> = graph.edges().copied().collect();
    let cell = |k: usize, r: usize| {
        &mechanisms
            .iter()
            .find(|m| m.context == k && m.regime == r)
            .expect("cell exists")
            .coefficients
    };
    let vars = (0..cfg.n_vars)
        .map(|i| {
            let incoming: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].target == i).collect();
            // a dataset's signature: its coefficients on i's edges across every regime
            let ctx_keys: Vec<Vec<f64>> = context_of
                .iter()
                .map(|&k| {
                    (0..cfg.n_regimes)
                        .flat_map(|r| incoming.iter().map(move |&e| cell(k, r)[e]))
                        .collect()
                })
                .collect();
            let reg_keys: Vec<Vec<f64>> = regime_of
                .iter()
                .map(|&r| {
                    (0..cfg.n_contexts)
                        .flat_map(|k| incoming.iter().map(move |&e| cell(k, r)[e]))
                        .collect()
                })
                .collect();
            VariablePartition::new(&group_equal(&ctx_keys), &group_equal(&reg_keys))
        })
        .collect::<Result<_>>()?;
    PartitionAssignment::new(vars)
}

fn simulate(
    cfg: &SynthConfig,
    graph: &WindowCausalGraph,
    mechanisms: &[CellMechanism],
    changepoints: &ChangepointSet,
    context: usize,
    regime_of: &[usize],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    let n = cfg.n_vars;
    let edges: Vec<LaggedEdge> = graph.edges().copied().collect();
    let order = contemporaneous_order(graph);
    let total = cfg.burn_in + cfg.n_time;
    let mut x: Vec<f64> = vec![0.0; total * n];
    let sqrt3 = 3f64.sqrt();
    let coefs: Vec<&Vec<f64>> = (0..cfg.n_regimes)
        .map(|r| {
            &mechanisms
                .iter()
                .find(|m| m.context == context && m.regime == r)
                .expect("cell exists")
                .coefficients
        })
        .collect();
    for step in 0..total {
        let t = step.saturating_sub(cfg.burn_in);
        let regime = regime_of[changepoints.interval_of(t)];
        for &j in &order {
            let mut v: f64 = match cfg.noise {
                NoiseKind::Gaussian => StandardNormal.sample(rng),
                NoiseKind::Uniform => rng.random_range(-sqrt3..sqrt3),
            };
            for (e, edge) in edges.iter().enumerate().filter(|(_, e)| e.target == j) {
                if edge.lag > step {
                    continue;
                }
                let parent = x[(step - edge.lag) * n + edge.source];
                let g = match cfg.functional_form {
                    FunctionalForm::Linear => parent,
                    FunctionalForm::Nonlinear => parent.tanh(),
                };
                v += coefs[regime][e] * g;
            }
            if !(v.abs() <= BLOWUP) {
                return None;
            }
            x[step * n + j] = v;
        }
    }
    Some(x[cfg.burn_in * n..].to_vec())
}

/// Variables in an order compatible with the lag-0 edges.
fn contemporaneous_order(graph: &WindowCausalGraph) -> Vec<usize> {
    let n = graph.n_vars();
    let mut indeg = vec![0; n];
    for e in graph.edges().filter(|e| e.lag == 0) {
        indeg[e.target] += 1;
    }
    let mut out = Vec::with_capacity(n);
    let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    while let Some(v) = ready.first().copied() {
        ready.remove(0);
        out.push(v);
        for e in graph.edges().filter(|e| e.lag == 0 && e.source == v) {
            indeg[e.target] -= 1;
            if indeg[e.target] == 0 {
                ready.push(e.target);
                ready.sort_unstable();
            }
        }
    }
    out
}

/// Draw a panel and its ground truth. Instances whose values exceed `1e6` are redrawn.
pub fn sample_instance(cfg: &SynthConfig) -> Result<(TimeSeriesPanel, GroundTruth)> {
    cfg.validate()?;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &[attempt]));
        if let Some(out) = try_instance(cfg, &mut rng)? {
            return Ok(out);
        }
        log::debug!("synthetic instance diverged, redrawing (attempt {attempt})");
    }
    Err(Error::InfeasibleConfig(format!(
        "no bounded instance within {MAX_ATTEMPTS} attempts"
    )))
}

fn try_instance(
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<(TimeSeriesPanel, GroundTruth)>> {
    let graph = random_graph(cfg, rng)?;
    let base: Vec<f64> = (0..graph.len()).map(|_| coefficient(rng)).collect();
    let changepoints = random_changepoints(cfg, rng)?;
    let regime_of: Vec<usize> = (0..changepoints.n_intervals())
        .map(|j| j % cfg.n_regimes)
        .collect();
    let context_of: Vec<usize> = (0..cfg.n_datasets).map(|d| d % cfg.n_contexts).collect();

    let n_intervened = (cfg.intervention_fraction * graph.len() as f64).round() as usize;
    let mut mechanisms = Vec::with_capacity(cfg.n_contexts * cfg.n_regimes);
    for k in 0..cfg.n_contexts {
        for r in 0..cfg.n_regimes {
            let mut coefficients = base.clone();
            if (k, r) != (0, 0) {
                let mut chosen = sample(rng, graph.len(), n_intervened).into_vec();
                chosen.sort_unstable();
                for e in chosen {
                    coefficients[e] = resample(rng, base[e], cfg.min_change);
                }
            }
            mechanisms.push(CellMechanism {
                context: k,
                regime: r,
                coefficients,
            });
        }
    }

    let mut values = Vec::with_capacity(cfg.n_datasets);
    for &k in &context_of {
        match simulate(cfg, &graph, &mechanisms, &changepoints, k, &regime_of, rng) {
            Some(v) => values.push(v),
            None => return Ok(None),
        }
    }
    let partitions = true_partitions(cfg, &graph, &mechanisms, &context_of, &regime_of)?;
    let panel = TimeSeriesPanel::new(
        (0..cfg.n_datasets).map(|d| format!("d{d}")).collect(),
        (0..cfg.n_vars).map(|i| format!("var_{i}")).collect(),
        cfg.n_time,
        values,
    )?;
    Ok(Some((
        panel,
        GroundTruth {
            graph,
            changepoints,
            context_of,
            regime_of,
            partitions,
            mechanisms,
        },
    )))
}
