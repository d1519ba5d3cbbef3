//! Regime changepoints from GP prediction errors.

pub mod pelt;

pub use pelt::{pelt, PeltConfig, SegmentCost, VAR_FLOOR};

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{fit_gp, GpOptions};
use crate::graph::WindowCausalGraph;
use crate::panel::TimeSeriesPanel;
use crate::regime::{ChangepointSet, PartitionAssignment};
use crate::seed;
use crate::subsample::{regression_data, Row};

/// Standardized prediction errors, one channel per `(variable, dataset)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSignal {
    n_time: usize,
    n_channels: usize,
    values: Vec<f64>,
    channels: Vec<(usize, usize)>,
    valid_from: usize,
}

impl ResidualSignal {
    /// `values` is time-major (`n_time x n_channels`). Entries before `valid_from` are ignored.
    pub fn new(
        n_time: usize,
        n_channels: usize,
        values: Vec<f64>,
        channels: Vec<(usize, usize)>,
        valid_from: usize,
    ) -> Result<Self> {
        if values.len() != n_time * n_channels {
            return Err(Error::LengthMismatch(values.len(), n_time * n_channels));
        }
        if channels.len() != n_channels {
            return Err(Error::LengthMismatch(channels.len(), n_channels));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite residual".into()));
        }
        Ok(Self {
            n_time,
            n_channels,
            values,
            channels,
            valid_from: valid_from.min(n_time),
        })
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn valid_from(&self) -> usize {
        self.valid_from
    }

    /// `(variable, dataset)` of each channel.
    pub fn channels(&self) -> &[(usize, usize)] {
        &self.channels
    }

    #[inline]
    pub fn at(&self, t: usize, channel: usize) -> f64 {
        self.values[t * self.n_channels + channel]
    }

    pub fn channel(&self, channel: usize) -> Vec<f64> {
        (0..self.n_time).map(|t| self.at(t, channel)).collect()
    }
}

/// Floor on the predictive standard deviation used to standardize residuals.
const SD_FLOOR: f64 = 1e-6;

/// Residuals of every variable over the horizon `[t0, n_time)`.
///
/// For each variable and context a GP on the current parents is fitted to the training window
/// `[t0, t0 + window)` of the context's datasets, then evaluated over the whole horizon.
/// Time index 0 of the result corresponds to `t0`.
pub fn residual_signal(
    panel: &TimeSeriesPanel,
    graph: &WindowCausalGraph,
    partition: &PartitionAssignment,
    t0: usize,
    window: usize,
    gp: &GpOptions,
    seed: u64,
) -> Result<ResidualSignal> {
    let max_lag = graph.max_lag();
    if window < 2 * (max_lag + 1) {
        return Err(Error::WindowTooShort(format!(
            "window {window} < 2 * (max_lag + 1) = {}",
            2 * (max_lag + 1)
        )));
    }
    let n = panel.n_time();
    if t0 + window > n {
        return Err(Error::WindowTooShort(format!(
            "window [{t0}, {}) exceeds the series length {n}",
            t0 + window
        )));
    }
    if partition.n_vars() != panel.n_vars() || partition.n_datasets() != panel.n_datasets() {
        return Err(Error::InvalidPartition(
            "partition does not match the panel".into(),
        ));
    }
    let horizon = n - t0;
    let valid_from = max_lag.max(t0);
    let n_d = panel.n_datasets();

    // (variable, context) jobs; each yields residual columns for its datasets
    let jobs: Vec<(usize, usize)> = (0..panel.n_vars())
        .flat_map(|i| (0..partition.variable(i).n_contexts()).map(move |k| (i, k)))
        .collect();
    let columns: Vec<Vec<(usize, Vec<f64>)>> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let datasets: Vec<usize> = (0..n_d)
                .filter(|&d| partition.variable(i).context_of[d] == k)
                .collect();
            let train: Vec<Row> = datasets
                .iter()
                .flat_map(|&d| (valid_from..t0 + window).map(move |t| (d, t)))
                .collect();
            let parents = graph.parents_of(i);
            let (x, y) = regression_data(panel, i, &parents, &train);
            // training rows are scored out of sample, the rest by the posterior
            let mut held_out: HashMap<Row, (f64, f64)> = HashMap::new();
            let predictor: Box<dyn Fn(&[f64]) -> (f64, f64) + Sync> = if parents.is_empty()
                || y.len() < 2
            {
                let m = y.iter().sum::<f64>() / y.len().max(1) as f64;
                let var = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len().max(1) as f64;
                Box::new(move |_| (m, var))
            } else {
                let fit = fit_gp(
                    &x,
                    &y,
                    seed::derive(seed, &[i as u64, k as u64, t0 as u64]),
                    gp,
                )?;
                held_out = train.iter().copied().zip(fit.leave_one_out()).collect();
                Box::new(move |row| fit.predict(row))
            };
            let mut out = Vec::with_capacity(datasets.len());
            for &d in &datasets {
                let rows: Vec<Row> = (valid_from..n).map(|t| (d, t)).collect();
                let (xs, ys) = regression_data(panel, i, &parents, &rows);
                let mut col = vec![0.0; horizon];
                for (r, (&(_, t), y)) in rows.iter().zip(&ys).enumerate() {
                    let (mu, var) = held_out
                        .get(&(d, t))
                        .copied()
                        .unwrap_or_else(|| predictor(xs.row(r)));
                    col[t - t0] = (y - mu) / var.sqrt().max(SD_FLOOR);
                }
                out.push((d, col));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut channels = Vec::new();
    let mut cols = Vec::new();
    for ((i, _), per_dataset) in jobs.iter().zip(columns) {
        for (d, col) in per_dataset {
            channels.push((*i, d));
            cols.push(col);
        }
    }
    // variable-major, then dataset order
    let mut order: Vec<usize> = (0..channels.len()).collect();
    order.sort_by_key(|&c| channels[c]);
    let c = channels.len();
    let mut values = vec![0.0; horizon * c];
    for (slot, &src) in order.iter().enumerate() {
        for t in 0..horizon {
            values[t * c + slot] = cols[src][t];
        }
    }
    let channels = order.iter().map(|&o| channels[o]).collect();
    ResidualSignal::new(horizon, c, values, channels, valid_from - t0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangepointConfig {
    pub d_min: usize,
    /// Training window length `s`.
    pub window: usize,
    /// PELT penalty in nats; `None` for the default.
    pub penalty: Option<f64>,
    pub gp: GpOptions,
}

impl ChangepointConfig {
    pub fn new(d_min: usize, window: usize) -> Self {
        Self {
            d_min,
            window,
            penalty: None,
            gp: GpOptions::default(),
        }
    }
}

/// Sequential detection: fit on the window after the last confirmed changepoint, segment the
/// remaining horizon, confirm the earliest detected point, repeat.
pub fn detect_changepoints(
    panel: &TimeSeriesPanel,
    graph: &WindowCausalGraph,
    partition: &PartitionAssignment,
    config: &ChangepointConfig,
    seed: u64,
) -> Result<ChangepointSet> {
    let n = panel.n_time();
    let d_min = config.d_min;
    if config.window > d_min {
        return Err(Error::config(
            "train_window",
            format!("must not exceed d_min ({} > {d_min})", config.window),
        ));
    }
    let pelt_cfg = PeltConfig {
        penalty: config.penalty,
        min_segment: d_min,
    };
    pelt_cfg.validate()?;
    let mut confirmed = Vec::new();
    let mut t0 = 0;
    while n - t0 >= 2 * d_min {
        let signal = residual_signal(panel, graph, partition, t0, config.window, &config.gp, seed)?;
        let points = pelt(&signal, &pelt_cfg)?;
        let Some(&first) = points.first() else {
            break;
        };
        log::debug!("confirmed changepoint at t = {}", t0 + first);
        t0 += first;
        confirmed.push(t0);
    }
    ChangepointSet::with_min_duration(n, confirmed, d_min)
}
