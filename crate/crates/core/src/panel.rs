//! The observed collection of multivariate time series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Datasets observed over a shared dense time index `0..n_time`.
///
/// Values are stored row-major per dataset: `values[d][t * n_vars + v]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesPanel {
    datasets: Vec<String>,
    var_names: Vec<String>,
    n_time: usize,
    values: Vec<Vec<f64>>,
}

impl TimeSeriesPanel {
    /// Build a panel from per-dataset row-major matrices (`n_time x n_vars`).
    pub fn new(
        datasets: Vec<String>,
        var_names: Vec<String>,
        n_time: usize,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if datasets.is_empty() {
            return Err(Error::InvalidPanel("no datasets".into()));
        }
        if var_names.is_empty() {
            return Err(Error::InvalidPanel("no variables".into()));
        }
        if datasets.len() != values.len() {
            return Err(Error::InvalidPanel(format!(
                "{} dataset ids but {} value matrices",
                datasets.len(),
                values.len()
            )));
        }
        if n_time < 2 {
            return Err(Error::InvalidPanel(format!("n_time = {n_time} < 2")));
        }
        let n_vars = var_names.len();
        for (name, m) in datasets.iter().zip(&values) {
            if m.len() != n_time * n_vars {
                return Err(Error::InvalidPanel(format!(
                    "dataset {name}: expected {} values ({n_time} x {n_vars}), got {}",
                    n_time * n_vars,
                    m.len()
                )));
            }
            if let Some(pos) = m.iter().position(|x| !x.is_finite()) {
                return Err(Error::InvalidPanel(format!(
                    "dataset {name}: non-finite value at t={}, var={}",
                    pos / n_vars,
                    var_names[pos % n_vars]
                )));
            }
        }
        Ok(Self {
            datasets,
            var_names,
            n_time,
            values,
        })
    }

    /// Build from per-dataset rows, each row holding one value per variable.
    pub fn from_rows(
        var_names: Vec<String>,
        datasets: Vec<(String, Vec<Vec<f64>>)>,
    ) -> Result<Self> {
        let n_vars = var_names.len();
        let n_time = datasets.first().map_or(0, |(_, rows)| rows.len());
        let mut ids = Vec::with_capacity(datasets.len());
        let mut values = Vec::with_capacity(datasets.len());
        for (id, rows) in datasets {
            if rows.len() != n_time {
                return Err(Error::InvalidPanel(format!(
                    "dataset {id} has {} rows, expected {n_time}",
                    rows.len()
                )));
            }
            let mut flat = Vec::with_capacity(n_time * n_vars);
            for (t, row) in rows.into_iter().enumerate() {
                if row.len() != n_vars {
                    return Err(Error::InvalidPanel(format!(
                        "dataset {id}, t={t}: {} columns, expected {n_vars}",
                        row.len()
                    )));
                }
                flat.extend(row);
            }
            ids.push(id);
            values.push(flat);
        }
        Self::new(ids, var_names, n_time, values)
    }

    pub fn n_datasets(&self) -> usize {
        self.datasets.len()
    }

    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn datasets(&self) -> &[String] {
        &self.datasets
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    #[inline]
    pub fn value(&self, dataset: usize, t: usize, var: usize) -> f64 {
        self.values[dataset][t * self.var_names.len() + var]
    }

    /// Row-major matrix of one dataset.
    pub fn dataset_values(&self, dataset: usize) -> &[f64] {
        &self.values[dataset]
    }

    pub fn series(&self, dataset: usize, var: usize) -> Vec<f64> {
        (0..self.n_time)
            .map(|t| self.value(dataset, t, var))
            .collect()
    }

    /// Fails unless `n_time >= 2 * d_min`.
    pub fn check_min_duration(&self, d_min: usize) -> Result<()> {
        if self.n_time < 2 * d_min {
            return Err(Error::InvalidPanel(format!(
                "n_time = {} is shorter than 2 * d_min = {}",
                self.n_time,
                2 * d_min
            )));
        }
        Ok(())
    }

    /// A copy with datasets reordered so that new position `i` holds old dataset `order[i]`.
    pub fn reorder_datasets(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.n_datasets()];
        for &o in order {
            if o >= seen.len() || std::mem::replace(&mut seen[o], true) {
                return Err(Error::InvalidInput("order is not a permutation".into()));
            }
        }
        if order.len() != self.n_datasets() {
            return Err(Error::LengthMismatch(order.len(), self.n_datasets()));
        }
        Ok(Self {
            datasets: order.iter().map(|&o| self.datasets[o].clone()).collect(),
            var_names: self.var_names.clone(),
            n_time: self.n_time,
            values: order.iter().map(|&o| self.values[o].clone()).collect(),
        })
    }
}
