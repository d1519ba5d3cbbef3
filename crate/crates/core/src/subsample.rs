//! Subsamples: the (context, regime) cells in which one mechanism is fitted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Design;
use crate::graph::Parent;
use crate::panel::TimeSeriesPanel;
use crate::regime::{ChangepointSet, PartitionAssignment, VariablePartition};

/// A `(dataset, time)` coordinate.
pub type Row = (usize, usize);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsample {
    pub variable: usize,
    pub context: usize,
    pub regime: usize,
    /// Dataset-major, time-minor.
    pub rows: Vec<Row>,
}

/// Cells of one variable, ordered by `(context, regime)`.
pub fn variable_subsamples(
    panel: &TimeSeriesPanel,
    changepoints: &ChangepointSet,
    partition: &VariablePartition,
    variable: usize,
) -> Result<Vec<Subsample>> {
    if partition.context_of.len() != panel.n_datasets()
        || partition.regime_of.len() != changepoints.n_intervals()
        || changepoints.n_time() != panel.n_time()
    {
        return Err(Error::InvalidPartition(
            "partition/changepoints do not match the panel dimensions".into(),
        ));
    }
    let (nc, nr) = (partition.n_contexts(), partition.n_regimes());
    let mut cells: Vec<Subsample> = (0..nc)
        .flat_map(|context| {
            (0..nr).map(move |regime| Subsample {
                variable,
                context,
                regime,
                rows: Vec::new(),
            })
        })
        .collect();
    for d in 0..panel.n_datasets() {
        let k = partition.context_of[d];
        for (j, interval) in changepoints.intervals().into_iter().enumerate() {
            let r = partition.regime_of[j];
            cells[k * nr + r].rows.extend(interval.map(|t| (d, t)));
        }
    }
    // rows were appended interval by interval; restore time order within each dataset
    for c in &mut cells {
        c.rows.sort_unstable();
        if c.rows.is_empty() {
            return Err(Error::EmptySubsample {
                variable,
                context: c.context,
                regime: c.regime,
            });
        }
    }
    Ok(cells)
}

/// Subsamples for every variable under its own partition.
pub fn build_subsamples(
    panel: &TimeSeriesPanel,
    changepoints: &ChangepointSet,
    partition: &PartitionAssignment,
) -> Result<Vec<Vec<Subsample>>> {
    partition.check_dims(panel.n_vars(), panel.n_datasets(), changepoints)?;
    (0..panel.n_vars())
        .map(|i| variable_subsamples(panel, changepoints, partition.variable(i), i))
        .collect()
}

/// Lagged parent values (design matrix) and targets of `variable` on `rows`.
///
/// Rows whose lags would reach before `t = 0` must already be excluded by the caller.
pub fn regression_data(
    panel: &TimeSeriesPanel,
    variable: usize,
    parents: &[Parent],
    rows: &[Row],
) -> (Design, Vec<f64>) {
    let mut x = Vec::with_capacity(rows.len() * parents.len());
    let mut y = Vec::with_capacity(rows.len());
    for &(d, t) in rows {
        for p in parents {
            x.push(panel.value(d, t - p.lag, p.source));
        }
        y.push(panel.value(d, t, variable));
    }
    (Design::new(x, rows.len(), parents.len()), y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(n_datasets: usize, n_time: usize, n_vars: usize) -> TimeSeriesPanel {
        let names = (0..n_vars).map(|i| format!("v{i}")).collect();
        let ids = (0..n_datasets).map(|d| format!("d{d}")).collect();
        let values = (0..n_datasets)
            .map(|d| {
                (0..n_time * n_vars)
                    .map(|k| (d * 10_000 + k) as f64)
                    .collect()
            })
            .collect();
        TimeSeriesPanel::new(ids, names, n_time, values).unwrap()
    }

    #[test]
    fn single_cell_holds_everything() {
        let p = panel(1, 50, 1);
        let cps = ChangepointSet::none(50);
        let cells = variable_subsamples(&p, &cps, &VariablePartition::trivial(1, 1), 0).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].rows.len(), 50);
    }

    #[test]
    fn two_contexts_two_regimes() {
        let p = panel(2, 200, 1);
        let cps = ChangepointSet::new(200, vec![100]).unwrap();
        let vp = VariablePartition::new(&[0, 1], &[0, 1]).unwrap();
        let cells = variable_subsamples(&p, &cps, &vp, 0).unwrap();
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.rows.len() == 100));
        assert_eq!(cells[1].rows[0], (0, 100));
    }

    #[test]
    fn recurring_regime_unions_intervals() {
        let p = panel(1, 200, 1);
        let cps = ChangepointSet::new(200, vec![100]).unwrap();
        let vp = VariablePartition::new(&[0], &[0, 0]).unwrap();
        let cells = variable_subsamples(&p, &cps, &vp, 0).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].rows.len(), 200);
        assert!(cells[0].rows.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn design_uses_lagged_parents() {
        let p = panel(1, 5, 2);
        let parents = [Parent { source: 1, lag: 2 }];
        let (x, y) = regression_data(&p, 0, &parents, &[(0, 3)]);
        assert_eq!(x.row(0), &[p.value(0, 1, 1)]);
        assert_eq!(y, vec![p.value(0, 3, 0)]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cells_partition_the_grid(
                n_datasets in 1usize..4,
                cut in proptest::collection::btree_set(1usize..59, 0..4),
                ctx_seed in proptest::collection::vec(0usize..3, 4),
                reg_seed in proptest::collection::vec(0usize..3, 5),
            ) {
                let p = panel(n_datasets, 60, 1);
                let cps = ChangepointSet::new(60, cut.into_iter().collect()).unwrap();
                let vp = VariablePartition::new(
                    &ctx_seed[..n_datasets],
                    &reg_seed[..cps.n_intervals()],
                ).unwrap();
                let cells = variable_subsamples(&p, &cps, &vp, 0).unwrap();
                let mut all: Vec<Row> = cells.iter().flat_map(|c| c.rows.iter().copied()).collect();
                all.sort_unstable();
                let grid: Vec<Row> = (0..n_datasets).flat_map(|d| (0..60).map(move |t| (d, t))).collect();
                prop_assert_eq!(all, grid);
            }
        }
    }
}
