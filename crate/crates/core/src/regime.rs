//! Changepoints and the per-variable context/regime partitions they induce.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing time indices in `(0, n_time)` splitting the time axis into intervals.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChangepointSet {
    n_time: usize,
    points: Vec<usize>,
}

impl ChangepointSet {
    pub fn new(n_time: usize, points: Vec<usize>) -> Result<Self> {
        let mut prev = 0;
        for &p in &points {
            if p <= prev || p >= n_time {
                return Err(Error::InvalidChangepoints(format!(
                    "{points:?} is not strictly increasing inside (0, {n_time})"
                )));
            }
            prev = p;
        }
        Ok(Self { n_time, points })
    }

    /// Like [`ChangepointSet::new`], additionally enforcing that every interval spans `>= d_min`.
    pub fn with_min_duration(n_time: usize, points: Vec<usize>, d_min: usize) -> Result<Self> {
        let cps = Self::new(n_time, points)?;
        if cps.min_interval_len() < d_min {
            return Err(Error::InvalidChangepoints(format!(
                "{:?}: an interval is shorter than d_min = {d_min}",
                cps.points
            )));
        }
        Ok(cps)
    }

    pub fn none(n_time: usize) -> Self {
        Self {
            n_time,
            points: Vec::new(),
        }
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_intervals(&self) -> usize {
        self.points.len() + 1
    }

    pub fn intervals(&self) -> Vec<Range<usize>> {
        let mut bounds = Vec::with_capacity(self.points.len() + 2);
        bounds.push(0);
        bounds.extend_from_slice(&self.points);
        bounds.push(self.n_time);
        bounds.windows(2).map(|w| w[0]..w[1]).collect()
    }

    pub fn interval_of(&self, t: usize) -> usize {
        self.points.partition_point(|&p| p <= t)
    }

    pub fn min_interval_len(&self) -> usize {
        self.intervals().iter().map(|r| r.len()).min().unwrap_or(0)
    }
}

/// Relabel so labels are `0, 1, ...` in order of first appearance.
pub fn canonicalize(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Number of distinct labels in a canonical labeling.
fn n_labels(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

fn check_canonical(labels: &[usize], what: &str) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::InvalidPartition(format!("{what}: no units")));
    }
    if canonicalize(labels) != labels {
        return Err(Error::InvalidPartition(format!(
            "{what}: labels {labels:?} are not canonical"
        )));
    }
    Ok(())
}

/// Context labels over datasets and regime labels over changepoint intervals for one variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariablePartition {
    pub context_of: Vec<usize>,
    pub regime_of: Vec<usize>,
}

impl VariablePartition {
    /// Canonicalizes both labelings.
    pub fn new(context_of: &[usize], regime_of: &[usize]) -> Result<Self> {
        let vp = Self {
            context_of: canonicalize(context_of),
            regime_of: canonicalize(regime_of),
        };
        vp.validate()?;
        Ok(vp)
    }

    pub fn trivial(n_datasets: usize, n_intervals: usize) -> Self {
        Self {
            context_of: vec![0; n_datasets],
            regime_of: vec![0; n_intervals],
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_canonical(&self.context_of, "contexts")?;
        check_canonical(&self.regime_of, "regimes")
    }

    pub fn n_contexts(&self) -> usize {
        n_labels(&self.context_of)
    }

    pub fn n_regimes(&self) -> usize {
        n_labels(&self.regime_of)
    }

    /// Regime label of every time index.
    pub fn regime_per_time(&self, changepoints: &ChangepointSet) -> Vec<usize> {
        (0..changepoints.n_time())
            .map(|t| self.regime_of[changepoints.interval_of(t)])
            .collect()
    }
}

fn meet_labels<'a>(labelings: impl Iterator<Item = &'a [usize]>, len: usize) -> Vec<usize> {
    let mut keys: Vec<Vec<usize>> = vec![Vec::new(); len];
    for labels in labelings {
        for (k, &l) in keys.iter_mut().zip(labels) {
            k.push(l);
        }
    }
    let mut map: HashMap<Vec<usize>, usize> = HashMap::new();
    keys.into_iter()
        .map(|k| {
            let next = map.len();
            *map.entry(k).or_insert(next)
        })
        .collect()
}

/// Per-variable context and regime partitions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartitionAssignment {
    variables: Vec<VariablePartition>,
}

impl PartitionAssignment {
    pub fn new(variables: Vec<VariablePartition>) -> Result<Self> {
        let first = variables
            .first()
            .ok_or_else(|| Error::InvalidPartition("no variables".into()))?;
        let (nd, ni) = (first.context_of.len(), first.regime_of.len());
        for v in &variables {
            v.validate()?;
            if v.context_of.len() != nd || v.regime_of.len() != ni {
                return Err(Error::InvalidPartition(
                    "variables disagree on the number of datasets or intervals".into(),
                ));
            }
        }
        Ok(Self { variables })
    }

    /// One context and one regime for every variable.
    pub fn trivial(n_vars: usize, n_datasets: usize, n_intervals: usize) -> Self {
        Self::uniform(n_vars, VariablePartition::trivial(n_datasets, n_intervals))
    }

    /// Every variable shares the same partition.
    pub fn uniform(n_vars: usize, vp: VariablePartition) -> Self {
        Self {
            variables: vec![vp; n_vars],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn n_datasets(&self) -> usize {
        self.variables[0].context_of.len()
    }

    pub fn n_intervals(&self) -> usize {
        self.variables[0].regime_of.len()
    }

    pub fn variable(&self, i: usize) -> &VariablePartition {
        &self.variables[i]
    }

    pub fn variables(&self) -> &[VariablePartition] {
        &self.variables
    }

    /// Common refinement of all per-variable partitions.
    pub fn meet(&self) -> VariablePartition {
        VariablePartition {
            context_of: meet_labels(
                self.variables.iter().map(|v| v.context_of.as_slice()),
                self.n_datasets(),
            ),
            regime_of: meet_labels(
                self.variables.iter().map(|v| v.regime_of.as_slice()),
                self.n_intervals(),
            ),
        }
    }

    /// Checks dimensions against a panel and changepoint set.
    pub fn check_dims(
        &self,
        n_vars: usize,
        n_datasets: usize,
        changepoints: &ChangepointSet,
    ) -> Result<()> {
        if self.n_vars() != n_vars
            || self.n_datasets() != n_datasets
            || self.n_intervals() != changepoints.n_intervals()
        {
            return Err(Error::InvalidPartition(format!(
                "partition is {} vars x {} datasets x {} intervals; expected {} x {} x {}",
                self.n_vars(),
                self.n_datasets(),
                self.n_intervals(),
                n_vars,
                n_datasets,
                changepoints.n_intervals()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intervals_and_lookup() {
        let cps = ChangepointSet::new(200, vec![70, 140]).unwrap();
        assert_eq!(cps.intervals(), vec![0..70, 70..140, 140..200]);
        assert_eq!(cps.interval_of(0), 0);
        assert_eq!(cps.interval_of(69), 0);
        assert_eq!(cps.interval_of(70), 1);
        assert_eq!(cps.interval_of(199), 2);
    }

    #[test]
    fn rejects_unsorted_and_boundary_points() {
        assert!(ChangepointSet::new(100, vec![50, 40]).is_err());
        assert!(ChangepointSet::new(100, vec![0]).is_err());
        assert!(ChangepointSet::new(100, vec![100]).is_err());
        assert!(ChangepointSet::new(100, vec![50, 50]).is_err());
    }

    #[test]
    fn enforces_min_duration() {
        assert!(ChangepointSet::with_min_duration(100, vec![30, 70], 30).is_ok());
        assert!(ChangepointSet::with_min_duration(100, vec![29], 30).is_err());
        assert!(ChangepointSet::with_min_duration(100, vec![71], 30).is_err());
    }

    #[test]
    fn canonical_by_first_appearance() {
        assert_eq!(canonicalize(&[5, 5, 2, 7, 2]), vec![0, 0, 1, 2, 1]);
        assert!(
            VariablePartition::new(&[3, 1], &[9]).unwrap()
                == VariablePartition::new(&[0, 1], &[0]).unwrap()
        );
    }

    #[test]
    fn meet_is_common_refinement() {
        let a = VariablePartition::new(&[0, 0, 1], &[0, 1, 0]).unwrap();
        let b = VariablePartition::new(&[0, 1, 1], &[0, 0, 0]).unwrap();
        let pa = PartitionAssignment::new(vec![a, b]).unwrap();
        let m = pa.meet();
        assert_eq!(m.context_of, vec![0, 1, 2]);
        assert_eq!(m.regime_of, vec![0, 1, 0]);
    }

    #[test]
    fn regime_per_time_expands_intervals() {
        let cps = ChangepointSet::new(6, vec![2, 4]).unwrap();
        let vp = VariablePartition::new(&[0], &[0, 1, 0]).unwrap();
        assert_eq!(vp.regime_per_time(&cps), vec![0, 0, 1, 1, 0, 0]);
    }
}
