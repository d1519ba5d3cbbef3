//! Evaluation metrics for graphs, changepoints and partitions.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LaggedEdge, SummaryGraph, WindowCausalGraph};
use crate::regime::ChangepointSet;

/// Default matching tolerance for changepoints, in time steps.
pub const DEFAULT_MARGIN: usize = 5;

fn set_f1<T: Ord>(pred: &BTreeSet<T>, truth: &BTreeSet<T>) -> f64 {
    if pred.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let tp = pred.intersection(truth).count() as f64;
    let fp = pred.len() as f64 - tp;
    let fn_ = truth.len() as f64 - tp;
    2.0 * tp / (2.0 * tp + fp + fn_)
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// F1 over exact `(source, target, lag)` matches.
pub fn directed_edge_f1(pred: &WindowCausalGraph, truth: &WindowCausalGraph) -> Result<f64> {
    if pred.n_vars() != truth.n_vars() {
        return Err(Error::KindMismatch(format!(
            "{} vs {} variables",
            pred.n_vars(),
            truth.n_vars()
        )));
    }
    let p: BTreeSet<LaggedEdge> = pred.edges().copied().collect();
    let t: BTreeSet<LaggedEdge> = truth.edges().copied().collect();
    Ok(set_f1(&p, &t))
}

/// F1 over directed `(source, target)` pairs of lag-collapsed graphs.
pub fn summary_edge_f1(pred: &SummaryGraph, truth: &SummaryGraph) -> Result<f64> {
    if pred.n_vars != truth.n_vars {
        return Err(Error::KindMismatch(format!(
            "{} vs {} variables",
            pred.n_vars, truth.n_vars
        )));
    }
    Ok(set_f1(&pred.edges, &truth.edges))
}

/// One-to-one matching within `±margin`, closest pairs first; ties go to earlier indices.
pub fn changepoint_f1(pred: &ChangepointSet, truth: &ChangepointSet, margin: usize) -> f64 {
    changepoint_f1_points(pred.points(), truth.points(), margin)
}

pub fn changepoint_f1_points(pred: &[usize], truth: &[usize], margin: usize) -> f64 {
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (ti, &t) in truth.iter().enumerate() {
        for (pi, &p) in pred.iter().enumerate() {
            let d = p.abs_diff(t);
            if d <= margin {
                pairs.push((d, ti, pi));
            }
        }
    }
    pairs.sort_unstable();
    let mut used_t = vec![false; truth.len()];
    let mut used_p = vec![false; pred.len()];
    let mut tp = 0;
    for (_, ti, pi) in pairs {
        if !used_t[ti] && !used_p[pi] {
            used_t[ti] = true;
            used_p[pi] = true;
            tp += 1;
        }
    }
    f1_from_counts(tp, pred.len() - tp, truth.len() - tp)
}

struct Contingency {
    n: usize,
    cells: HashMap<(usize, usize), usize>,
    rows: HashMap<usize, usize>,
    cols: HashMap<usize, usize>,
}

fn contingency(a: &[usize], b: &[usize]) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let mut c = Contingency {
        n: a.len(),
        cells: HashMap::new(),
        rows: HashMap::new(),
        cols: HashMap::new(),
    };
    for (&x, &y) in a.iter().zip(b) {
        *c.cells.entry((x, y)).or_default() += 1;
        *c.rows.entry(x).or_default() += 1;
        *c.cols.entry(y).or_default() += 1;
    }
    Ok(c)
}

fn pairs(k: usize) -> f64 {
    let k = k as f64;
    k * (k - 1.0) / 2.0
}

/// Adjusted Rand index. When both labelings are trivial in the same way the index is 1.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let c = contingency(a, b)?;
    if c.n < 2 {
        return Ok(1.0);
    }
    let index: f64 = c.cells.values().map(|&v| pairs(v)).sum();
    let sa: f64 = c.rows.values().map(|&v| pairs(v)).sum();
    let sb: f64 = c.cols.values().map(|&v| pairs(v)).sum();
    let expected = sa * sb / pairs(c.n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmiNorm {
    #[default]
    Arithmetic,
    Geometric,
    Min,
    Max,
}

fn entropy(counts: &HashMap<usize, usize>, n: f64) -> f64 {
    counts
        .values()
        .map(|&v| {
            let p = v as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the chosen mean of the two entropies.
pub fn nmi_with(a: &[usize], b: &[usize], norm: NmiNorm) -> Result<f64> {
    let c = contingency(a, b)?;
    if c.n == 0 {
        return Ok(1.0);
    }
    let n = c.n as f64;
    let ha = entropy(&c.rows, n);
    let hb = entropy(&c.cols, n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mi: f64 = c
        .cells
        .iter()
        .map(|(&(x, y), &v)| {
            let pxy = v as f64 / n;
            let px = c.rows[&x] as f64 / n;
            let py = c.cols[&y] as f64 / n;
            pxy * (pxy / (px * py)).ln()
        })
        .sum();
    let denom = match norm {
        NmiNorm::Arithmetic => 0.5 * (ha + hb),
        NmiNorm::Geometric => (ha * hb).sqrt(),
        NmiNorm::Min => ha.min(hb),
        NmiNorm::Max => ha.max(hb),
    };
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    nmi_with(a, b, NmiNorm::Arithmetic)
}
