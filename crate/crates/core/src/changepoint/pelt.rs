use serde::{Deserialize, Serialize};

use super::ResidualSignal;
use crate::error::{Error, Result};

/// Floor on per-segment variance in the Gaussian cost.
pub const VAR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeltConfig {
    /// Penalty per changepoint in nats; `None` means `2 · n_channels · ln n_time`.
    pub penalty: Option<f64>,
    pub min_segment: usize,
}

impl PeltConfig {
    pub fn new(min_segment: usize) -> Self {
        Self {
            penalty: None,
            min_segment,
        }
    }

    pub fn penalty_for(&self, signal: &ResidualSignal) -> f64 {
        self.penalty
            .unwrap_or_else(|| 2.0 * signal.n_channels() as f64 * (signal.n_time() as f64).ln())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.penalty {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::config(
                    "penalty",
                    format!("must be positive, got {b}"),
                ));
            }
        }
        if self.min_segment < 2 {
            return Err(Error::config("min_segment", "must be at least 2"));
        }
        Ok(())
    }
}

/// Segment costs from per-channel prefix sums.
pub struct SegmentCost {
    n_channels: usize,
    valid_from: usize,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl SegmentCost {
    pub fn new(signal: &ResidualSignal) -> Self {
        let (n, c) = (signal.n_time(), signal.n_channels());
        let mut s1 = vec![0.0; (n + 1) * c];
        let mut s2 = vec![0.0; (n + 1) * c];
        for t in 0..n {
            for ch in 0..c {
                let v = if t >= signal.valid_from() {
                    signal.at(t, ch)
                } else {
                    0.0
                };
                s1[(t + 1) * c + ch] = s1[t * c + ch] + v;
                s2[(t + 1) * c + ch] = s2[t * c + ch] + v * v;
            }
        }
        Self {
            n_channels: c,
            valid_from: signal.valid_from(),
            s1,
            s2,
        }
    }

    /// Gaussian negative log-likelihood (nats) of `[a, b)` at the segment's own mean and
    /// variance, summed over channels. Rows before `valid_from` are ignored.
    pub fn cost(&self, a: usize, b: usize) -> f64 {
        let a = a.max(self.valid_from);
        if b <= a {
            return 0.0;
        }
        let m = (b - a) as f64;
        let c = self.n_channels;
        let mut total = 0.0;
        for ch in 0..c {
            let sum = self.s1[b * c + ch] - self.s1[a * c + ch];
            let sq = self.s2[b * c + ch] - self.s2[a * c + ch];
            let ss = (sq - sum * sum / m).max(0.0);
            let var = (ss / m).max(VAR_FLOOR);
            total += 0.5 * m * (2.0 * std::f64::consts::PI * var).ln() + 0.5 * ss / var;
        }
        total
    }
}

struct Candidate {
    at: usize,
    /// Dropped from consideration for all ends `>= retire_at`.
    retire_at: usize,
}

/// Exact penalized segmentation (PELT) with a minimum segment length.
///
/// Returns changepoints relative to the signal's time axis. Among equal-cost optima the one
/// with the earliest last changepoint at every step is returned.
pub fn pelt(signal: &ResidualSignal, config: &PeltConfig) -> Result<Vec<usize>> {
    config.validate()?;
    let n = signal.n_time();
    let d = config.min_segment;
    let beta = config.penalty_for(signal);
    if n < 2 * d {
        return Ok(Vec::new());
    }
    let cost = SegmentCost::new(signal);
    let mut f = vec![f64::INFINITY; n + 1];
    let mut last = vec![0usize; n + 1];
    f[0] = -beta;
    let mut cands: Vec<Candidate> = Vec::new();
    for t in d..=n {
        let s_new = t - d;
        if s_new == 0 || s_new >= d {
            cands.push(Candidate {
                at: s_new,
                retire_at: usize::MAX,
            });
        }
        cands.retain(|c| c.retire_at > t);
        let mut best = f64::INFINITY;
        let mut arg = 0;
        let mut vals = Vec::with_capacity(cands.len());
        for c in &cands {
            let v = f[c.at] + cost.cost(c.at, t);
            vals.push(v);
            if v < best || (v == best && c.at < arg) {
                best = v;
                arg = c.at;
            }
        }
        f[t] = best + beta;
        last[t] = arg;
        for (c, v) in cands.iter_mut().zip(vals) {
            // F(s) + C(s, t') >= F(s) + C(s, t) + C(t, t') for t' >= t + d, so s can never win there
            if v > f[t] + 1e-9 && c.retire_at == usize::MAX {
                c.retire_at = t + d;
            }
        }
    }
    let mut points = Vec::new();
    let mut t = n;
    while t > 0 {
        t = last[t];
        if t > 0 {
            points.push(t);
        }
    }
    points.reverse();
    Ok(points)
}
