//! Independent reference implementations shared by integration and acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use spacetime::changepoint::ResidualSignal;

/// Piecewise Gaussian multichannel signal with random segment means and scales.
pub fn random_signal(seed: u64, max_n: usize, max_channels: usize) -> ResidualSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(20..=max_n);
    let c = rng.random_range(1..=max_channels);
    let n_breaks = rng.random_range(0..4);
    let mut breaks: Vec<usize> = (0..n_breaks).map(|_| rng.random_range(1..n)).collect();
    breaks.sort_unstable();
    let mut params: Vec<(f64, f64)> = (0..=n_breaks * c + c)
        .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(0.3..3.0)))
        .collect();
    params.truncate((n_breaks + 1) * c);
    let mut values = vec![0.0; n * c];
    for t in 0..n {
        let seg = breaks.iter().filter(|&&b| b <= t).count();
        for ch in 0..c {
            let (m, s) = params[seg * c + ch];
            values[t * c + ch] = Normal::new(m, s).unwrap().sample(&mut rng);
        }
    }
    let valid_from = rng.random_range(0..3);
    ResidualSignal::new(n, c, values, (0..c).map(|i| (i, 0)).collect(), valid_from).unwrap()
}

/// Gaussian mean+variance cost of `[a, b)`, summed over channels, accumulated directly.
fn direct_cost(signal: &ResidualSignal, a: usize, b: usize, floor: f64) -> f64 {
    let a = a.max(signal.valid_from());
    if b <= a {
        return 0.0;
    }
    let m = (b - a) as f64;
    (0..signal.n_channels())
        .map(|ch| {
            let mean = (a..b).map(|t| signal.at(t, ch)).sum::<f64>() / m;
            let ss: f64 = (a..b).map(|t| (signal.at(t, ch) - mean).powi(2)).sum();
            let v = (ss / m).max(floor);
            0.5 * m * (2.0 * std::f64::consts::PI * v).ln() + ss / (2.0 * v)
        })
        .sum()
}

/// Exhaustive O(n²) segment DP: changepoints and penalized cost of the optimum.
pub fn exhaustive_segmentation(
    signal: &ResidualSignal,
    penalty: f64,
    min_segment: usize,
    floor: f64,
) -> (Vec<usize>, f64) {
    let n = signal.n_time();
    let mut best = vec![f64::INFINITY; n + 1];
    let mut prev = vec![usize::MAX; n + 1];
    best[0] = 0.0;
    for t in min_segment..=n {
        for s in 0..=t - min_segment {
            if s != 0 && s < min_segment || !best[s].is_finite() {
                continue;
            }
            let extra = if s == 0 { 0.0 } else { penalty };
            let v = best[s] + direct_cost(signal, s, t, floor) + extra;
            if v < best[t] {
                best[t] = v;
                prev[t] = s;
            }
        }
    }
    if !best[n].is_finite() {
        return (Vec::new(), direct_cost(signal, 0, n, floor));
    }
    let mut cps = Vec::new();
    let mut t = n;
    while prev[t] != 0 {
        t = prev[t];
        cps.push(t);
    }
    cps.reverse();
    (cps, best[n])
}

/// Penalized cost of a given segmentation under the direct cost.
pub fn segmentation_cost(signal: &ResidualSignal, cps: &[usize], penalty: f64, floor: f64) -> f64 {
    let mut bounds = vec![0];
    bounds.extend_from_slice(cps);
    bounds.push(signal.n_time());
    bounds
        .windows(2)
        .map(|w| direct_cost(signal, w[0], w[1], floor))
        .sum::<f64>()
        + penalty * cps.len() as f64
}

fn choose2(k: usize) -> f64 {
    (k * k.saturating_sub(1)) as f64 / 2.0
}

/// ARI by enumerating every index pair.
pub fn brute_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b) = (0usize, 0usize, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            in_a += sa as usize;
            in_b += sb as usize;
            both += (sa && sb) as usize;
        }
    }
    let total = choose2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = in_a as f64 * in_b as f64 / total;
    let max = 0.5 * (in_a + in_b) as f64;
    if max == expected {
        return 1.0;
    }
    (both as f64 - expected) / (max - expected)
}

/// NMI (arithmetic normalization) from an explicit contingency table.
pub fn brute_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0.0; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let h = |v: &[f64]| -> f64 {
        v.iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| -(c / n) * (c / n).ln())
            .sum()
    };
    let (ha, hb) = (h(&rows), h(&cols));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let c = table[i][j];
            if c > 0.0 {
                mi += c / n * (c * n / (rows[i] * cols[j])).ln();
            }
        }
    }
    let denom = 0.5 * (ha + hb);
    if denom == 0.0 {
        0.0
    } else {
        (mi / denom).clamp(0.0, 1.0)
    }
}

/// Random labeling pair of equal length `<= max_len` with up to `max_k` labels each.
pub fn random_labelings(seed: u64, max_len: usize, max_k: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_len);
    let ka = rng.random_range(1..=max_k);
    let kb = rng.random_range(1..=max_k);
    (
        (0..n).map(|_| rng.random_range(0..ka)).collect(),
        (0..n).map(|_| rng.random_range(0..kb)).collect(),
    )
}
