//! Gaussian-process regression with an RBF (ARD) kernel and refined-MDL code lengths.

mod linalg;
mod mdl;
mod optim;

pub use linalg::Cholesky;
pub use mdl::{code_length, marginal_code_length, CodeLength, MarginalCode, EPS_VAR};
pub use optim::{minimize, BfgsOptions, Minimum};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Row-major design matrix (`n_rows x n_cols`).
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl Design {
    pub fn new(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Self {
        assert_eq!(data.len(), n_rows * n_cols, "design shape mismatch");
        Self {
            data,
            n_rows,
            n_cols,
        }
    }

    /// One column holding `x`.
    pub fn column(x: &[f64]) -> Self {
        Self::new(x.to_vec(), x.len(), 1)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::new(data, idx.len(), self.n_cols)
    }

    /// Vertical concatenation.
    pub fn stack(&self, other: &Design) -> Self {
        assert_eq!(self.n_cols, other.n_cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self::new(data, self.n_rows + other.n_rows, self.n_cols)
    }
}

/// Kernel and noise hyperparameters, stored as natural logs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub log_lengthscales: Vec<f64>,
    pub log_signal_variance: f64,
    pub log_noise_variance: f64,
}

impl GpHyperparams {
    pub fn new(lengthscales: &[f64], signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let all = lengthscales
            .iter()
            .chain([&signal_variance, &noise_variance]);
        if all.clone().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput(
                "GP hyperparameters must be finite and strictly positive".into(),
            ));
        }
        Ok(Self {
            log_lengthscales: lengthscales.iter().map(|l| l.ln()).collect(),
            log_signal_variance: signal_variance.ln(),
            log_noise_variance: noise_variance.ln(),
        })
    }

    fn from_vec(theta: &[f64]) -> Self {
        let p = theta.len() - 2;
        Self {
            log_lengthscales: theta[..p].to_vec(),
            log_signal_variance: theta[p],
            log_noise_variance: theta[p + 1],
        }
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = self.log_lengthscales.clone();
        v.push(self.log_signal_variance);
        v.push(self.log_noise_variance);
        v
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|l| l.exp()).collect()
    }

    pub fn signal_variance(&self) -> f64 {
        self.log_signal_variance.exp()
    }

    pub fn noise_variance(&self) -> f64 {
        self.log_noise_variance.exp()
    }
}

/// Optimizer settings for [`fit_gp`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpOptions {
    /// Total starts: the data-driven initialization plus perturbed copies.
    pub restarts: usize,
    pub max_iter: usize,
    /// Hyperparameters are fitted on at most this many rows (deterministic stride).
    pub row_cap: usize,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self {
            restarts: 3,
            max_iter: 60,
            row_cap: 300,
        }
    }
}

/// Squared per-dimension differences between all row pairs, `[dim][i * n + j]`.
struct SquaredDiffs {
    n: usize,
    per_dim: Vec<Vec<f64>>,
}

impl SquaredDiffs {
    fn new(x: &Design) -> Self {
        let n = x.n_rows();
        let per_dim = (0..x.n_cols())
            .map(|d| {
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    let xi = x.row(i)[d];
                    for j in 0..i {
                        let diff = xi - x.row(j)[d];
                        m[i * n + j] = diff * diff;
                        m[j * n + i] = diff * diff;
                    }
                }
                m
            })
            .collect();
        Self { n, per_dim }
    }

    /// Noise-free kernel matrix.
    fn kernel(&self, inv_ls2: &[f64], signal: f64) -> Vec<f64> {
        let n = self.n;
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let idx = i * n + j;
                let r2: f64 = self
                    .per_dim
                    .iter()
                    .zip(inv_ls2)
                    .map(|(m, w)| m[idx] * w)
                    .sum();
                let v = signal * (-0.5 * r2).exp();
                k[idx] = v;
                k[j * n + i] = v;
            }
        }
        k
    }
}

fn rbf(a: &[f64], b: &[f64], inv_ls2: &[f64], signal: f64) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(inv_ls2)
        .map(|((x, y), w)| (x - y) * (x - y) * w)
        .sum();
    signal * (-0.5 * r2).exp()
}

/// Add `noise` plus the smallest sufficient jitter to the diagonal and factor.
///
/// Jitter starts at `1e-8 * tr(K)/n` and grows tenfold up to `1e-2 * tr(K)/n`.
fn factor_with_jitter(k: &[f64], n: usize, noise: f64) -> Option<(Cholesky, f64)> {
    let mean_diag = (0..n).map(|i| k[i * n + i]).sum::<f64>() / n as f64;
    let base = mean_diag.max(noise).max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    loop {
        let mut a = k.to_vec();
        for i in 0..n {
            a[i * n + i] += noise + jitter;
        }
        if let Some(c) = Cholesky::factor(a, n) {
            return Some((c, jitter));
        }
        jitter = if jitter == 0.0 {
            1e-8 * base
        } else {
            jitter * 10.0
        };
        if jitter > 1e-2 * base * 1.000_001 {
            return None;
        }
    }
}

/// Negative log marginal likelihood (nats) and its gradient w.r.t. the log-hyperparameters.
fn neg_log_marginal(
    theta: &[f64],
    sq: &SquaredDiffs,
    y: &[f64],
    with_grad: bool,
) -> Option<(f64, Vec<f64>)> {
    let n = sq.n;
    let p = sq.per_dim.len();
    let inv_ls2: Vec<f64> = theta[..p].iter().map(|l| (-2.0 * l).exp()).collect();
    let signal = theta[p].exp();
    let noise = theta[p + 1].exp();
    let k = sq.kernel(&inv_ls2, signal);
    let (chol, _) = factor_with_jitter(&k, n, noise)?;
    let alpha = chol.solve(y);
    let fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let value = 0.5 * fit + 0.5 * chol.log_det() + 0.5 * n as f64 * LN_2PI;
    if !value.is_finite() {
        return None;
    }
    if !with_grad {
        return Some((value, Vec::new()));
    }
    // dNLL/dθ = ½ tr(W ∂K/∂θ) with W = K_y^{-1} - α αᵀ
    let mut w = chol.inverse();
    for i in 0..n {
        for j in 0..n {
            w[i * n + j] -= alpha[i] * alpha[j];
        }
    }
    let mut grad = vec![0.0; p + 2];
    let mut g_signal = 0.0;
    let mut g_dims = vec![0.0; p];
    for i in 0..n {
        for j in 0..i {
            let idx = i * n + j;
            let wk = w[idx] * k[idx];
            g_signal += wk;
            for (g, (m, s)) in g_dims.iter_mut().zip(sq.per_dim.iter().zip(&inv_ls2)) {
                *g += wk * m[idx] * s;
            }
        }
    }
    // off-diagonal terms appear twice; the diagonal of ∂K/∂log ℓ is zero
    let diag_wk: f64 = (0..n).map(|i| w[i * n + i] * k[i * n + i]).sum();
    let trace_w: f64 = (0..n).map(|i| w[i * n + i]).sum();
    grad[..p].copy_from_slice(&g_dims[..p]);
    grad[p] = 0.5 * (2.0 * g_signal + diag_wk);
    grad[p + 1] = 0.5 * noise * trace_w;
    Some((value, grad))
}

/// Log marginal likelihood and its gradient at `hp` (no centering, no optimization).
pub fn log_marginal_likelihood(
    inputs: &Design,
    targets: &[f64],
    hp: &GpHyperparams,
) -> Result<(f64, Vec<f64>)> {
    let sq = SquaredDiffs::new(inputs);
    neg_log_marginal(&hp.to_vec(), &sq, targets, true)
        .map(|(v, g)| (-v, g.into_iter().map(|x| -x).collect()))
        .ok_or(Error::SingularKernel)
}

/// A GP posterior over a fixed set of training rows.
#[derive(Clone, Debug)]
pub struct GpFit {
    pub hyperparams: GpHyperparams,
    pub train_inputs: Design,
    /// Centered targets (the fitted mean is `target_mean`).
    pub train_targets: Vec<f64>,
    pub target_mean: f64,
    /// `(K + σ²I)^{-1} y`.
    pub alpha: Vec<f64>,
    pub chol_factor: Cholesky,
    /// Diagonal jitter that was needed on top of σ².
    pub jitter: f64,
}

impl GpFit {
    /// Posterior for zero-mean `targets` under fixed hyperparameters.
    pub fn new(inputs: Design, targets: Vec<f64>, hyperparams: GpHyperparams) -> Result<Self> {
        Self::with_mean(inputs, targets, 0.0, hyperparams)
    }

    fn with_mean(
        inputs: Design,
        targets: Vec<f64>,
        target_mean: f64,
        hyperparams: GpHyperparams,
    ) -> Result<Self> {
        if inputs.n_rows() != targets.len() {
            return Err(Error::LengthMismatch(inputs.n_rows(), targets.len()));
        }
        if inputs.n_cols() != hyperparams.log_lengthscales.len() {
            return Err(Error::InvalidInput(format!(
                "{} input columns but {} lengthscales",
                inputs.n_cols(),
                hyperparams.log_lengthscales.len()
            )));
        }
        let n = inputs.n_rows();
        let sq = SquaredDiffs::new(&inputs);
        let inv_ls2: Vec<f64> = hyperparams
            .log_lengthscales
            .iter()
            .map(|l| (-2.0 * l).exp())
            .collect();
        let k = sq.kernel(&inv_ls2, hyperparams.signal_variance());
        let (chol, jitter) =
            factor_with_jitter(&k, n, hyperparams.noise_variance()).ok_or(Error::SingularKernel)?;
        let alpha = chol.solve(&targets);
        Ok(Self {
            hyperparams,
            train_inputs: inputs,
            train_targets: targets,
            target_mean,
            alpha,
            chol_factor: chol,
            jitter,
        })
    }

    pub fn n(&self) -> usize {
        self.train_targets.len()
    }

    /// σ² plus any jitter actually added to the diagonal.
    pub fn effective_noise(&self) -> f64 {
        self.hyperparams.noise_variance() + self.jitter
    }

    /// Posterior mean at the training inputs, mean offset included.
    pub fn fitted(&self) -> Vec<f64> {
        let s2 = self.effective_noise();
        self.train_targets
            .iter()
            .zip(&self.alpha)
            .map(|(y, a)| self.target_mean + y - s2 * a)
            .collect()
    }

    /// Leave-one-out predictive mean and variance at each training row, hyperparameters held fixed.
    pub fn leave_one_out(&self) -> Vec<(f64, f64)> {
        let n = self.n();
        let inv = self.chol_factor.inverse();
        (0..n)
            .map(|i| {
                let d = inv[i * n + i];
                let mean = self.target_mean + self.train_targets[i] - self.alpha[i] / d;
                (mean, 1.0 / d)
            })
            .collect()
    }

    /// Predictive mean and variance of a new noisy observation at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let inv_ls2: Vec<f64> = self
            .hyperparams
            .log_lengthscales
            .iter()
            .map(|l| (-2.0 * l).exp())
            .collect();
        let signal = self.hyperparams.signal_variance();
        let mut kstar: Vec<f64> = (0..self.n())
            .map(|i| rbf(self.train_inputs.row(i), x, &inv_ls2, signal))
            .collect();
        let mean = self.target_mean
            + kstar
                .iter()
                .zip(&self.alpha)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        self.chol_factor.solve_lower_in_place(&mut kstar);
        let explained: f64 = kstar.iter().map(|v| v * v).sum();
        let var = (signal - explained).max(0.0) + self.effective_noise();
        (mean, var)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

/// Deterministic stride subsample of `n` indices down to `cap`.
pub fn stride_indices(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        (0..n).collect()
    } else {
        (0..cap).map(|i| i * n / cap).collect()
    }
}

/// Fit a GP of `targets` on `inputs` by multi-start quasi-Newton maximization of the
/// log marginal likelihood. Targets are centered first; the posterior covers all rows.
pub fn fit_gp(inputs: &Design, targets: &[f64], seed: u64, opts: &GpOptions) -> Result<GpFit> {
    let n = targets.len();
    let p = inputs.n_cols();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "fit_gp needs >= 2 rows, got {n}"
        )));
    }
    if p == 0 {
        return Err(Error::InvalidInput("fit_gp needs >= 1 input column".into()));
    }
    if inputs.n_rows() != n {
        return Err(Error::LengthMismatch(inputs.n_rows(), n));
    }
    if targets.iter().chain(&inputs.data).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite GP data".into()));
    }
    let mean = targets.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = targets.iter().map(|y| y - mean).collect();
    let var_y = (centered.iter().map(|v| v * v).sum::<f64>() / n as f64).max(EPS_VAR);

    let idx = stride_indices(n, opts.row_cap.max(2));
    let sub_x = inputs.select_rows(&idx);
    let sub_y: Vec<f64> = idx.iter().map(|&i| centered[i]).collect();
    let sq = SquaredDiffs::new(&sub_x);

    let m = idx.len();
    let mut x0 = Vec::with_capacity(p + 2);
    for d in &sq.per_dim {
        let dists: Vec<f64> = (0..m)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| d[i * m + j].sqrt())
            .collect();
        let med = median(dists);
        x0.push(if med > 1e-12 { med.ln() } else { 0.0 });
    }
    x0.push(var_y.ln());
    x0.push((0.1 * var_y).ln());

    let mut lower = Vec::with_capacity(p + 2);
    let mut upper = Vec::with_capacity(p + 2);
    for l in &x0[..p] {
        lower.push(l - 100f64.ln());
        upper.push(l + 1000f64.ln());
    }
    lower.push(var_y.ln() - 1e6f64.ln());
    upper.push(var_y.ln() + 100f64.ln());
    lower.push(var_y.ln() - 1e6f64.ln());
    upper.push(var_y.ln() + 10f64.ln());

    let bfgs = BfgsOptions {
        max_iter: opts.max_iter,
        ..BfgsOptions::default()
    };
    let mut best: Option<Minimum> = None;
    for r in 0..opts.restarts.max(1) {
        let start: Vec<f64> = if r == 0 {
            x0.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[r as u64]));
            x0.iter()
                .map(|v| {
                    v + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                })
                .collect()
        };
        let found = minimize(
            |theta, grad| neg_log_marginal(theta, &sq, &sub_y, grad),
            &start,
            &lower,
            &upper,
            &bfgs,
        );
        if let Some(mm) = found {
            if best.as_ref().is_none_or(|b| mm.value < b.value) {
                best = Some(mm);
            }
        }
    }
    let best = best.ok_or(Error::SingularKernel)?;
    GpFit::with_mean(
        inputs.clone(),
        centered,
        mean,
        GpHyperparams::from_vec(&best.x),
    )
}
