//! Description lengths, in bits.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use super::GpFit;
use crate::error::{Error, Result};

/// Variance floor for the parentless Gaussian code.
pub const EPS_VAR: f64 = 1e-9;

/// Bits split into data fit, function norm and model complexity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CodeLength {
    pub bits: f64,
    pub neg_log_lik_bits: f64,
    pub rkhs_norm_bits: f64,
    pub complexity_bits: f64,
}

impl CodeLength {
    fn from_nats(nll: f64, rkhs: f64, complexity: f64) -> Result<Self> {
        for (v, name) in [
            (nll, "neg_log_lik"),
            (rkhs, "rkhs_norm"),
            (complexity, "complexity"),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFiniteScore(name));
            }
        }
        let (a, b, c) = (nll / LN_2, rkhs / LN_2, complexity / LN_2);
        Ok(Self {
            bits: a + b + c,
            neg_log_lik_bits: a,
            rkhs_norm_bits: b,
            complexity_bits: c,
        })
    }
}

/// Refined-MDL length of a GP fit:
/// `-log p(y | X) + ||f||²_κ + ½ log det(σ⁻² K + I)`.
pub fn code_length(fit: &GpFit) -> Result<CodeLength> {
    let n = fit.n() as f64;
    let noise = fit.effective_noise();
    let y = &fit.train_targets;
    let y_alpha: f64 = y.iter().zip(&fit.alpha).map(|(a, b)| a * b).sum();
    let alpha_sq: f64 = fit.alpha.iter().map(|a| a * a).sum();
    let log_det = fit.chol_factor.log_det();

    let nll = 0.5 * y_alpha + 0.5 * log_det + 0.5 * n * (2.0 * PI).ln();
    // αᵀKα = αᵀ(K + σ²I)α − σ²αᵀα
    let rkhs = (y_alpha - noise * alpha_sq).max(0.0);
    let complexity = (0.5 * (log_det - n * noise.ln())).max(0.0);
    CodeLength::from_nats(nll, rkhs, complexity)
}

/// Two-part Gaussian code for a variable without parents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalCode {
    /// `complexity_bits` holds the parameter cost, `½ log₂ n` for each of mean and variance.
    pub code: CodeLength,
    pub mean: f64,
    pub variance: f64,
    /// The sample variance fell below [`EPS_VAR`] and was clamped.
    pub degenerate: bool,
}

pub fn marginal_code_length(targets: &[f64]) -> Result<MarginalCode> {
    let n = targets.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "marginal code needs >= 2 samples, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = targets.iter().sum::<f64>() / nf;
    let ss: f64 = targets.iter().map(|y| (y - mean).powi(2)).sum();
    let raw_var = ss / nf;
    let degenerate = !(raw_var >= EPS_VAR);
    let variance = if degenerate { EPS_VAR } else { raw_var };
    let nll = 0.5 * nf * (2.0 * PI * variance).ln() + ss / (2.0 * variance);
    let params = nf.ln(); // 2 * ½ ln n
    Ok(MarginalCode {
        code: CodeLength::from_nats(nll, 0.0, params)?,
        mean,
        variance,
        degenerate,
    })
}
