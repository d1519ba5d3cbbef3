//! Box-constrained BFGS with projected Armijo backtracking.

#[derive(Clone, Copy, Debug)]
pub struct BfgsOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 60,
            grad_tol: 1e-5,
            f_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Norm of the projected gradient: components pushing against an active bound are ignored.
fn projected_grad_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&lo, &hi))| {
            if (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0) {
                0.0
            } else {
                gi * gi
            }
        })
        .sum::<f64>()
        .sqrt()
}

/// Minimize `f` inside `[lower, upper]`.
///
/// `f(x, with_grad)` returns the value and, when `with_grad` is set, the gradient; `None` where
/// undefined. Backtracking trials only request values. Returns `None` only when `f` is undefined
/// at the (projected) starting point.
pub fn minimize<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &BfgsOptions,
) -> Option<Minimum>
where
    F: FnMut(&[f64], bool) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x, true)?;
    let mut evaluations = 1;
    // inverse Hessian approximation, row-major
    let mut h = scaled_identity(n, 1.0);
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if projected_grad_norm(&x, &g, lower, upper) < opts.grad_tol {
            break;
        }
        iterations += 1;
        let mut d: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>())
            .collect();
        if d.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() >= 0.0 {
            // lost descent; fall back to steepest descent
            h = scaled_identity(n, 1.0);
            d = g.iter().map(|v| -v).collect();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            project(&mut trial, lower, upper);
            let moved: f64 = trial.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
            if moved == 0.0 {
                break;
            }
            let decrease: f64 = trial
                .iter()
                .zip(&x)
                .zip(&g)
                .map(|((t, xi), gi)| (t - xi) * gi)
                .sum();
            evaluations += 1;
            if let Some((ft, _)) = f(&trial, false) {
                if ft.is_finite() && ft <= fx + 1e-4 * decrease.min(0.0) {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            break;
        };
        let Some((_, gn)) = f(&xn, true) else {
            break;
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let converged = (fx - fnew).abs() <= opts.f_tol * (1.0 + fx.abs());
        x = xn;
        g = gn;
        fx = fnew;
        if sy > 1e-12 {
            bfgs_update(&mut h, &s, &y, sy);
        }
        if converged {
            break;
        }
    }
    Some(Minimum {
        x,
        value: fx,
        iterations,
        evaluations,
    })
}

fn scaled_identity(n: usize, scale: f64) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = scale;
    }
    h
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum())
        .collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] +=
                -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
