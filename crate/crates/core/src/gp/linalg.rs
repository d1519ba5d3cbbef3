//! Dense symmetric positive-definite routines on row-major `n x n` buffers.

/// Lower Cholesky factor `L` with `A = L L^T`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factor `a` (row-major, only the lower triangle is read). `None` if not positive definite.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (i * n, j * n);
                let mut s = a[ri + j];
                for k in 0..j {
                    s -= a[ri + k] * a[rj + k];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return None;
                    }
                    a[ri + i] = s.sqrt();
                } else {
                    a[ri + j] = s / a[rj + j];
                }
            }
            for j in i + 1..n {
                a[i * n + j] = 0.0;
            }
        }
        Some(Self { n, l: a })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    /// `log det A = 2 * sum(ln L_ii)`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.at(i, i).ln()).sum::<f64>()
    }

    /// Solve `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }

    /// Solve `L^T x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let xi = b[i] / self.l[i * n + i];
            b[i] = xi;
            for k in 0..i {
                b[k] -= self.l[i * n + k] * xi;
            }
        }
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// Full symmetric `A^{-1}`, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        // Row-oriented forward substitution for L^{-1}.
        let mut li = vec![0.0; n * n];
        let mut acc = vec![0.0; n];
        for i in 0..n {
            acc[..i].iter_mut().for_each(|a| *a = 0.0);
            for k in 0..i {
                let c = self.l[i * n + k];
                if c != 0.0 {
                    let row = &li[k * n..k * n + k + 1];
                    for (a, r) in acc[..=k].iter_mut().zip(row) {
                        *a += c * r;
                    }
                }
            }
            let d = self.l[i * n + i];
            for j in 0..i {
                li[i * n + j] = -acc[j] / d;
            }
            li[i * n + i] = 1.0 / d;
        }
        // A^{-1} = L^{-T} L^{-1}; accumulate the lower triangle row by row of L^{-1}.
        let mut inv = vec![0.0; n * n];
        for k in 0..n {
            let row = &li[k * n..k * n + k + 1];
            for i in 0..=k {
                let c = row[i];
                if c == 0.0 {
                    continue;
                }
                let out = &mut inv[i * n..i * n + i + 1];
                for (o, r) in out.iter_mut().zip(&row[..=i]) {
                    *o += c * r;
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                inv[j * n + i] = inv[i * n + j];
            }
        }
        inv
    }
}
