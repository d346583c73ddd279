//! Test oracles that share no code with the estimator engine: Gaussian
//! elimination with partial pivoting, row-wise weighted least squares, and a
//! BFGS maximizer of the joint Gaussian log-likelihood.

#![allow(dead_code)]

use mmrm_core::trial_data::TrialDataset;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        assert!(a[col][col].abs() > 1e-300, "singular system");
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            solve(a.to_vec(), e)
        })
        .collect();
    (0..n).map(|r| (0..n).map(|c| cols[c][r]).collect()).collect()
}

/// Ordinary least squares of `y` on the rows of `x`.
pub fn ols(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in x.iter().zip(y) {
        for a in 0..p {
            xty[a] += row[a] * yi;
            for b in 0..p {
                xtx[a][b] += row[a] * row[b];
            }
        }
    }
    solve(xtx, xty)
}

/// OLS of `Y_t` on `(1, X, W)` over subjects observed at 0-based time `t`,
/// returned as `(intercept, slopes, treatment effect)`.
pub fn per_time_ols(ds: &TrialDataset<f64>, t: usize) -> (f64, Vec<f64>, f64) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for s in ds.subjects() {
        if let Some(v) = s.outcomes()[t] {
            let mut row = vec![1.0];
            row.extend_from_slice(s.covariates());
            row.push(if s.treatment() { 1.0 } else { 0.0 });
            x.push(row);
            y.push(v);
        }
    }
    let beta = ols(&x, &y);
    let k = ds.n_covariates();
    (beta[0], beta[1..=k].to_vec(), beta[k + 1])
}

/// Row of `Zᵢᵀ` at 0-based time `t`, built independently of the library's layout code.
/// `interact` selects timepoint-specific covariate blocks.
pub fn design_row(j: usize, x: &[f64], w: f64, t: usize, interact: bool) -> Vec<f64> {
    let k = x.len();
    let nb = if interact { j * k } else { k };
    let mut row = vec![0.0; 2 * j + nb];
    row[t] = 1.0;
    let off = if interact { j + t * k } else { j };
    row[off..off + k].copy_from_slice(x);
    row[j + nb + t] = w;
    row
}

/// GLS normal equations assembled only from each subject's observed rows,
/// inverting the observed block of `sigma` per subject.
pub fn wls_observed_rows(ds: &TrialDataset<f64>, sigma: &[Vec<f64>], interact: bool) -> Vec<f64> {
    let j = ds.n_times();
    let k = ds.n_covariates();
    let p = 2 * j + if interact { j * k } else { k };
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for s in ds.subjects() {
        let m = s.n_observed();
        if m == 0 {
            continue;
        }
        let block: Vec<Vec<f64>> = (0..m).map(|r| sigma[r][..m].to_vec()).collect();
        let w_inv = invert(&block);
        let w = if s.treatment() { 1.0 } else { 0.0 };
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|t| design_row(j, s.covariates(), w, t, interact))
            .collect();
        let y: Vec<f64> = s.observed_outcomes().collect();
        for r in 0..m {
            for c in 0..m {
                for pa in 0..p {
                    b[pa] += rows[r][pa] * w_inv[r][c] * y[c];
                    for pb in 0..p {
                        a[pa][pb] += rows[r][pa] * w_inv[r][c] * rows[c][pb];
                    }
                }
            }
        }
    }
    solve(a, b)
}

/// Parameters of the joint Gaussian likelihood: θ followed by the lower
/// triangle of the Cholesky factor with log-diagonal.
pub struct LikelihoodProblem<'a> {
    pub ds: &'a TrialDataset<f64>,
    pub interact: bool,
}

impl LikelihoodProblem<'_> {
    pub fn n_theta(&self) -> usize {
        let j = self.ds.n_times();
        let k = self.ds.n_covariates();
        2 * j + if self.interact { j * k } else { k }
    }

    pub fn n_params(&self) -> usize {
        let j = self.ds.n_times();
        self.n_theta() + j * (j + 1) / 2
    }

    pub fn cholesky_factor(&self, params: &[f64]) -> Vec<Vec<f64>> {
        let j = self.ds.n_times();
        let mut l = vec![vec![0.0; j]; j];
        let mut idx = self.n_theta();
        for r in 0..j {
            for c in 0..=r {
                l[r][c] = if r == c { params[idx].exp() } else { params[idx] };
                idx += 1;
            }
        }
        l
    }

    pub fn sigma(&self, params: &[f64]) -> Vec<Vec<f64>> {
        let l = self.cholesky_factor(params);
        let j = l.len();
        (0..j)
            .map(|r| (0..j).map(|c| (0..j).map(|s| l[r][s] * l[c][s]).sum()).collect())
            .collect()
    }

    /// Full-data log-likelihood up to a constant.
    pub fn loglik(&self, params: &[f64]) -> f64 {
        let j = self.ds.n_times();
        let l = self.cholesky_factor(params);
        let logdet: f64 = (0..j).map(|t| 2.0 * l[t][t].ln()).sum();
        let theta = &params[..self.n_theta()];
        let mut total = 0.0;
        for s in self.ds.subjects() {
            let w = if s.treatment() { 1.0 } else { 0.0 };
            let r: Vec<f64> = (0..j)
                .map(|t| {
                    let row = design_row(j, s.covariates(), w, t, self.interact);
                    s.outcomes()[t].unwrap() - row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            // forward solve L u = r
            let mut u = vec![0.0; j];
            for t in 0..j {
                let acc: f64 = (0..t).map(|q| l[t][q] * u[q]).sum();
                u[t] = (r[t] - acc) / l[t][t];
            }
            total += -0.5 * logdet - 0.5 * u.iter().map(|v| v * v).sum::<f64>();
        }
        total
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (self.loglik(&a) - self.loglik(&b)) / (2.0 * h)
            })
            .collect()
    }

    /// Maximizes the log-likelihood by BFGS with backtracking line search.
    pub fn maximize(&self) -> Vec<f64> {
        let n = self.n_params();
        let mut x = vec![0.0; n];
        let f = |p: &[f64]| -self.loglik(p);
        let g = |p: &[f64]| self.gradient(p).iter().map(|v| -v).collect::<Vec<_>>();
        let mut h = vec![vec![0.0; n]; n];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let mut fx = f(&x);
        let mut gx = g(&x);
        for _ in 0..5000 {
            let gnorm = gx.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm < 1e-7 {
                break;
            }
            let d: Vec<f64> = (0..n).map(|i| -(0..n).map(|c| h[i][c] * gx[c]).sum::<f64>()).collect();
            let slope: f64 = d.iter().zip(&gx).map(|(a, b)| a * b).sum();
            let (d, slope) = if slope >= 0.0 {
                for (i, row) in h.iter_mut().enumerate() {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    row[i] = 1.0;
                }
                let d: Vec<f64> = gx.iter().map(|v| -v).collect();
                let s = -gx.iter().map(|v| v * v).sum::<f64>();
                (d, s)
            } else {
                (d, slope)
            };
            let mut step = 1.0;
            let (xn, fxn) = loop {
                let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                let fxn = f(&xn);
                if fxn <= fx + 1e-4 * step * slope || step < 1e-14 {
                    break (xn, fxn);
                }
                step *= 0.5;
            };
            let gn = g(&xn);
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = gn.iter().zip(&gx).map(|(a, b)| a - b).collect();
            let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
            if sy > 1e-300 {
                let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|c| h[i][c] * y[c]).sum()).collect();
                let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
                for i in 0..n {
                    for c in 0..n {
                        h[i][c] += (sy + yhy) * s[i] * s[c] / (sy * sy)
                            - (hy[i] * s[c] + s[i] * hy[c]) / sy;
                    }
                }
            }
            x = xn;
            fx = fxn;
            gx = gn;
        }
        x
    }
}
