//! The two score equations: a generalized least squares solve for `θ` given
//! `Σ`, and the pairwise available-case update of `Σ` given `θ`.

use crate::linalg::{LinalgError, Matrix};
use crate::scalar::Scalar;
use crate::trial_data::{DesignMatrix, TrialDataset};

use super::FitError;

/// Minimum eigenvalue a covariance block must exceed.
pub const MIN_EIGENVALUE: f64 = 1e-10;

fn check_positive_definite<T: Scalar>(m: &Matrix<T>, block: usize) -> Result<(), FitError> {
    let min = m.min_eigenvalue();
    if !(min > T::lit(MIN_EIGENVALUE)) {
        return Err(FitError::NonPositiveDefinite {
            block,
            min_eigenvalue: min.to_f64_lossy(),
        });
    }
    Ok(())
}

/// `Ω_j`: the inverse of the leading `j x j` block of `sigma`, zero-padded to `J x J`.
pub fn omega_j<T: Scalar>(sigma: &Matrix<T>, j: usize) -> Result<Matrix<T>, FitError> {
    let n = sigma.rows();
    if j == 0 || j > n || !sigma.is_square() {
        return Err(FitError::DimensionMismatch(format!(
            "leading block {j} of a {}x{} matrix",
            sigma.rows(),
            sigma.cols()
        )));
    }
    let block = sigma.leading_block(j);
    check_positive_definite(&block, j)?;
    let inv = block.spd_inverse().map_err(|_| FitError::NonPositiveDefinite {
        block: j,
        min_eigenvalue: block.min_eigenvalue().to_f64_lossy(),
    })?;
    let mut out = Matrix::zeros(n, n);
    for r in 0..j {
        for c in 0..j {
            out[(r, c)] = inv[(r, c)];
        }
    }
    Ok(out)
}

/// Weight matrices `Ω(Σ) = Σ_j D_j Ω_j(Σ)`, one per observed-prefix length.
///
/// A subject observed at its first `m` timepoints is weighted by `Ω_m`; subjects
/// with nothing observed carry no weight.
#[derive(Debug, Clone)]
pub struct OmegaWeights<T> {
    by_observed: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> OmegaWeights<T> {
    /// Builds `Ω_m` for every prefix length `m` that occurs in `ds`.
    pub fn for_dataset(ds: &TrialDataset<T>, sigma: &Matrix<T>) -> Result<Self, FitError> {
        let j = ds.n_times();
        if sigma.rows() != j || !sigma.is_square() {
            return Err(FitError::DimensionMismatch(format!(
                "sigma is {}x{} but the dataset has {j} timepoints",
                sigma.rows(),
                sigma.cols()
            )));
        }
        let mut needed = vec![false; j + 1];
        for s in ds.subjects() {
            needed[s.n_observed()] = true;
        }
        let by_observed = (0..=j)
            .map(|m| {
                if m > 0 && needed[m] {
                    omega_j(sigma, m).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { by_observed })
    }

    /// `Ω_m`, if some subject is observed for exactly `m` timepoints.
    pub fn get(&self, m: usize) -> Option<&Matrix<T>> {
        self.by_observed.get(m).and_then(Option::as_ref)
    }
}

/// Subjects paired with their design and zero-padded outcomes.
pub(crate) struct Problem<'a, T> {
    pub ds: &'a TrialDataset<T>,
    pub z: &'a [DesignMatrix<T>],
    pub ys: Vec<Vec<T>>,
    pub n_params: usize,
}

impl<'a, T: Scalar> Problem<'a, T> {
    pub fn new(ds: &'a TrialDataset<T>, z: &'a [DesignMatrix<T>]) -> Result<Self, FitError> {
        if z.len() != ds.len() {
            return Err(FitError::DimensionMismatch(format!(
                "{} design matrices for {} subjects",
                z.len(),
                ds.len()
            )));
        }
        let n_params = z.first().map_or(0, DesignMatrix::n_params);
        if z
            .iter()
            .any(|zi| zi.n_times() != ds.n_times() || zi.n_params() != n_params)
        {
            return Err(FitError::DimensionMismatch(
                "design matrices must have one row per timepoint and equal width".into(),
            ));
        }
        Ok(Self {
            ds,
            z,
            ys: ds.subjects().iter().map(|s| s.padded_outcomes()).collect(),
            n_params,
        })
    }

    pub fn n_used(&self) -> usize {
        self.ds.subjects().iter().filter(|s| s.n_observed() > 0).count()
    }

    /// Iterates `(observed count, Zᵢᵀ, padded Yᵢ)` over subjects with data.
    pub fn used(&self) -> impl Iterator<Item = (usize, &DesignMatrix<T>, &[T])> + '_ {
        self.ds
            .subjects()
            .iter()
            .zip(self.z)
            .zip(&self.ys)
            .filter(|((s, _), _)| s.n_observed() > 0)
            .map(|((s, zi), y)| (s.n_observed(), zi, y.as_slice()))
    }

    /// `Rᵢ = Yᵢ − Zᵢᵀθ` on the observed prefix, zero beyond it.
    pub fn residuals_into(&self, m: usize, zi: &DesignMatrix<T>, y: &[T], theta: &[T], out: &mut [T]) {
        for (t, r) in out.iter_mut().enumerate() {
            *r = if t < m {
                let fitted: T = zi.row(t).iter().zip(theta).map(|(&a, &b)| a * b).sum();
                y[t] - fitted
            } else {
                T::zero()
            };
        }
    }

    /// `Σᵢ ZᵢΩᵢZᵢᵀ` and `Σᵢ ZᵢΩᵢYᵢ`, touching only the observed prefix of each subject.
    pub fn normal_equations(&self, omega: &OmegaWeights<T>) -> (Matrix<T>, Vec<T>) {
        let p = self.n_params;
        let j = self.ds.n_times();
        let mut a = Matrix::zeros(p, p);
        let mut b = vec![T::zero(); p];
        // u = Ω_m Zᵢᵀ restricted to the first m rows
        let mut u = vec![T::zero(); j * p];
        for (m, zi, y) in self.used() {
            let om = omega.get(m).expect("omega built for every observed count");
            u[..m * p].iter_mut().for_each(|x| *x = T::zero());
            for t in 0..m {
                for (col, &zv) in zi.row(t).iter().enumerate() {
                    if zv == T::zero() {
                        continue;
                    }
                    for s in 0..m {
                        u[s * p + col] += om[(s, t)] * zv;
                    }
                }
            }
            for s in 0..m {
                let zrow = zi.row(s);
                let urow = &u[s * p..(s + 1) * p];
                let ys = y[s];
                for (r, &zv) in zrow.iter().enumerate() {
                    if zv == T::zero() {
                        continue;
                    }
                    let arow = a.row_mut(r);
                    for c in r..p {
                        arow[c] += zv * urow[c];
                    }
                }
                for (bv, &uv) in b.iter_mut().zip(urow) {
                    *bv += uv * ys;
                }
            }
        }
        a.symmetrize_from_upper();
        (a, b)
    }

    /// Score contributions `gᵢ = ZᵢΩᵢRᵢ` at `theta`.
    pub fn scores(&self, omega: &OmegaWeights<T>, theta: &[T]) -> Vec<Vec<T>> {
        let p = self.n_params;
        let j = self.ds.n_times();
        let mut r = vec![T::zero(); j];
        let mut wr = vec![T::zero(); j];
        self.used()
            .map(|(m, zi, y)| {
                self.residuals_into(m, zi, y, theta, &mut r);
                let om = omega.get(m).expect("omega built for every observed count");
                for s in 0..m {
                    wr[s] = (0..m).map(|t| om[(s, t)] * r[t]).sum();
                }
                let mut g = vec![T::zero(); p];
                for s in 0..m {
                    for (gv, &zv) in g.iter_mut().zip(zi.row(s)) {
                        *gv += zv * wr[s];
                    }
                }
                g
            })
            .collect()
    }

    pub fn gls(&self, sigma: &Matrix<T>) -> Result<Vec<T>, FitError> {
        let omega = OmegaWeights::for_dataset(self.ds, sigma)?;
        let (a, b) = self.normal_equations(&omega);
        let chol = a.cholesky().map_err(|e| match e {
            LinalgError::NotPositiveDefinite { pivot } => {
                FitError::SingularNormalEquations { column: pivot }
            }
            other => FitError::DimensionMismatch(other.to_string()),
        })?;
        Ok(chol.solve(&b))
    }

    /// Pairwise available-case residual cross-products, without a definiteness check.
    pub fn assemble_sigma(&self, theta: &[T]) -> Result<Matrix<T>, FitError> {
        let j = self.ds.n_times();
        let mut sums = Matrix::<T>::zeros(j, j);
        let mut counts = vec![0usize; j * j];
        let mut r = vec![T::zero(); j];
        for (m, zi, y) in self.used() {
            self.residuals_into(m, zi, y, theta, &mut r);
            for a in 0..m {
                for b in a..m {
                    sums[(a, b)] += r[a] * r[b];
                    counts[a * j + b] += 1;
                }
            }
        }
        let mut sigma = Matrix::zeros(j, j);
        for a in 0..j {
            for b in a..j {
                let c = counts[a * j + b];
                if c == 0 {
                    return Err(FitError::EmptyOverlap {
                        time_a: a + 1,
                        time_b: b + 1,
                    });
                }
                let v = sums[(a, b)] / T::lit(c as f64);
                sigma[(a, b)] = v;
                sigma[(b, a)] = v;
            }
        }
        Ok(sigma)
    }

    pub fn sigma(&self, theta: &[T]) -> Result<Matrix<T>, FitError> {
        let sigma = self.assemble_sigma(theta)?;
        check_positive_definite(&sigma, sigma.rows())?;
        Ok(sigma)
    }
}

/// One generalized least squares solve: `θ̂ = (Σᵢ ZᵢΩᵢZᵢᵀ)⁻¹ Σᵢ ZᵢΩᵢYᵢ`.
///
/// `z` must hold one matrix per subject with one row per timepoint of `ds`.
pub fn gls_step<T: Scalar>(
    ds: &TrialDataset<T>,
    z: &[DesignMatrix<T>],
    sigma: &Matrix<T>,
) -> Result<Vec<T>, FitError> {
    Problem::new(ds, z)?.gls(sigma)
}

/// `Σ̂_jj' = |C_jj'|⁻¹ Σ_{i ∈ C_jj'} R_ij R_ij'`, rejected unless positive definite.
pub fn sigma_step<T: Scalar>(
    ds: &TrialDataset<T>,
    z: &[DesignMatrix<T>],
    theta: &[T],
) -> Result<Matrix<T>, FitError> {
    Problem::new(ds, z)?.sigma(theta)
}

/// The pairwise residual covariance without the definiteness check.
pub fn pairwise_residual_covariance<T: Scalar>(
    ds: &TrialDataset<T>,
    z: &[DesignMatrix<T>],
    theta: &[T],
) -> Result<Matrix<T>, FitError> {
    Problem::new(ds, z)?.assemble_sigma(theta)
}
