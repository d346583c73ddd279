use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::trial_data::{DesignMatrix, TrialDataset};

use super::steps::{OmegaWeights, Problem};
use super::FitError;

/// Empirical information `Σᵢ ZᵢΩᵢ(Σ̂)Zᵢᵀ`. Unnormalized, so its inverse is
/// directly the covariance of `θ̂`.
pub fn fisher_information<T: Scalar>(
    ds: &TrialDataset<T>,
    z: &[DesignMatrix<T>],
    sigma_hat: &Matrix<T>,
) -> Result<Matrix<T>, FitError> {
    let problem = Problem::new(ds, z)?;
    let omega = OmegaWeights::for_dataset(ds, sigma_hat)?;
    Ok(problem.normal_equations(&omega).0)
}

pub fn model_based_covariance<T: Scalar>(info: &Matrix<T>) -> Result<Matrix<T>, FitError> {
    info.spd_inverse().map_err(|_| FitError::SingularInformation)
}

/// `I⁻¹ (Σᵢ gᵢgᵢᵀ) I⁻¹` with score contributions `gᵢ = ZᵢΩᵢRᵢ`.
pub fn sandwich_covariance<T: Scalar>(
    ds: &TrialDataset<T>,
    z: &[DesignMatrix<T>],
    sigma_hat: &Matrix<T>,
    theta_hat: &[T],
) -> Result<Matrix<T>, FitError> {
    let problem = Problem::new(ds, z)?;
    let omega = OmegaWeights::for_dataset(ds, sigma_hat)?;
    let (info, _) = problem.normal_equations(&omega);
    sandwich_from_parts(&problem, &omega, &info, theta_hat)
}

pub(crate) fn sandwich_from_parts<T: Scalar>(
    problem: &Problem<'_, T>,
    omega: &OmegaWeights<T>,
    info: &Matrix<T>,
    theta_hat: &[T],
) -> Result<Matrix<T>, FitError> {
    let bread = model_based_covariance(info)?;
    let p = info.rows();
    let mut meat = Matrix::zeros(p, p);
    for g in problem.scores(omega, theta_hat) {
        for r in 0..p {
            if g[r] == T::zero() {
                continue;
            }
            let row = meat.row_mut(r);
            for c in r..p {
                row[c] += g[r] * g[c];
            }
        }
    }
    meat.symmetrize_from_upper();
    let mut out = bread.matmul(&meat)?.matmul(&bread)?;
    out.symmetrize_from_upper();
    Ok(out)
}

/// Two-sided Wald test against the standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub z: f64,
    pub p_value: f64,
    pub reject: bool,
}

/// `z = τ̂/se`, `p = 2(1 − Φ(|z|))`, rejecting iff `p < alpha_level`.
pub fn wald_test<T: Scalar>(tau_hat: T, se: T, alpha_level: f64) -> Result<WaldTest, FitError> {
    let se = se.to_f64_lossy();
    if !(se > 0.0) || !se.is_finite() {
        return Err(FitError::InvalidSe { se });
    }
    let z = tau_hat.to_f64_lossy() / se;
    let p_value = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok(WaldTest {
        z,
        p_value,
        reject: p_value < alpha_level,
    })
}
