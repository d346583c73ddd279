//! Maximum likelihood fits of complete-case ANCOVA, MMRM and MMRM with
//! time-by-covariate interactions under monotone dropout.
//!
//! All three share one engine. ANCOVA is the single-timepoint case run on the
//! subjects whose final outcome is observed; the repeated-measures variants use
//! every observed prefix, weighting subject `i` by the inverse of the leading
//! block of `Σ` that matches its observed outcomes.
//!
//! The fit alternates an exact GLS solve for `θ` with the pairwise
//! available-case update of `Σ`, starting from `Σ = I`, until the largest
//! absolute change in any entry of `θ̂` or `Σ̂` drops below the tolerance.

mod inference;
mod steps;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};
use crate::scalar::Scalar;
use crate::trial_data::{design_matrix, DataError, ParamLayout, TrialDataset, Variant};

pub use inference::{
    fisher_information, model_based_covariance, sandwich_covariance, wald_test, WaldTest,
};
pub use steps::{
    gls_step, omega_j, pairwise_residual_covariance, sigma_step, OmegaWeights, MIN_EIGENVALUE,
};

use steps::Problem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("NonPositiveDefinite: leading {block}x{block} covariance block has minimum eigenvalue {min_eigenvalue:e}")]
    NonPositiveDefinite { block: usize, min_eigenvalue: f64 },
    #[error("SingularNormalEquations: design is rank deficient at column {column}")]
    SingularNormalEquations { column: usize },
    #[error("EmptyOverlap: no subject is observed at both times {time_a} and {time_b}")]
    EmptyOverlap { time_a: usize, time_b: usize },
    #[error("SingularInformation: information matrix is not invertible")]
    SingularInformation,
    #[error("InvalidSe: standard error {se} is not positive")]
    InvalidSe { se: f64 },
    #[error("InsufficientData: {0}")]
    InsufficientData(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl From<LinalgError> for FitError {
    fn from(e: LinalgError) -> Self {
        FitError::DimensionMismatch(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeKind {
    #[default]
    ModelBased,
    Sandwich,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    /// Center covariates at their grand mean before fitting. Estimates are
    /// reported on the original covariate scale either way.
    pub centering: bool,
    pub tolerance: f64,
    pub max_iter: usize,
    pub se_kind: SeKind,
}

impl ModelSpec {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            centering: true,
            tolerance: 1e-8,
            max_iter: 200,
            se_kind: SeKind::ModelBased,
        }
    }

    pub fn with_se(self, se_kind: SeKind) -> Self {
        Self { se_kind, ..self }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.tolerance > 0.0) {
            return Err(FitError::InvalidSpec(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iter < 1 {
            return Err(FitError::InvalidSpec("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Estimates and inference for one fit. Parameter order is `α`, then `β`
/// (one block per timepoint for [`Variant::MmrmInteract`]), then `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct FitResult<T> {
    pub variant: Variant,
    pub theta_hat: Vec<T>,
    pub sigma_hat: Matrix<T>,
    pub cov_theta: Matrix<T>,
    #[serde(rename = "tau_J")]
    pub tau_j: T,
    #[serde(rename = "se_tau_J")]
    pub se_tau_j: T,
    pub z: f64,
    pub p_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_used: usize,
    pub se_kind: SeKind,
}

impl<T: Scalar> FitResult<T> {
    pub fn layout(&self, n_covariates: usize) -> ParamLayout {
        ParamLayout::new(self.variant, self.sigma_hat.rows(), n_covariates)
    }

    /// Wald decision at `alpha_level` for the final-timepoint effect.
    pub fn rejects(&self, alpha_level: f64) -> bool {
        self.p_value < alpha_level
    }
}

/// Maps centered-covariate parameters back to the original covariate scale:
/// `α_t ← α_t − x̄ᵀβ(_t)`.
fn uncentering_map<T: Scalar>(layout: &ParamLayout, means: &[T]) -> Matrix<T> {
    let mut m = Matrix::identity(layout.len());
    for t in 0..layout.n_times {
        for (k, &xk) in means.iter().enumerate() {
            m[(layout.alpha(t), layout.beta(t, k))] -= xk;
        }
    }
    m
}

fn check_ancova_data<T: Scalar>(ds: &TrialDataset<T>) -> Result<(), FitError> {
    let j = ds.n_times();
    let need = ds.n_covariates() + 3;
    let complete: Vec<_> = ds.subjects().iter().filter(|s| s.dropout_time() > j).collect();
    if complete.len() < need {
        return Err(FitError::InsufficientData(format!(
            "{} complete cases at the final timepoint, need at least {need}",
            complete.len()
        )));
    }
    for arm in [false, true] {
        if !complete.iter().any(|s| s.treatment() == arm) {
            return Err(FitError::InsufficientData(format!(
                "no complete cases in arm {}",
                arm as u8
            )));
        }
    }
    Ok(())
}

/// Fits `spec` to `ds` by maximum likelihood.
///
/// Non-convergence within `max_iter` is not an error: the last iterate is
/// returned with `converged = false`.
pub fn fit<T: Scalar>(ds: &TrialDataset<T>, spec: &ModelSpec) -> Result<FitResult<T>, FitError> {
    spec.validate()?;
    let reduced;
    let work = if spec.variant == Variant::Ancova {
        check_ancova_data(ds)?;
        reduced = ds.final_time_complete_cases()?;
        &reduced
    } else {
        ds
    };
    let layout = ParamLayout::new(spec.variant, work.n_times(), work.n_covariates());
    let z = design_matrix(work, spec.variant, spec.centering);
    let problem = Problem::new(work, &z)?;
    let n_used = problem.n_used();
    if n_used < 2 {
        return Err(FitError::InsufficientData(format!(
            "{n_used} subjects with observed outcomes"
        )));
    }

    let tol = T::lit(spec.tolerance);
    let mut sigma = Matrix::identity(work.n_times());
    let mut theta: Option<Vec<T>> = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < spec.max_iter {
        iterations += 1;
        let next_theta = problem.gls(&sigma)?;
        let next_sigma = problem.sigma(&next_theta)?;
        let change = theta.as_ref().map(|prev| {
            prev.iter()
                .zip(&next_theta)
                .fold(next_sigma.max_abs_diff(&sigma), |acc, (&a, &b)| {
                    acc.max((a - b).abs())
                })
        });
        theta = Some(next_theta);
        sigma = next_sigma;
        if matches!(change, Some(c) if c < tol) {
            converged = true;
            break;
        }
    }
    let theta = theta.expect("max_iter >= 1");

    let omega = OmegaWeights::for_dataset(work, &sigma)?;
    let (info, _) = problem.normal_equations(&omega);
    let cov = match spec.se_kind {
        SeKind::ModelBased => model_based_covariance(&info)?,
        SeKind::Sandwich => inference::sandwich_from_parts(&problem, &omega, &info, &theta)?,
    };

    let (theta, cov) = if spec.centering {
        let map = uncentering_map(&layout, &work.covariate_means());
        let theta = map.matvec(&theta)?;
        let mut cov = map.matmul(&cov)?.matmul(&map.transpose())?;
        cov.symmetrize_from_upper();
        (theta, cov)
    } else {
        (theta, cov)
    };

    let idx = layout.tau_last();
    let tau = theta[idx];
    let se = cov[(idx, idx)].max(T::zero()).sqrt();
    let wald = wald_test(tau, se, 0.05)?;
    Ok(FitResult {
        variant: spec.variant,
        theta_hat: theta,
        sigma_hat: sigma,
        cov_theta: cov,
        tau_j: tau,
        se_tau_j: se,
        z: wald.z,
        p_value: wald.p_value,
        converged,
        iterations,
        n_used,
        se_kind: spec.se_kind,
    })
}
