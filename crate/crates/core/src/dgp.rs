//! Simulated trials: uniform covariates, Bernoulli randomization, Gaussian
//! residuals with an interchangeable correlation structure, and geometric
//! dropout that is either completely at random or driven by `X₁` and arm.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::rng::{ReplicationKey, Stream};
use crate::scalar::Scalar;
use crate::trial_data::{DataError, Subject, TrialDataset};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid `{field}`: {message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DgpError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("InvalidCorrelation: rho = {rho} is outside [0, 1)")]
    InvalidCorrelation { rho: f64 },
    #[error("InvalidHazard: subject {subject} has dropout hazard {hazard} outside (0, 1)")]
    InvalidHazard { subject: u64, hazard: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropoutKind {
    #[default]
    None,
    Mcar,
    Mar,
}

/// One point of a simulation grid.
///
/// Missing JSON fields take the defaults of the power study: `K = 2`, `J = 3`,
/// `n = 400`, `β = (5, 5)`, `τ = 1/3`, `α = 0`, 1000 replications at level 0.05.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    #[serde(rename = "J", alias = "j")]
    pub j: usize,
    /// Intercepts `α_j`.
    pub alpha: Vec<f64>,
    /// Covariate effects at times `1..J-1`.
    pub beta_base: Vec<f64>,
    /// Final-time multiplier: `β_J = b · beta_base`.
    pub b: f64,
    /// Treatment effects `τ_j`.
    pub tau: Vec<f64>,
    pub rho: f64,
    /// Per-timepoint dropout hazard.
    pub delta: f64,
    pub dropout_kind: DropoutKind,
    pub treat_prob: f64,
    pub n_reps: usize,
    pub alpha_level: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n: 400,
            k: 2,
            j: 3,
            alpha: vec![0.0; 3],
            beta_base: vec![5.0; 2],
            b: 1.0,
            tau: vec![1.0 / 3.0; 3],
            rho: 0.0,
            delta: 0.0,
            dropout_kind: DropoutKind::None,
            treat_prob: 0.5,
            n_reps: 1000,
            alpha_level: 0.05,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field, message: String| Err(ConfigError { field, message });
        if self.n < 4 {
            return bad("n", format!("{} < 4", self.n));
        }
        if self.k < 1 {
            return bad("K", "at least one covariate is required".into());
        }
        if self.j < 1 {
            return bad("J", "at least one timepoint is required".into());
        }
        for (field, v, len) in [
            ("alpha", &self.alpha, self.j),
            ("tau", &self.tau, self.j),
            ("beta_base", &self.beta_base, self.k),
        ] {
            if v.len() != len {
                return bad(field, format!("expected {len} values, found {}", v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad(field, "non-finite value".into());
            }
        }
        if !self.b.is_finite() {
            return bad("b", "non-finite".into());
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad("rho", format!("{} is outside [0, 1)", self.rho));
        }
        match self.dropout_kind {
            DropoutKind::Mar if !(self.delta > 0.1 && self.delta < 0.9) => {
                return bad(
                    "delta",
                    format!("{} is outside (0.1, 0.9), required for MAR dropout", self.delta),
                )
            }
            _ if !(0.0..1.0).contains(&self.delta) => {
                return bad("delta", format!("{} is outside [0, 1)", self.delta))
            }
            _ => {}
        }
        if !(self.treat_prob > 0.0 && self.treat_prob < 1.0) {
            return bad("treat_prob", format!("{} is outside (0, 1)", self.treat_prob));
        }
        if self.n_reps < 1 {
            return bad("n_reps", "at least one replication is required".into());
        }
        if !(0.0..=1.0).contains(&self.alpha_level) {
            return bad("alpha_level", format!("{} is outside [0, 1]", self.alpha_level));
        }
        Ok(())
    }

    /// Covariate effects at 0-based time `t`.
    pub fn beta_at(&self, t: usize) -> Vec<f64> {
        if t + 1 == self.j {
            self.beta_base.iter().map(|&x| x * self.b).collect()
        } else {
            self.beta_base.clone()
        }
    }

    /// Final-timepoint treatment effect.
    pub fn tau_last(&self) -> f64 {
        self.tau[self.j - 1]
    }
}

/// Residual covariance `Σ` of a simulated trial.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec<T> {
    pub sigma: Matrix<T>,
}

/// `Σ_jj = 1`, `Σ_jj' = ρ`.
pub fn interchangeable_covariance<T: Scalar>(
    j: usize,
    rho: f64,
) -> Result<CovarianceSpec<T>, DgpError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(DgpError::InvalidCorrelation { rho });
    }
    let r = T::lit(rho);
    Ok(CovarianceSpec {
        sigma: Matrix::from_fn(j, j, |a, b| if a == b { T::one() } else { r }),
    })
}

/// Draws a fully observed trial for replication `key`.
pub fn simulate_full_trial<T: Scalar>(
    cfg: &ScenarioConfig,
    key: ReplicationKey,
) -> Result<TrialDataset<T>, DgpError> {
    cfg.validate()?;
    let cov = interchangeable_covariance::<f64>(cfg.j, cfg.rho)?;
    let chol = cov
        .sigma
        .cholesky()
        .map_err(|_| DgpError::InvalidCorrelation { rho: cfg.rho })?;
    let l = chol.factor();
    let betas: Vec<Vec<f64>> = (0..cfg.j).map(|t| cfg.beta_at(t)).collect();

    let mut rng_x = key.rng(Stream::Covariates);
    let mut rng_w = key.rng(Stream::Treatment);
    let mut rng_e = key.rng(Stream::Residuals);
    let mut z = vec![0.0; cfg.j];
    let mut subjects = Vec::with_capacity(cfg.n);
    for id in 1..=cfg.n as u64 {
        let x: Vec<f64> = (0..cfg.k)
            .map(|_| -1.0 + 2.0 * rng_x.random::<f64>())
            .collect();
        let w = rng_w.random::<f64>() < cfg.treat_prob;
        for zi in z.iter_mut() {
            *zi = rng_e.sample(StandardNormal);
        }
        let outcomes = (0..cfg.j)
            .map(|t| {
                let eps: f64 = (0..=t).map(|s| l[(t, s)] * z[s]).sum();
                let xb: f64 = x.iter().zip(&betas[t]).map(|(a, b)| a * b).sum();
                let y = cfg.alpha[t] + xb + if w { cfg.tau[t] } else { 0.0 } + eps;
                Some(T::lit(y))
            })
            .collect();
        subjects.push(Subject::new(
            id,
            x.into_iter().map(T::lit).collect(),
            w,
            outcomes,
        )?);
    }
    Ok(TrialDataset::new(subjects)?)
}

/// First timepoint at which a per-timepoint event with probability `hazard`
/// occurs, or `J + 1` if none does. Always consumes `J` uniforms.
fn geometric_dropout_time<R: Rng>(rng: &mut R, hazard: f64, n_times: usize) -> usize {
    let mut t_drop = n_times + 1;
    for t in 1..=n_times {
        let u: f64 = rng.random();
        if u < hazard && t_drop > n_times {
            t_drop = t;
        }
    }
    t_drop
}

fn apply_hazards<T: Scalar>(
    ds: &TrialDataset<T>,
    key: ReplicationKey,
    hazard: impl Fn(&Subject<T>) -> Result<f64, DgpError>,
) -> Result<TrialDataset<T>, DgpError> {
    let mut rng = key.rng(Stream::Dropout);
    let j = ds.n_times();
    let subjects = ds
        .subjects()
        .iter()
        .map(|s| {
            let h = hazard(s)?;
            let t = geometric_dropout_time(&mut rng, h, j);
            Ok(s.censored_at(t))
        })
        .collect::<Result<Vec<_>, DgpError>>()?;
    Ok(TrialDataset::new(subjects)?)
}

/// Dropout with the same hazard `delta` for every subject and timepoint.
pub fn apply_mcar_dropout<T: Scalar>(
    ds: &TrialDataset<T>,
    delta: f64,
    key: ReplicationKey,
) -> Result<TrialDataset<T>, DgpError> {
    if !(0.0..1.0).contains(&delta) {
        return Err(ConfigError {
            field: "delta",
            message: format!("{delta} is outside [0, 1)"),
        }
        .into());
    }
    apply_hazards(ds, key, |_| Ok(delta))
}

/// Per-subject hazard under the MAR mechanism: `δ + 0.1·X₁` if treated, `δ − 0.1·X₁` otherwise.
pub fn mar_hazard(delta: f64, x1: f64, treated: bool) -> f64 {
    if treated {
        delta + 0.1 * x1
    } else {
        delta - 0.1 * x1
    }
}

/// Dropout whose hazard depends on the first covariate and the arm.
pub fn apply_mar_dropout<T: Scalar>(
    ds: &TrialDataset<T>,
    delta: f64,
    key: ReplicationKey,
) -> Result<TrialDataset<T>, DgpError> {
    apply_hazards(ds, key, |s| {
        let h = mar_hazard(delta, s.covariates()[0].to_f64_lossy(), s.treatment());
        if h > 0.0 && h < 1.0 {
            Ok(h)
        } else {
            Err(DgpError::InvalidHazard {
                subject: s.id(),
                hazard: h,
            })
        }
    })
}

/// Applies the configured dropout mechanism.
pub fn apply_dropout<T: Scalar>(
    ds: &TrialDataset<T>,
    cfg: &ScenarioConfig,
    key: ReplicationKey,
) -> Result<TrialDataset<T>, DgpError> {
    match cfg.dropout_kind {
        DropoutKind::None => Ok(ds.clone()),
        DropoutKind::Mcar => apply_mcar_dropout(ds, cfg.delta, key),
        DropoutKind::Mar => apply_mar_dropout(ds, cfg.delta, key),
    }
}

/// Full trial followed by the configured dropout.
pub fn simulate_trial<T: Scalar>(
    cfg: &ScenarioConfig,
    key: ReplicationKey,
) -> Result<TrialDataset<T>, DgpError> {
    let full = simulate_full_trial(cfg, key)?;
    apply_dropout(&full, cfg, key)
}
