//! Seeded Monte Carlo runs over scenario grids.
//!
//! Every replication is keyed by `(cfg.seed, rep)`, so results do not depend
//! on how replications are scheduled across workers. Failed or non-converged
//! fits are left out of the rejection rate and counted in `n_fail`.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dgp::{self, DgpError, DropoutKind, ScenarioConfig};
use crate::estimators::{self, FitError, ModelSpec, SeKind};
use crate::linalg::Matrix;
use crate::rng::{derive_seed, ReplicationKey};
use crate::scalar::Scalar;
use crate::trial_data::{ParamLayout, TrialDataset, Variant};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dgp(#[from] DgpError),
    #[error("{variant:?} fit failed: {source}")]
    Fit { variant: Variant, source: FitError },
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// How the harness fits and schedules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessOptions {
    pub se_kind: SeKind,
    pub workers: usize,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self {
            se_kind: SeKind::ModelBased,
            workers: 1,
        }
    }
}

/// One estimator's result within a replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutcome {
    pub estimator: Variant,
    pub tau_hat: f64,
    pub se: f64,
    pub p_value: f64,
    pub reject: bool,
    pub converged: bool,
    pub n_used: usize,
    /// Set when the fit raised an error; the numeric fields are then NaN.
    pub error: Option<String>,
}

impl EstimatorOutcome {
    fn failed(estimator: Variant, error: String) -> Self {
        Self {
            estimator,
            tau_hat: f64::NAN,
            se: f64::NAN,
            p_value: f64::NAN,
            reject: false,
            converged: false,
            n_used: 0,
            error: Some(error),
        }
    }

    /// Counts toward the rejection rate.
    pub fn usable(&self) -> bool {
        self.error.is_none() && self.converged
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub scenario_id: usize,
    pub rep: u64,
    /// Ordered as [`Variant::ALL`].
    pub outcomes: [EstimatorOutcome; 3],
}

impl ReplicationRecord {
    pub fn outcome(&self, v: Variant) -> &EstimatorOutcome {
        &self.outcomes[Variant::ALL.iter().position(|&x| x == v).expect("known variant")]
    }
}

/// Simulates replication `rep` of `cfg` and fits all three estimators to it.
pub fn run_replication(
    cfg: &ScenarioConfig,
    scenario_id: usize,
    rep: u64,
    opts: &HarnessOptions,
) -> ReplicationRecord {
    run_replication_with::<f64>(cfg, scenario_id, rep, opts)
}

/// [`run_replication`] at a chosen working precision.
pub fn run_replication_with<T: Scalar>(
    cfg: &ScenarioConfig,
    scenario_id: usize,
    rep: u64,
    opts: &HarnessOptions,
) -> ReplicationRecord {
    let key = ReplicationKey::new(cfg.seed, rep);
    let data = dgp::simulate_trial::<T>(cfg, key);
    let outcomes = Variant::ALL.map(|v| match &data {
        Err(e) => EstimatorOutcome::failed(v, e.to_string()),
        Ok(ds) => {
            let spec = ModelSpec::new(v).with_se(opts.se_kind);
            match estimators::fit(ds, &spec) {
                Ok(r) => EstimatorOutcome {
                    estimator: v,
                    tau_hat: r.tau_j.to_f64_lossy(),
                    se: r.se_tau_j.to_f64_lossy(),
                    p_value: r.p_value,
                    reject: r.p_value < cfg.alpha_level,
                    converged: r.converged,
                    n_used: r.n_used,
                    error: None,
                },
                Err(e) => EstimatorOutcome::failed(v, e.to_string()),
            }
        }
    });
    ReplicationRecord {
        scenario_id,
        rep,
        outcomes,
    }
}

/// Aggregate over replications for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Variant,
    /// Replications with a usable fit; the rejection-rate denominator.
    pub n_ok: usize,
    pub n_reject: usize,
    pub rejection_rate: f64,
    /// `sqrt(r(1 − r)/n_ok)`.
    pub mc_se: f64,
    pub mean_tau: f64,
    pub sd_tau: f64,
    pub mean_se: f64,
    /// Failed plus non-converged fits.
    pub n_fail: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    /// Ordered as [`Variant::ALL`].
    pub summaries: [EstimatorSummary; 3],
}

impl ScenarioResult {
    pub fn summary(&self, v: Variant) -> &EstimatorSummary {
        &self.summaries[Variant::ALL.iter().position(|&x| x == v).expect("known variant")]
    }
}

fn summarize_estimator(v: Variant, records: &[ReplicationRecord]) -> EstimatorSummary {
    let outs: Vec<&EstimatorOutcome> = records.iter().map(|r| r.outcome(v)).collect();
    let ok: Vec<&&EstimatorOutcome> = outs.iter().filter(|o| o.usable()).collect();
    let n_ok = ok.len();
    let n_reject = ok.iter().filter(|o| o.reject).count();
    let nf = n_ok as f64;
    let rate = n_reject as f64 / nf;
    let mean_tau = ok.iter().map(|o| o.tau_hat).sum::<f64>() / nf;
    let sd_tau = if n_ok > 1 {
        (ok.iter().map(|o| (o.tau_hat - mean_tau).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    EstimatorSummary {
        estimator: v,
        n_ok,
        n_reject,
        rejection_rate: rate,
        mc_se: (rate * (1.0 - rate) / nf).sqrt(),
        mean_tau,
        sd_tau,
        mean_se: ok.iter().map(|o| o.se).sum::<f64>() / nf,
        n_fail: outs.len() - n_ok,
    }
}

/// Folds replication records into per-estimator summaries.
pub fn summarize(cfg: &ScenarioConfig, records: &[ReplicationRecord]) -> ScenarioResult {
    ScenarioResult {
        config: cfg.clone(),
        summaries: Variant::ALL.map(|v| summarize_estimator(v, records)),
    }
}

fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs every replication of every scenario and returns the summaries together
/// with the raw records, both in input order.
pub fn run_grid_with_records(
    grid: &[ScenarioConfig],
    opts: &HarnessOptions,
) -> Result<(Vec<ScenarioResult>, Vec<ReplicationRecord>), HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::Precondition("empty scenario grid".into()));
    }
    for cfg in grid {
        cfg.validate().map_err(DgpError::from)?;
    }
    let tasks: Vec<(usize, u64)> = grid
        .iter()
        .enumerate()
        .flat_map(|(i, cfg)| (0..cfg.n_reps as u64).map(move |r| (i, r)))
        .collect();
    let records: Vec<ReplicationRecord> = with_pool(opts.workers, || {
        tasks
            .par_iter()
            .map(|&(i, rep)| run_replication(&grid[i], i, rep, opts))
            .collect()
    })?;
    let mut results = Vec::with_capacity(grid.len());
    let mut start = 0;
    for cfg in grid {
        let end = start + cfg.n_reps;
        results.push(summarize(cfg, &records[start..end]));
        start = end;
    }
    Ok((results, records))
}

pub fn run_grid(
    grid: &[ScenarioConfig],
    opts: &HarnessOptions,
) -> Result<Vec<ScenarioResult>, HarnessError> {
    Ok(run_grid_with_records(grid, opts)?.0)
}

pub fn run_scenario(
    cfg: &ScenarioConfig,
    opts: &HarnessOptions,
) -> Result<ScenarioResult, HarnessError> {
    Ok(run_grid(std::slice::from_ref(cfg), opts)?.remove(0))
}

/// Dropout rates of the power grid.
pub const POWER_DELTAS: [f64; 4] = [0.0, 0.1, 0.2, 0.3];
/// Marginal dropout rates of the type-I grid. The MAR hazard `δ ± 0.1 X₁`
/// needs `δ > 0.1`.
pub const TYPE1_DELTAS: [f64; 4] = [0.15, 0.2, 0.25, 0.3];
pub const GRID_RHOS: [f64; 4] = [0.0, 0.3, 0.6, 0.9];
pub const GRID_BS: [f64; 3] = [0.8, 1.0, 1.2];

/// Gives scenario `i` the seed `derive_seed(base, i)`.
pub fn with_derived_seeds(grid: &mut [ScenarioConfig], base: u64) {
    for (i, cfg) in grid.iter_mut().enumerate() {
        cfg.seed = derive_seed(base, i as u64);
    }
}

fn default_grid(deltas: &[f64], template: ScenarioConfig, base_seed: u64) -> Vec<ScenarioConfig> {
    let mut grid = Vec::new();
    for &b in &GRID_BS {
        for &rho in &GRID_RHOS {
            for &delta in deltas {
                grid.push(ScenarioConfig {
                    b,
                    rho,
                    delta,
                    ..template.clone()
                });
            }
        }
    }
    with_derived_seeds(&mut grid, base_seed);
    grid
}

/// MCAR dropout with `τ_j = 1/3`, over b × ρ × δ.
pub fn power_grid(base_seed: u64, n_reps: usize) -> Vec<ScenarioConfig> {
    let template = ScenarioConfig {
        dropout_kind: DropoutKind::Mcar,
        n_reps,
        ..ScenarioConfig::default()
    };
    default_grid(&POWER_DELTAS, template, base_seed)
}

/// MAR dropout under the null `τ_j = 0`, over b × ρ × δ.
pub fn type1_grid(base_seed: u64, n_reps: usize) -> Vec<ScenarioConfig> {
    let template = ScenarioConfig {
        dropout_kind: DropoutKind::Mar,
        tau: vec![0.0; ScenarioConfig::default().j],
        n_reps,
        ..ScenarioConfig::default()
    };
    default_grid(&TYPE1_DELTAS, template, base_seed)
}

/// One row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub delta: f64,
    pub rho: f64,
    pub b: f64,
    pub n: usize,
    pub n_reps: usize,
    pub estimator: String,
    pub rejection_rate: f64,
    pub mc_se: f64,
    pub mean_tau: f64,
    pub sd_tau: f64,
    pub mean_se: f64,
    pub n_fail: usize,
}

pub fn result_rows(results: &[ScenarioResult]) -> Vec<ResultRow> {
    results
        .iter()
        .flat_map(|r| {
            r.summaries.iter().map(move |s| ResultRow {
                delta: r.config.delta,
                rho: r.config.rho,
                b: r.config.b,
                n: r.config.n,
                n_reps: r.config.n_reps,
                estimator: s.estimator.name().to_string(),
                rejection_rate: s.rejection_rate,
                mc_se: s.mc_se,
                mean_tau: s.mean_tau,
                sd_tau: s.sd_tau,
                mean_se: s.mean_se,
                n_fail: s.n_fail,
            })
        })
        .collect()
}

/// Writes `delta,rho,b,n,n_reps,estimator,rejection_rate,mc_se,mean_tau,sd_tau,mean_se,n_fail`.
pub fn write_results_csv<W: Write>(writer: W, rows: &[ResultRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<ResultRow>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Serialize)]
struct RecordRow<'a> {
    scenario_id: usize,
    rep: u64,
    estimator: &'a str,
    tau_hat: f64,
    se: f64,
    p_value: f64,
    reject: bool,
    converged: bool,
    n_used: usize,
    error: &'a str,
}

/// Replication-level audit CSV, one row per (scenario, replication, estimator).
pub fn write_records_csv<W: Write>(
    writer: W,
    records: &[ReplicationRecord],
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        for o in &r.outcomes {
            w.serialize(RecordRow {
                scenario_id: r.scenario_id,
                rep: r.rep,
                estimator: o.estimator.name(),
                tau_hat: o.tau_hat,
                se: o.se,
                p_value: o.p_value,
                reject: o.reject,
                converged: o.converged,
                n_used: o.n_used,
                error: o.error.as_deref().unwrap_or(""),
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Large-sample comparison of fitted quantities with their sample-moment limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub n: usize,
    /// (a) max |β̂_j(MMRM⊗) − V[X]⁻¹C[X,Y_j]| over j and covariates.
    pub beta_interact_discrepancy: f64,
    /// (b) max |β̂(MMRM) − V[X]⁻¹C[X,Y]Σ̂⁻¹1/(1ᵀΣ̂⁻¹1)|.
    pub beta_mmrm_discrepancy: f64,
    /// (c) max over MMRM and MMRM⊗ of |se(τ̂_J)/sqrt(Σ̂_JJ/(nπ̂₀π̂₁)) − 1|.
    pub se_relative_discrepancy: f64,
    /// max |β̂(MMRM) − V[X]⁻¹C[X,Y_J]|: the shared coefficient's gap to the final-time slope.
    pub mmrm_final_slope_gap: f64,
    /// max |β̂(MMRM) − β̂_J(MMRM⊗)|.
    pub mmrm_vs_interact_final: f64,
    pub beta_mmrm: Vec<f64>,
    pub beta_interact: Vec<Vec<f64>>,
}

impl AsymptoticReport {
    pub const TOLERANCE: f64 = 0.02;

    pub fn passes(&self) -> bool {
        self.beta_interact_discrepancy < Self::TOLERANCE
            && self.beta_mmrm_discrepancy < Self::TOLERANCE
            && self.se_relative_discrepancy < Self::TOLERANCE
    }
}

/// Sample covariance `V[X]` (K×K) and cross-covariance `C[X,Y]` (K×J), divisor n.
fn sample_moments(ds: &TrialDataset<f64>) -> (Matrix<f64>, Matrix<f64>) {
    let n = ds.len() as f64;
    let k = ds.n_covariates();
    let j = ds.n_times();
    let xbar = ds.covariate_means();
    let ybar: Vec<f64> = (0..j)
        .map(|t| {
            ds.subjects()
                .iter()
                .map(|s| s.outcomes()[t].expect("complete data"))
                .sum::<f64>()
                / n
        })
        .collect();
    let mut v = Matrix::zeros(k, k);
    let mut c = Matrix::zeros(k, j);
    for s in ds.subjects() {
        let dx: Vec<f64> = s.covariates().iter().zip(&xbar).map(|(a, m)| a - m).collect();
        for a in 0..k {
            for b in 0..k {
                v[(a, b)] += dx[a] * dx[b] / n;
            }
            for t in 0..j {
                c[(a, t)] += dx[a] * (s.outcomes()[t].expect("complete data") - ybar[t]) / n;
            }
        }
    }
    (v, c)
}

/// Fits MMRM and MMRM⊗ to one large dropout-free trial and compares
/// their coefficients and standard errors with sample-moment limits.
pub fn asymptotic_check(
    cfg: &ScenarioConfig,
    n_large: usize,
) -> Result<AsymptoticReport, HarnessError> {
    if n_large < 100_000 {
        return Err(HarnessError::Precondition(format!(
            "n_large = {n_large} is below 100000"
        )));
    }
    if cfg.dropout_kind != DropoutKind::None && cfg.delta != 0.0 {
        return Err(HarnessError::Precondition(
            "asymptotic check requires delta = 0".into(),
        ));
    }
    let big = ScenarioConfig {
        n: n_large,
        dropout_kind: DropoutKind::None,
        delta: 0.0,
        ..cfg.clone()
    };
    let ds: TrialDataset<f64> = dgp::simulate_full_trial(&big, ReplicationKey::new(cfg.seed, 0))?;
    let fit = |v: Variant| {
        estimators::fit(&ds, &ModelSpec::new(v))
            .map_err(|source| HarnessError::Fit { variant: v, source })
    };
    let mmrm = fit(Variant::Mmrm)?;
    let inter = fit(Variant::MmrmInteract)?;

    let k = ds.n_covariates();
    let j = ds.n_times();
    let (v, c) = sample_moments(&ds);
    let v_inv = v
        .spd_inverse()
        .map_err(|e| HarnessError::Precondition(format!("covariate covariance: {e}")))?;
    let slopes = v_inv.matmul(&c).expect("K x K times K x J");

    let inter_layout = ParamLayout::new(Variant::MmrmInteract, j, k);
    let beta_interact: Vec<Vec<f64>> = (0..j)
        .map(|t| (0..k).map(|a| inter.theta_hat[inter_layout.beta(t, a)]).collect())
        .collect();
    let beta_interact_discrepancy = (0..j)
        .flat_map(|t| (0..k).map(move |a| (t, a)))
        .map(|(t, a)| (beta_interact[t][a] - slopes[(a, t)]).abs())
        .fold(0.0, f64::max);

    let mmrm_layout = ParamLayout::new(Variant::Mmrm, j, k);
    let beta_mmrm: Vec<f64> = (0..k).map(|a| mmrm.theta_hat[mmrm_layout.beta(0, a)]).collect();
    let sigma_inv = mmrm
        .sigma_hat
        .spd_inverse()
        .map_err(|e| HarnessError::Precondition(format!("sigma: {e}")))?;
    let w = sigma_inv.matvec(&vec![1.0; j]).expect("J x J times J");
    let s: f64 = w.iter().sum();
    let weighted = slopes.matvec(&w).expect("K x J times J");
    let beta_mmrm_discrepancy = beta_mmrm
        .iter()
        .zip(&weighted)
        .map(|(b, o)| (b - o / s).abs())
        .fold(0.0, f64::max);
    let mmrm_final_slope_gap = (0..k)
        .map(|a| (beta_mmrm[a] - slopes[(a, j - 1)]).abs())
        .fold(0.0, f64::max);
    let mmrm_vs_interact_final = (0..k)
        .map(|a| (beta_mmrm[a] - beta_interact[j - 1][a]).abs())
        .fold(0.0, f64::max);

    let (p0, p1) = ds.arm_fractions();
    let n = ds.len() as f64;
    let se_relative_discrepancy = [&mmrm, &inter]
        .iter()
        .map(|f| {
            let reference = (f.sigma_hat[(j - 1, j - 1)] / (n * p0 * p1)).sqrt();
            (f.se_tau_j / reference - 1.0).abs()
        })
        .fold(0.0, f64::max);

    Ok(AsymptoticReport {
        n: n_large,
        beta_interact_discrepancy,
        beta_mmrm_discrepancy,
        se_relative_discrepancy,
        mmrm_final_slope_gap,
        mmrm_vs_interact_final,
        beta_mmrm,
        beta_interact,
    })
}
