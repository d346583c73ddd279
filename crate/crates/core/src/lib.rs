//! Treatment-effect estimation for longitudinal randomized trials.
//!
//! Three estimators of the final-timepoint effect `τ_J` share one maximum
//! likelihood engine: complete-case ANCOVA, MMRM with covariate effects
//! shared across time, and MMRM with timepoint-specific covariate effects.
//! The [`dgp`] and [`harness`] modules simulate trials with monotone dropout
//! and measure power and type-I error over scenario grids.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the simulation harness uses.

pub mod dgp;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod trial_data;

pub use dgp::{DropoutKind, ScenarioConfig};
pub use estimators::{fit, FitError, ModelSpec, SeKind};
pub use rng::ReplicationKey;
pub use scalar::Scalar;
pub use trial_data::{Subject, TrialDataset, Variant};

pub type Dataset = trial_data::TrialDataset<f64>;
pub type Fit = estimators::FitResult<f64>;
pub type Mat = linalg::Matrix<f64>;
pub type Dataset32 = trial_data::TrialDataset<f32>;
pub type Fit32 = estimators::FitResult<f32>;
