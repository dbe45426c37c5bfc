//! Diurnal fish-migration diffusion bridge: model coefficients, the
//! closed-form penalized control problem, moments, Monte Carlo simulation,
//! the partial-observation study and moment-matching calibration.

pub mod calibrate;
pub mod control;
pub mod error;
pub mod model;
pub mod moments;
pub mod observe;
pub mod quad;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    classify_regime, duality_residual, eval_reversion, feller_check, weight_from_reversion,
    ApplicationParams, BridgeModel, FellerReport, ModelConfig, RateTable, Regime, RegimeClass,
    Reversion, ReversionSpec, TimeFn, Weight, WeightSpec,
};

/// Version of the library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
