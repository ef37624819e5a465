//! Quantities of interest and the Monte Carlo / multilevel Monte Carlo
//! estimators, with sample allocation, bias control and work accounting.

mod driver;
mod qoi;
mod rates;
mod records;

pub use driver::{
    mc_estimate, mlmc_estimate, BiasModel, Ladder, LevelSpec, McOptions, McTarget, MlmcOptions,
    Sampler, StabilityControl,
};
pub use qoi::{evaluate_qoi, QoiSpec};
pub use rates::{fit_rates, least_squares_slope};
pub use records::{EstimatorReport, LevelRecord, RatesFit, SampleOutcome};
