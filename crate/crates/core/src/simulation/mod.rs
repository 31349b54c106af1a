//! Monte Carlo reproduction of the numerical study at desk scale:
//! population calibration, sampling, dictionary subsampling, a synthetic
//! dictionary generator, and the deterministic experiment harness.

pub mod experiment;
pub mod generator;
pub mod population;
pub mod sampling;

pub use experiment::{
    run_experiment, EstimationCell, ExperimentConfig, ExperimentMode, ExperimentOutcome,
    ExperimentReport, MethodStats, PredictionCell, ReportRow, StderrCell,
};
pub use generator::{synthetic_dictionary, WavelengthGrid};
pub use population::{
    fit_population, fit_population_from_basis, ledoit_wolf_scalars, LedoitWolfScalars,
    SyntheticModel,
};
pub use sampling::{sample_profile, sample_theta, subsample_dictionary};
