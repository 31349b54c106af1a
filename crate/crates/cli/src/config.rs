//! Simulation config files.
//!
//! A config is a TOML key-value file:
//!
//! ```toml
//! mode = "estimation"        # estimation | prediction | stderr
//! p = 300                    # features (must factor into a wavelength grid)
//! n_per_category = 9         # dictionary profiles per source category
//! K = 5                      # source categories
//! alphas = [0.5, 1.0]        # dictionary retention fractions
//! theta_count = 50           # Dirichlet evaluation points
//! replicates = 200           # Monte Carlo replicates per cell
//! seed = 424242              # master seed
//! mask_excitation = [250.0]  # withheld excitations (prediction mode)
//! nu_floor = 1e-6            # optional calibration floor
//! threads = 8                # optional worker-thread count
//! ```

use std::path::Path;

use serde::Deserialize;

use apportion::simulation::{ExperimentConfig, ExperimentMode};

use crate::error::{CliError, Result};

/// Parsed simulation config file.
#[derive(Debug, Clone, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// estimation | prediction | stderr
    pub mode: String,
    /// Number of features of the synthetic dictionary.
    pub p: usize,
    /// Profiles per source category.
    pub n_per_category: usize,
    /// Number of source categories.
    #[serde(rename = "K")]
    pub k: usize,
    /// Dictionary retention fractions.
    pub alphas: Vec<f64>,
    /// Dirichlet evaluation points.
    pub theta_count: usize,
    /// Monte Carlo replicates per cell.
    pub replicates: usize,
    /// Master seed.
    pub seed: u64,
    /// Excitation wavelengths withheld in prediction mode.
    #[serde(default)]
    pub mask_excitation: Vec<f64>,
    /// Optional replacement for a vanishing shrinkage weight.
    #[serde(default)]
    pub nu_floor: Option<f64>,
    /// Optional worker-thread count (default: rayon's).
    #[serde(default)]
    pub threads: Option<usize>,
}

impl SimulateConfig {
    /// Read and parse a config file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::validation(format!("cannot read {}: {e}", path.display()))
        })?;
        let config: SimulateConfig = toml::from_str(&text).map_err(|e| {
            CliError::validation(format!("{}: {e}", path.display()))
        })?;
        if config.n_per_category * config.k >= config.p {
            return Err(CliError::validation(format!(
                "{}: n = K * n_per_category = {} must stay below p = {}",
                path.display(),
                config.n_per_category * config.k,
                config.p
            )));
        }
        Ok(config)
    }

    /// The experiment configuration this file describes.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            mode: ExperimentMode::parse(&self.mode)?,
            theta_count: self.theta_count,
            alphas: self.alphas.clone(),
            replicates: self.replicates,
            mask_excitations: self.mask_excitation.clone(),
            seed: self.seed,
            nu_floor: self.nu_floor,
            model_override: None,
        })
    }
}
