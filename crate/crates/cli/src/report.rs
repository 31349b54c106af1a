//! The JSON report written by `estimate`, `predict`, and `threshold`.
//!
//! Field order is fixed by the struct definitions, so identical inputs
//! produce byte-identical JSON apart from the optional timestamp (suppress
//! it with `--no-timestamp`). Every emitted number is finite; an infinite
//! crossover threshold is encoded as `null` plus an explicit flag.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Squared standard errors attached to an RTS estimate.
#[derive(Debug, Serialize)]
pub struct StandardErrorsBlock {
    /// Full K x K squared-standard-error matrix.
    pub matrix: Vec<Vec<f64>>,
    /// Square roots of its diagonal (per-category standard errors).
    pub diagonal_sqrt: Vec<f64>,
}

/// Prediction summary for `predict`.
#[derive(Debug, Serialize)]
pub struct PredictionBlock {
    /// Number of predicted entries.
    pub unobserved_count: usize,
    /// Where the completed profile was written.
    pub completed_profile: String,
}

/// Rank checks, crossover diagnostics, and fit residuals.
#[derive(Debug, Serialize)]
pub struct Diagnostics {
    /// Feature count after the shared-support mask.
    pub p: usize,
    /// Profile count.
    pub n: usize,
    /// Category count.
    pub k: usize,
    /// Verified column rank of the dictionary.
    pub rank_dictionary: usize,
    /// Verified column rank of the design.
    pub rank_design: usize,
    /// Features dropped by the shared-support mask.
    pub dropped_features: usize,
    /// Crossover value of gamma (None when infinite).
    pub gamma_threshold: Option<f64>,
    /// Whether the crossover value is infinite.
    pub gamma_threshold_infinite: bool,
    /// Norm of the fit residual for the reported estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_norm: Option<f64>,
    /// Free-form notes (degenerate-threshold diagnostics and the like).
    pub notes: Vec<String>,
}

/// Input digests and versions.
#[derive(Debug, Serialize)]
pub struct Provenance {
    /// sha256 digests of the input files, keyed by role.
    pub inputs: BTreeMap<String, String>,
    /// Master seed for seeded commands.
    pub seed: Option<u64>,
    /// Random generator, when one is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    /// Library version.
    pub library_version: String,
    /// RFC 3339 timestamp, omitted under `--no-timestamp`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

/// The report written by `estimate`, `predict`, and `threshold`.
#[derive(Debug, Serialize)]
pub struct Report {
    /// Which subcommand produced the report.
    pub command: String,
    /// Estimator name, when one applies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    /// Regularization level for the gls method.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Source category names, in design order.
    pub categories: Vec<String>,
    /// Estimated proportions, aligned with `categories`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    /// Squared standard errors (RTS with `--se`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standard_errors: Option<StandardErrorsBlock>,
    /// Prediction summary (`predict` only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<PredictionBlock>,
    /// Rank checks and crossover diagnostics.
    pub diagnostics: Diagnostics,
    /// Input digests and versions.
    pub provenance: Provenance,
}

impl Report {
    /// Serialize; fails if any emitted number is non-finite.
    pub fn to_json(&self) -> Result<String> {
        self.check_finite()?;
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::validation(format!("report serialization failed: {e}")))?;
        text.push('\n');
        Ok(text)
    }

    fn check_finite(&self) -> Result<()> {
        let mut values: Vec<f64> = Vec::new();
        if let Some(g) = self.gamma {
            values.push(g);
        }
        if let Some(t) = &self.theta {
            values.extend_from_slice(t);
        }
        if let Some(se) = &self.standard_errors {
            values.extend(se.matrix.iter().flatten().copied());
            values.extend_from_slice(&se.diagonal_sqrt);
        }
        if let Some(t) = self.diagnostics.gamma_threshold {
            values.push(t);
        }
        if let Some(r) = self.diagnostics.residual_norm {
            values.push(r);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Numerical(
                "refusing to emit a non-finite number in the report".into(),
            ));
        }
        Ok(())
    }
}

/// `sha256:<hex>` digest of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("sha256:{}", hex::encode(hasher.finalize())))
}

/// Current time in RFC 3339, unless suppressed.
pub fn timestamp(no_timestamp: bool) -> Option<String> {
    if no_timestamp {
        None
    } else {
        Some(chrono::Utc::now().to_rfc3339())
    }
}
