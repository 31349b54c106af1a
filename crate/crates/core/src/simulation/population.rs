//! Population model calibration for the numerical study.
//!
//! The study population has mean `M theta` with `M` the dictionary's
//! per-category means, and covariance
//!
//! ```text
//! Sigma = (nu* / (n - K)) S + gamma* I
//! ```
//!
//! with `(nu*, gamma*)` chosen so `Sigma` equals the optimal linear
//! shrinkage covariance estimator computed from the `n - K` residual
//! columns of `E` (sample second moment `S_n = S / (n - K)`):
//!
//! ```text
//! m    = tr(S_n) / p
//! d²   = ||S_n - m I||_F² / p
//! b̄²  = (1 / (n-K)²) * sum_j ||e_j e_jᵀ - S_n||_F² / p
//! b²   = min(b̄², d²)
//! nu*     = (d² - b²) / d²
//! gamma*  = (b² / d²) m
//! ```
//!
//! All Frobenius quantities are computed through the `(n-K) x (n-K)` Gram
//! matrix `EᵀE`, so the `p x p` sample matrix is never materialized.

use nalgebra::{DMatrix, DVector};

use crate::covariance::CovarianceOp;
use crate::error::{Error, Result};
use crate::model::{ApportionmentBasis, Dictionary, SourceDesign};

/// The shrinkage calibration scalars.
#[derive(Debug, Clone, Copy)]
pub struct LedoitWolfScalars {
    /// Mean eigenvalue of the sample second moment, `tr(S_n)/p`.
    pub m: f64,
    /// Squared distance of `S_n` from `m I`, per feature.
    pub d2: f64,
    /// Raw estimation-error magnitude of `S_n`.
    pub b_bar2: f64,
    /// `min(b̄², d²)`.
    pub b2: f64,
    /// Weight retained on the sample matrix.
    pub nu_star: f64,
    /// Isotropic intensity.
    pub gamma_star: f64,
}

/// Evaluate the calibration scalars on a residual matrix `E` with at least
/// one column. Fails when `d² = 0`, i.e. when the residuals carry no
/// anisotropic structure at all.
pub fn ledoit_wolf_scalars(residuals: &DMatrix<f64>) -> Result<LedoitWolfScalars> {
    let p = residuals.nrows() as f64;
    let q = residuals.ncols();
    if q == 0 {
        return Err(Error::invalid("residual matrix has no columns"));
    }
    let qf = q as f64;
    let gram = residuals.tr_mul(residuals);
    let trace_sn = gram.trace() / qf;
    let m = trace_sn / p;
    let trace_sn2 = gram.norm_squared() / (qf * qf);
    let d2 = (trace_sn2 - 2.0 * m * trace_sn + m * m * p) / p;
    if !(d2 > 0.0) {
        return Err(Error::DegenerateCalibration(format!(
            "d² = {d2:.3e}: the residual second moment is isotropic and nu* would be 0; \
             supply a nu floor to force a low-rank component"
        )));
    }
    let mut b_bar2 = 0.0;
    for j in 0..q {
        let norm4 = gram[(j, j)] * gram[(j, j)];
        let quad = gram.column(j).norm_squared() / qf;
        b_bar2 += norm4 - 2.0 * quad + trace_sn2;
    }
    b_bar2 /= qf * qf * p;
    let b2 = b_bar2.min(d2);
    let nu_star = (d2 - b2) / d2;
    let gamma_star = (b2 / d2) * m;
    Ok(LedoitWolfScalars {
        m,
        d2,
        b_bar2,
        b2,
        nu_star,
        gamma_star,
    })
}

/// Population model for the simulation study: mean matrix plus a
/// low-rank-plus-isotropic covariance, with an optional reference `theta`.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    mean: DMatrix<f64>,
    feature_ids: Vec<String>,
    cov: CovarianceOp,
    nu_star: f64,
    gamma_star: f64,
    theta: Option<DVector<f64>>,
}

impl SyntheticModel {
    /// Population mean matrix, `p x K`.
    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    /// Feature ids of sampled profiles.
    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    /// Population covariance operator.
    pub fn covariance(&self) -> &CovarianceOp {
        &self.cov
    }

    /// Shrinkage weight on the sample matrix.
    pub fn nu_star(&self) -> f64 {
        self.nu_star
    }

    /// Isotropic intensity.
    pub fn gamma_star(&self) -> f64 {
        self.gamma_star
    }

    /// Number of features.
    pub fn p(&self) -> usize {
        self.mean.nrows()
    }

    /// Number of categories.
    pub fn n_categories(&self) -> usize {
        self.mean.ncols()
    }

    /// Whether the covariance is identically zero (test-only degenerate
    /// models; real calibrations always carry a positive isotropic floor).
    pub fn is_noise_free(&self) -> bool {
        self.cov.is_zero()
    }

    /// Optional reference proportions attached to the model.
    pub fn theta(&self) -> Option<&DVector<f64>> {
        self.theta.as_ref()
    }

    /// Attach reference proportions.
    pub fn with_theta(mut self, theta: DVector<f64>) -> Self {
        self.theta = Some(theta);
        self
    }

    /// A degenerate noise-free model (`nu* = gamma* = 0`): samples are
    /// exactly `M theta`. Only meaningful for exactness tests.
    pub fn noise_free(mean: DMatrix<f64>, feature_ids: Vec<String>) -> Result<Self> {
        if mean.nrows() != feature_ids.len() {
            return Err(Error::invalid("mean rows must match feature id count"));
        }
        let p = mean.nrows();
        Ok(SyntheticModel {
            mean,
            feature_ids,
            cov: CovarianceOp::zero(p),
            nu_star: 0.0,
            gamma_star: 0.0,
            theta: None,
        })
    }
}

/// Calibrate the population model from a dictionary, reusing a prepared
/// basis.
///
/// Needs `n - K >= 2` residual columns. If the calibration puts zero weight
/// on the sample matrix (`b² = d²`), the fit fails unless `nu_floor`
/// provides a positive replacement weight.
pub fn fit_population_from_basis(
    dict: &Dictionary,
    design: &SourceDesign,
    basis: &ApportionmentBasis,
    nu_floor: Option<f64>,
) -> Result<SyntheticModel> {
    let n = dict.n();
    let k = design.n_categories();
    if n < k + 2 {
        return Err(Error::invalid(format!(
            "population calibration needs n - K >= 2 residual columns, got n = {n}, K = {k}"
        )));
    }
    let scalars = ledoit_wolf_scalars(basis.residuals())?;
    let nu_star = if scalars.nu_star > 0.0 {
        scalars.nu_star
    } else if let Some(floor) = nu_floor {
        if !(floor > 0.0) {
            return Err(Error::invalid("nu floor must be positive"));
        }
        floor
    } else {
        return Err(Error::DegenerateCalibration(format!(
            "nu* = {:.3e}: the shrinkage puts no weight on the residual structure; \
             set a nu floor to force one",
            scalars.nu_star
        )));
    };
    if !(scalars.gamma_star > 0.0) {
        return Err(Error::DegenerateCalibration(format!(
            "gamma* = {:.3e}: the calibrated covariance has no isotropic floor and is singular",
            scalars.gamma_star
        )));
    }
    let scale = nu_star / (n - k) as f64;
    let cov = CovarianceOp::low_rank_iso(basis.residuals().clone(), scale, scalars.gamma_star)?;
    Ok(SyntheticModel {
        mean: basis.group_means().clone(),
        feature_ids: dict.feature_ids().to_vec(),
        cov,
        nu_star,
        gamma_star: scalars.gamma_star,
        theta: None,
    })
}

/// Calibrate the population model from a dictionary.
pub fn fit_population(
    dict: &Dictionary,
    design: &SourceDesign,
    nu_floor: Option<f64>,
) -> Result<SyntheticModel> {
    let basis = crate::model::decompose(dict, design)?;
    fit_population_from_basis(dict, design, &basis, nu_floor)
}
