//! Prediction of unobserved profile entries.
//!
//! A [`PartitionedProblem`] splits the dictionary rows into the observed and
//! unobserved index sets of a partially observed profile. The predictors
//! mirror the estimators:
//!
//! * [`predict_rts`]: fit `y0` on the observed dictionary rows and extend,
//!   `X' (X0ᵀX0)⁻¹ X0ᵀ y0` (the `gamma -> 0` limit of the feasible BLUP);
//! * [`predict_atr`]: same with the per-category means (`gamma -> infinity`
//!   limit);
//! * [`predict_fgls`]: the finite-`gamma` feasible BLUP, regression part
//!   plus a residual-covariance correction through the observed-row slice of
//!   `S + gamma I`;
//! * [`predict_oracle_blup`]: the BLUP under a known mean and partitioned
//!   covariance.
//!
//! The observed-row quantities reuse the full-dictionary null basis `N`:
//! the design indexes profiles, not features, so `N` does not depend on the
//! partition.

use nalgebra::{DMatrix, DVector};

use crate::covariance::CovarianceOp;
use crate::error::{Error, Result};
use crate::estimators::{FglsSolver, GlsSolver};
use crate::linalg::{check_full_column_rank, QrLs, ThinSvdLeft};
use crate::model::{ApportionmentBasis, Dictionary, Profile, SourceDesign};

/// A profile prediction problem split into observed and unobserved rows.
#[derive(Debug, Clone)]
pub struct PartitionedProblem {
    observed_idx: Vec<usize>,
    unobserved_idx: Vec<usize>,
    x_obs: DMatrix<f64>,
    x_unobs: DMatrix<f64>,
    m_obs: DMatrix<f64>,
    m_unobs: DMatrix<f64>,
    e_obs: DMatrix<f64>,
    e_unobs: DMatrix<f64>,
    y_obs: DVector<f64>,
    qr_x_obs: QrLs,
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), m.ncols());
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).copy_from(&m.row(src));
    }
    out
}

impl PartitionedProblem {
    /// Build the partition from a partially observed profile.
    ///
    /// Fails if no entry is unobserved, or if the observed dictionary rows
    /// do not have full column rank (insufficient observed coverage: every
    /// predictor conditions on a full-rank `X0`).
    pub fn new(
        dict: &Dictionary,
        basis: &ApportionmentBasis,
        y: &Profile,
    ) -> Result<Self> {
        y.check_alignment(dict)?;
        let observed_idx = y.observed_indices();
        let unobserved_idx = y.unobserved_indices();
        if unobserved_idx.is_empty() {
            return Err(Error::invalid(
                "profile is fully observed; there is nothing to predict",
            ));
        }
        if observed_idx.is_empty() {
            return Err(Error::invalid("profile has no observed entries"));
        }
        let x_obs = select_rows(dict.values(), &observed_idx);
        check_full_column_rank(&x_obs, "observed dictionary rows (insufficient observed coverage)")?;
        let x_unobs = select_rows(dict.values(), &unobserved_idx);
        let m_obs = select_rows(basis.group_means(), &observed_idx);
        let m_unobs = select_rows(basis.group_means(), &unobserved_idx);
        let e_obs = select_rows(basis.residuals(), &observed_idx);
        let e_unobs = select_rows(basis.residuals(), &unobserved_idx);
        let y_obs = DVector::from_iterator(
            observed_idx.len(),
            observed_idx.iter().map(|&i| y.values()[i]),
        );
        let qr_x_obs = QrLs::new(&x_obs);
        Ok(PartitionedProblem {
            observed_idx,
            unobserved_idx,
            x_obs,
            x_unobs,
            m_obs,
            m_unobs,
            e_obs,
            e_unobs,
            y_obs,
            qr_x_obs,
        })
    }

    /// Indices of observed entries, ascending.
    pub fn observed_indices(&self) -> &[usize] {
        &self.observed_idx
    }

    /// Indices of unobserved entries, ascending.
    pub fn unobserved_indices(&self) -> &[usize] {
        &self.unobserved_idx
    }

    /// Number of unobserved entries.
    pub fn unobserved_len(&self) -> usize {
        self.unobserved_idx.len()
    }

    /// Observed sub-vector of the profile.
    pub fn y_observed(&self) -> &DVector<f64> {
        &self.y_obs
    }

    /// Observed rows of the dictionary.
    pub fn x_observed(&self) -> &DMatrix<f64> {
        &self.x_obs
    }

    /// Observed rows of the group means.
    pub fn m_observed(&self) -> &DMatrix<f64> {
        &self.m_obs
    }

    /// Unobserved rows of the group means.
    pub fn m_unobserved(&self) -> &DMatrix<f64> {
        &self.m_unobs
    }

    /// Observed rows of the residual matrix `E`.
    pub fn e_observed(&self) -> &DMatrix<f64> {
        &self.e_obs
    }
}

/// RTS predictor: extend the least-squares fit of `y0` on the observed
/// dictionary rows to the unobserved rows.
pub fn predict_rts(prob: &PartitionedProblem) -> Result<DVector<f64>> {
    let beta = prob.qr_x_obs.solve(&prob.y_obs)?;
    Ok(&prob.x_unobs * beta)
}

/// ATR predictor: extend the least-squares fit of `y0` on the observed rows
/// of the per-category means.
pub fn predict_atr(prob: &PartitionedProblem) -> Result<DVector<f64>> {
    check_full_column_rank(&prob.m_obs, "observed rows of the group means")?;
    let coef = QrLs::new(&prob.m_obs).solve(&prob.y_obs)?;
    Ok(&prob.m_unobs * coef)
}

/// Finite-`gamma` feasible BLUP:
/// `y' = M' theta + Delta-hatᵀ Sigma0⁻¹ (y0 - M0 theta)` with
/// `Sigma0 = E0 E0ᵀ + gamma I`, `Delta-hat = E0 E'ᵀ`, and `theta` the
/// feasible GLS estimate on the observed rows. Converges to
/// [`predict_rts`] as `gamma -> 0` and to [`predict_atr`] as
/// `gamma -> infinity`.
pub fn predict_fgls(prob: &PartitionedProblem, gamma: f64) -> Result<DVector<f64>> {
    check_full_column_rank(&prob.m_obs, "observed rows of the group means")?;
    let svd_e_obs = ThinSvdLeft::new(&prob.e_obs);
    let solver = FglsSolver::new(&prob.m_obs, &svd_e_obs, gamma)?;
    let theta = solver.theta(&prob.y_obs);
    let resid = &prob.y_obs - &prob.m_obs * &theta;
    // E'E0ᵀ(E0E0ᵀ + gamma I)⁻¹ r = E'(E0ᵀE0 + gamma I)⁻¹ E0ᵀ r by the
    // push-through identity; the small system has eigenvalues d² + gamma
    // and stays well behaved as gamma -> 0, unlike dividing by gamma.
    let correction = if prob.e_obs.ncols() == 0 {
        DVector::zeros(prob.unobserved_idx.len())
    } else {
        let r = prob.e_obs.ncols();
        let small = prob.e_obs.tr_mul(&prob.e_obs) + DMatrix::identity(r, r) * gamma;
        let chol = nalgebra::Cholesky::new(small).ok_or_else(|| Error::RankDeficient {
            what: "shrunk residual Gram matrix".to_string(),
            sigma_min: 0.0,
            tol: 0.0,
        })?;
        &prob.e_unobs * chol.solve(&prob.e_obs.tr_mul(&resid))
    };
    Ok(&prob.m_unobs * theta + correction)
}

/// BLUP under a known mean and partitioned covariance:
/// `y' = M' theta + Deltaᵀ Sigma0⁻¹ (y0 - M0 theta)` with `theta` the GLS
/// estimate on the observed rows. `delta` is the `(p-q) x q` upper-right
/// covariance block between observed and unobserved entries.
pub fn predict_oracle_blup(
    m_obs: &DMatrix<f64>,
    m_unobs: &DMatrix<f64>,
    sigma_obs: &CovarianceOp,
    delta: &DMatrix<f64>,
    y_obs: &DVector<f64>,
) -> Result<DVector<f64>> {
    if m_obs.ncols() != m_unobs.ncols() {
        return Err(Error::invalid("mean blocks disagree on category count"));
    }
    if sigma_obs.dim() != m_obs.nrows()
        || delta.nrows() != m_obs.nrows()
        || delta.ncols() != m_unobs.nrows()
        || y_obs.len() != m_obs.nrows()
    {
        return Err(Error::invalid("partitioned BLUP blocks have inconsistent shapes"));
    }
    check_full_column_rank(m_obs, "observed rows of the mean matrix")?;
    let solver = GlsSolver::new(m_obs, sigma_obs)?;
    let theta = solver.theta(y_obs);
    let resid = y_obs - m_obs * &theta;
    let weighted = sigma_obs.solve_vec(&resid)?;
    Ok(m_unobs * theta + delta.tr_mul(&weighted))
}

/// Observed-row RTS coefficient estimate `Aᵀ (X0ᵀX0)⁻¹ X0ᵀ y0`.
pub fn observed_theta_rts(
    prob: &PartitionedProblem,
    design: &SourceDesign,
) -> Result<DVector<f64>> {
    if design.n_profiles() != prob.x_obs.ncols() {
        return Err(Error::invalid("design does not match the partitioned dictionary"));
    }
    let beta = prob.qr_x_obs.solve(&prob.y_obs)?;
    Ok(design.weights().tr_mul(&beta))
}

/// Observed-row ATR coefficient estimate.
pub fn observed_theta_atr(prob: &PartitionedProblem) -> Result<DVector<f64>> {
    check_full_column_rank(&prob.m_obs, "observed rows of the group means")?;
    QrLs::new(&prob.m_obs).solve(&prob.y_obs)
}

/// Observed-row feasible GLS coefficient estimate at a finite `gamma`.
pub fn observed_theta_fgls(prob: &PartitionedProblem, gamma: f64) -> Result<DVector<f64>> {
    check_full_column_rank(&prob.m_obs, "observed rows of the group means")?;
    let svd_e_obs = ThinSvdLeft::new(&prob.e_obs);
    let solver = FglsSolver::new(&prob.m_obs, &svd_e_obs, gamma)?;
    Ok(solver.theta(&prob.y_obs))
}
