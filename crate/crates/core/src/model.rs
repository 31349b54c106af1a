//! Data model of the source apportionment problem.
//!
//! A [`Dictionary`] holds the reference profiles as the columns of a
//! `p x n` matrix (`n < p`); a [`SourceDesign`] records, for each profile,
//! the proportions in which the `K` source categories contributed to it
//! (indicator rows in the common single-source case). [`decompose`] derives
//! the shared quantities every estimator consumes: per-category mean
//! profiles, an orthonormal null-space basis of the design, and the residual
//! matrix whose outer product is the residual sum-of-squares matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_full_column_rank, QrLs, ThinSvdLeft};

/// Row sums of a design matrix must match 1 this tightly.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// A dictionary of reference profiles: one column per profile, one row per
/// feature. For fluorescence EEM data a feature is an
/// (excitation nm, emission nm) pair and the value is an intensity.
#[derive(Debug, Clone)]
pub struct Dictionary {
    values: DMatrix<f64>,
    feature_ids: Vec<String>,
    profile_ids: Vec<String>,
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::invalid(format!("duplicate {what} id: {id:?}")));
        }
    }
    Ok(())
}

impl Dictionary {
    /// Validate and build a dictionary.
    ///
    /// Requires `n < p`, unique feature and profile ids matching the matrix
    /// dimensions, finite entries, and full column rank at the
    /// rank-revealing tolerance.
    pub fn new(
        values: DMatrix<f64>,
        feature_ids: Vec<String>,
        profile_ids: Vec<String>,
    ) -> Result<Self> {
        let (p, n) = values.shape();
        if n == 0 || p == 0 {
            return Err(Error::invalid("dictionary must be non-empty"));
        }
        if n >= p {
            return Err(Error::invalid(format!(
                "dictionary needs more features than profiles: p = {p} must exceed n = {n}"
            )));
        }
        if feature_ids.len() != p {
            return Err(Error::invalid(format!(
                "feature id count {} does not match row count {p}",
                feature_ids.len()
            )));
        }
        if profile_ids.len() != n {
            return Err(Error::invalid(format!(
                "profile id count {} does not match column count {n}",
                profile_ids.len()
            )));
        }
        check_unique(&feature_ids, "feature")?;
        check_unique(&profile_ids, "profile")?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dictionary contains non-finite values"));
        }
        check_full_column_rank(&values, "dictionary")?;
        Ok(Dictionary {
            values,
            feature_ids,
            profile_ids,
        })
    }

    /// Number of features (rows).
    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    /// Number of profiles (columns).
    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    /// The `p x n` matrix of profile values.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Feature labels, one per row.
    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    /// Profile labels, one per column.
    pub fn profile_ids(&self) -> &[String] {
        &self.profile_ids
    }
}

/// Known source proportions of each dictionary profile: an `n x K` matrix
/// with nonnegative rows summing to one. Single-source profiles have
/// indicator rows.
#[derive(Debug, Clone)]
pub struct SourceDesign {
    weights: DMatrix<f64>,
    category_names: Vec<String>,
}

impl SourceDesign {
    /// Build an indicator design from one category label per profile.
    pub fn from_labels<S: AsRef<str>>(labels: &[S], category_names: &[S]) -> Result<Self> {
        let names: Vec<String> = category_names.iter().map(|s| s.as_ref().to_string()).collect();
        let k = names.len();
        let mut weights = DMatrix::zeros(labels.len(), k);
        for (i, label) in labels.iter().enumerate() {
            let label = label.as_ref();
            let col = names
                .iter()
                .position(|name| name == label)
                .ok_or_else(|| Error::invalid(format!("unknown category label {label:?}")))?;
            weights[(i, col)] = 1.0;
        }
        Self::from_weights(weights, names)
    }

    /// Build a design from explicit mixing-weight rows.
    pub fn from_weights(weights: DMatrix<f64>, category_names: Vec<String>) -> Result<Self> {
        let (n, k) = weights.shape();
        if k == 0 || n == 0 {
            return Err(Error::invalid("design must be non-empty"));
        }
        if category_names.len() != k {
            return Err(Error::invalid(format!(
                "category name count {} does not match column count {k}",
                category_names.len()
            )));
        }
        check_unique(&category_names, "category")?;
        if k > n {
            return Err(Error::invalid(format!(
                "more categories than profiles: K = {k} exceeds n = {n}"
            )));
        }
        for i in 0..n {
            let row = weights.row(i);
            if row.iter().any(|w| *w < 0.0 || !w.is_finite()) {
                return Err(Error::invalid(format!(
                    "design row {i} has a negative or non-finite weight"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::invalid(format!(
                    "design row {i} sums to {sum:.17} (must be 1 within {ROW_SUM_TOLERANCE:e})"
                )));
            }
        }
        check_full_column_rank(&weights, "design (a category may have zero total weight)")?;
        Ok(SourceDesign {
            weights,
            category_names,
        })
    }

    /// The `n x K` weight matrix.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Category names, one per column.
    pub fn category_names(&self) -> &[String] {
        &self.category_names
    }

    /// Number of profiles (rows).
    pub fn n_profiles(&self) -> usize {
        self.weights.nrows()
    }

    /// Number of source categories (columns).
    pub fn n_categories(&self) -> usize {
        self.weights.ncols()
    }

    /// If every row is an indicator, the category index of each profile.
    pub fn one_hot_labels(&self) -> Option<Vec<usize>> {
        let mut labels = Vec::with_capacity(self.n_profiles());
        for i in 0..self.n_profiles() {
            let row = self.weights.row(i);
            let mut hot = None;
            for (j, w) in row.iter().enumerate() {
                if (*w - 1.0).abs() <= ROW_SUM_TOLERANCE {
                    if hot.is_some() {
                        return None;
                    }
                    hot = Some(j);
                } else if w.abs() > ROW_SUM_TOLERANCE {
                    return None;
                }
            }
            labels.push(hot?);
        }
        Some(labels)
    }
}

/// A single profile with an explicit per-entry observed mask. Unobserved
/// entries carry no information; missingness is never encoded by sentinel
/// values.
#[derive(Debug, Clone)]
pub struct Profile {
    values: DVector<f64>,
    observed: Vec<bool>,
    feature_ids: Vec<String>,
}

impl Profile {
    /// A profile observed at every feature.
    pub fn fully_observed(values: DVector<f64>, feature_ids: Vec<String>) -> Result<Self> {
        let observed = vec![true; values.len()];
        Self::with_mask(values, observed, feature_ids)
    }

    /// A profile with the given observed mask. Values at unobserved entries
    /// are ignored by every operation.
    pub fn with_mask(
        values: DVector<f64>,
        observed: Vec<bool>,
        feature_ids: Vec<String>,
    ) -> Result<Self> {
        if values.len() != feature_ids.len() || values.len() != observed.len() {
            return Err(Error::invalid(format!(
                "profile lengths disagree: {} values, {} mask entries, {} feature ids",
                values.len(),
                observed.len(),
                feature_ids.len()
            )));
        }
        check_unique(&feature_ids, "feature")?;
        for (i, (v, obs)) in values.iter().zip(&observed).enumerate() {
            if *obs && !v.is_finite() {
                return Err(Error::invalid(format!(
                    "profile entry {} ({}) is observed but not finite",
                    i, feature_ids[i]
                )));
            }
        }
        Ok(Profile {
            values,
            observed,
            feature_ids,
        })
    }

    /// Entry values; only entries flagged observed are meaningful.
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// Observed flags, one per entry.
    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    /// Feature labels, aligned with the paired dictionary.
    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    /// Number of entries.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Whether the profile has no entries.
    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    /// Whether every entry is observed.
    pub fn is_fully_observed(&self) -> bool {
        self.observed.iter().all(|o| *o)
    }

    /// Indices of observed entries, ascending.
    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.observed[i]).collect()
    }

    /// Indices of unobserved entries, ascending.
    pub fn unobserved_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.observed[i]).collect()
    }

    /// Check feature-by-feature alignment with a dictionary.
    pub fn check_alignment(&self, dict: &Dictionary) -> Result<()> {
        if self.feature_ids != dict.feature_ids() {
            return Err(Error::invalid(
                "profile feature ids do not align with the dictionary".to_string(),
            ));
        }
        Ok(())
    }

    /// Fail unless every entry is observed; `context` names the operation.
    pub fn require_fully_observed(&self, context: &str) -> Result<()> {
        if let Some(i) = self.observed.iter().position(|o| !*o) {
            return Err(Error::invalid(format!(
                "{context} requires a fully observed profile; entry {} ({}) is unobserved",
                i, self.feature_ids[i]
            )));
        }
        Ok(())
    }
}

/// Quantities derived from a dictionary and design, shared by every
/// estimator and predictor:
///
/// * `group_means`: `p x K` per-category mean profiles `M = X A (AᵀA)⁻¹`;
/// * `null_basis`: `n x (n-K)` orthonormal basis `N` of the null space of
///   `Aᵀ`;
/// * `residuals`: `p x (n-K)` residual matrix `E = X N`, so the residual
///   sum-of-squares matrix is `S = E Eᵀ = X (I - P_A) Xᵀ`;
/// * the thin SVD of `E` (drives the Woodbury application of
///   `(S + gamma I)⁻¹`);
/// * a QR factorization of `X` sufficient to apply `(XᵀX)⁻¹`.
#[derive(Debug, Clone)]
pub struct ApportionmentBasis {
    group_means: DMatrix<f64>,
    null_basis: DMatrix<f64>,
    residuals: DMatrix<f64>,
    residual_svd: ThinSvdLeft,
    gram_qr: QrLs,
}

impl ApportionmentBasis {
    /// Per-category mean profiles, `p x K`.
    pub fn group_means(&self) -> &DMatrix<f64> {
        &self.group_means
    }

    /// Orthonormal null-space basis of `Aᵀ`, `n x (n-K)`.
    pub fn null_basis(&self) -> &DMatrix<f64> {
        &self.null_basis
    }

    /// Residual matrix `E = X N`, `p x (n-K)`.
    pub fn residuals(&self) -> &DMatrix<f64> {
        &self.residuals
    }

    /// Thin SVD of the residual matrix.
    pub fn residual_svd(&self) -> &ThinSvdLeft {
        &self.residual_svd
    }

    /// QR factorization of the dictionary, for `(XᵀX)⁻¹` applications and
    /// column-space projections.
    pub fn gram_qr(&self) -> &QrLs {
        &self.gram_qr
    }

    /// Number of source categories.
    pub fn n_categories(&self) -> usize {
        self.group_means.ncols()
    }
}

/// Flip column signs so the largest-magnitude entry of each column is
/// positive (first such entry on ties). Pins an orientation that is
/// otherwise arbitrary, so identical inputs give bit-identical bases.
fn fix_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mut lead = 0;
        let mut lead_abs = 0.0;
        for (i, v) in m.column(j).iter().enumerate() {
            if v.abs() > lead_abs {
                lead_abs = v.abs();
                lead = i;
            }
        }
        if m[(lead, j)] < 0.0 {
            m.column_mut(j).neg_mut();
        }
    }
}

/// Orthonormal basis of the null space of `Aᵀ`, from the full orthogonal
/// (Householder) factorization of `A`: the trailing `n-K` columns of the
/// full `Q`.
fn null_space_basis(design: &SourceDesign) -> DMatrix<f64> {
    let a = design.weights();
    let (n, k) = a.shape();
    let qr = a.clone().qr();
    let mut q_t = DMatrix::identity(n, n);
    qr.q_tr_mul(&mut q_t);
    let mut basis = q_t.rows(k, n - k).transpose();
    fix_column_signs(&mut basis);
    basis
}

/// Derive the shared apportionment quantities from a dictionary and design.
///
/// Deterministic: identical inputs give bit-identical outputs. `K = n` is
/// allowed and yields an empty null basis and residual matrix.
pub fn decompose(dict: &Dictionary, design: &SourceDesign) -> Result<ApportionmentBasis> {
    if design.n_profiles() != dict.n() {
        return Err(Error::invalid(format!(
            "design has {} rows but the dictionary has {} profiles",
            design.n_profiles(),
            dict.n()
        )));
    }
    let x = dict.values();
    let a = design.weights();

    let null_basis = null_space_basis(design);
    let a_qr = QrLs::new(a);
    // A (AᵀA)⁻¹, via ((AᵀA)⁻¹ Aᵀ)ᵀ
    let a_gram_inv = a_qr.gram_solve_mat(&a.transpose())?.transpose();
    let group_means = x * a_gram_inv;
    let residuals = x * &null_basis;
    let residual_svd = ThinSvdLeft::new(&residuals);
    let gram_qr = QrLs::new(x);

    Ok(ApportionmentBasis {
        group_means,
        null_basis,
        residuals,
        residual_svd,
        gram_qr,
    })
}
