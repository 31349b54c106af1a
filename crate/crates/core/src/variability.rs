//! Variability analysis of the ATR and RTS estimates.
//!
//! Under the idealized model — mean `M theta`, covariance proportional to
//! `S + gamma I` — both estimators are unbiased and their variances have
//! closed forms:
//!
//! ```text
//! Var[ATR] ∝ (MᵀM)⁻¹ Mᵀ S M (MᵀM)⁻¹ + gamma (MᵀM)⁻¹
//! Var[RTS] ∝ gamma Aᵀ(XᵀX)⁻¹A
//! ```
//!
//! with the same proportionality constant. All outputs here are reported
//! per unit `||theta||²` with proportionality constant 1, matching the
//! `S + gamma I` convention. RTS beats ATR in the Loewner order exactly for
//! `gamma` below a crossover threshold ([`gamma_threshold`]), and the
//! residual quadratic form `yᵀ(I - P_X)y / (p - n)` turns the RTS variance
//! shape into concrete squared standard errors ([`standard_errors_rts`])
//! that are unbiased in the idealized model. [`bias_envelope`] bounds and
//! computes exactly how biased those squared standard errors become when
//! the true mean and covariance drift away from their dictionary-derived
//! approximations.

use nalgebra::{DMatrix, DVector};

use crate::covariance::CovarianceOp;
use crate::error::{Error, Result};
use crate::linalg::{
    check_full_column_rank, min_eigenvalue_symmetric, orthonormal_complement,
    symmetric_eigen_sorted, symmetrize, QrLs, ThinSvdLeft,
};
use crate::model::{ApportionmentBasis, Dictionary, Profile, SourceDesign};

/// Idealized-model variance matrices of the two estimators at a given
/// `gamma`, per unit `||theta||²` with proportionality constant 1.
#[derive(Debug, Clone)]
pub struct VarianceProfile {
    v_atr: DMatrix<f64>,
    v_rts: DMatrix<f64>,
    gamma: f64,
}

impl VarianceProfile {
    /// Variance of the ATR estimate.
    pub fn v_atr(&self) -> &DMatrix<f64> {
        &self.v_atr
    }

    /// Variance of the RTS estimate.
    pub fn v_rts(&self) -> &DMatrix<f64> {
        &self.v_rts
    }

    /// The `gamma` both matrices were evaluated at.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Normalization convention of the reported matrices.
    pub fn normalization_note() -> &'static str {
        "per unit ||theta||^2, proportionality constant 1 (Sigma_gamma = S + gamma I)"
    }
}

/// `Aᵀ (XᵀX)⁻¹ A`, the RTS variance shape.
pub fn design_gram_inverse_form(
    design: &SourceDesign,
    basis: &ApportionmentBasis,
) -> Result<DMatrix<f64>> {
    let a = design.weights();
    let c = basis.gram_qr().gram_solve_mat(a)?;
    Ok(symmetrize(&a.tr_mul(&c)))
}

/// `(MᵀM)⁻¹` and `(MᵀM)⁻¹ Mᵀ E`, shared by the variance formulas.
fn atr_blocks(basis: &ApportionmentBasis) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = basis.group_means();
    check_full_column_rank(m, "group means")?;
    let k = m.ncols();
    let qr = QrLs::new(m);
    let gram_inv = qr.gram_solve_mat(&DMatrix::identity(k, k))?;
    let h = m.tr_mul(basis.residuals());
    let w = qr.gram_solve_mat(&h)?;
    Ok((symmetrize(&gram_inv), w))
}

/// Idealized-model variances of ATR and RTS at `gamma`.
pub fn variance_profiles(
    design: &SourceDesign,
    basis: &ApportionmentBasis,
    gamma: f64,
) -> Result<VarianceProfile> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!(
            "gamma must be a positive finite number, got {gamma}"
        )));
    }
    let v_rts = design_gram_inverse_form(design, basis)? * gamma;
    let (gram_inv, w) = atr_blocks(basis)?;
    let v_atr = symmetrize(&(&w * w.transpose() + gram_inv * gamma));
    Ok(VarianceProfile {
        v_atr,
        v_rts,
        gamma,
    })
}

/// The crossover value of [`gamma_threshold`], possibly infinite.
#[derive(Debug, Clone)]
pub struct GammaThreshold {
    /// Largest `gamma` for which `Var[RTS] ⪯ Var[ATR]`; `+infinity` when the
    /// ordering holds for every `gamma`.
    pub value: f64,
    /// Diagnostic for degenerate inputs.
    pub note: Option<String>,
}

/// Largest `gamma` at which the RTS variance stays below the ATR variance
/// in the Loewner order: the minimum generalized eigenvalue of
/// `(V1, V2)` with
///
/// ```text
/// V1 = Aᵀ(XᵀX)⁻¹A - (MᵀM)⁻¹       (Gauss-Markov gap, PSD)
/// V2 = (MᵀM)⁻¹ Mᵀ S M (MᵀM)⁻¹
/// ```
///
/// When `V1` is singular the problem is solved on its range after
/// projecting `V2`; directions where both vanish are excluded, and if `V1`
/// vanishes entirely with `V2` nonzero the ordering holds for every
/// `gamma`, so the threshold is `+infinity`.
pub fn gamma_threshold(
    design: &SourceDesign,
    basis: &ApportionmentBasis,
) -> Result<GammaThreshold> {
    let k = basis.n_categories();
    let n = design.n_profiles();
    if n == k {
        return Ok(GammaThreshold {
            value: 0.0,
            note: Some("K = n: the residual term vanishes and no gamma > 0 favors RTS".into()),
        });
    }
    let (gram_inv, w) = atr_blocks(basis)?;
    let v1 = symmetrize(&(design_gram_inverse_form(design, basis)? - gram_inv));
    let v2 = symmetrize(&(&w * w.transpose()));

    let (vals, vecs) = symmetric_eigen_sorted(&v1);
    let lead = vals[0].max(0.0);
    let tol = lead * 1e-10;
    let rank = vals.iter().filter(|&&l| l > tol).count();
    if rank == 0 {
        let note = if v2.norm() <= 1e-12 {
            "V1 and V2 both vanish; the two variances coincide for every gamma"
        } else {
            "V1 vanishes while V2 does not; RTS is favored at every gamma"
        };
        return Ok(GammaThreshold {
            value: f64::INFINITY,
            note: Some(note.to_string()),
        });
    }
    // Whiten V2 on the range of V1 and take the smallest eigenvalue.
    let mut white = DMatrix::zeros(k, rank);
    for j in 0..rank {
        white.set_column(j, &(vecs.column(j) / vals[j].sqrt()));
    }
    let projected = symmetrize(&(white.tr_mul(&(&v2 * &white))));
    let value = min_eigenvalue_symmetric(&projected).max(0.0);
    Ok(GammaThreshold { value, note: None })
}

/// Squared standard errors of the RTS estimate:
/// `(yᵀ(I - P_X)y) / (p - n) * Aᵀ(XᵀX)⁻¹A`.
pub fn standard_errors_rts(
    dict: &Dictionary,
    design: &SourceDesign,
    y: &Profile,
) -> Result<DMatrix<f64>> {
    if design.n_profiles() != dict.n() {
        return Err(Error::invalid("design does not match the dictionary"));
    }
    y.require_fully_observed("RTS standard errors")?;
    if y.len() != dict.p() {
        return Err(Error::invalid("profile length does not match the dictionary"));
    }
    let basis = crate::model::decompose(dict, design)?;
    standard_errors_rts_with(&basis, design, y.values())
}

/// Standard-error computation reusing a prepared basis (hot path for the
/// simulation harness).
pub fn standard_errors_rts_with(
    basis: &ApportionmentBasis,
    design: &SourceDesign,
    y: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let p = basis.gram_qr().q().nrows();
    let n = design.n_profiles();
    if p <= n {
        return Err(Error::invalid(format!(
            "standard errors need p > n; got p = {p}, n = {n}"
        )));
    }
    let resid = basis.gram_qr().residual(y);
    let scale = resid.norm_squared() / (p - n) as f64;
    Ok(design_gram_inverse_form(design, basis)? * scale)
}

/// The three mutually orthogonal subspaces behind the standard-error bias
/// bounds: the range of the residual matrix `E`, the range of
/// `X(XᵀX)⁻¹A`, and the orthogonal complement of the dictionary's column
/// space.
#[derive(Debug, Clone)]
pub struct SubspaceBases {
    /// Left singular vectors of `E`, `p x (n - K)`.
    pub u1: DMatrix<f64>,
    /// Left singular vectors of `X(XᵀX)⁻¹A`, `p x K`.
    pub u2: DMatrix<f64>,
    /// Orthonormal basis of the complement of `col(X)`, `p x (p - n)`.
    pub u3: DMatrix<f64>,
}

/// Materialize the three subspace bases. `u3` is built column-by-column
/// from deflated identity vectors, never through a `p x p` projector.
pub fn subspace_bases(
    dict: &Dictionary,
    design: &SourceDesign,
    basis: &ApportionmentBasis,
) -> Result<SubspaceBases> {
    let u1 = basis.residual_svd().range_basis();
    if u1.ncols() != dict.n() - design.n_categories() {
        return Err(Error::RankDeficient {
            what: "residual matrix".to_string(),
            sigma_min: 0.0,
            tol: 0.0,
        });
    }
    let u2 = rts_coefficient_directions(design, basis)?.1;
    let u3 = orthonormal_complement(basis.gram_qr().q())?;
    Ok(SubspaceBases { u1, u2, u3 })
}

/// `T = X(XᵀX)⁻¹A` (the per-category RTS coefficient directions) together
/// with an orthonormal basis of its column space.
fn rts_coefficient_directions(
    design: &SourceDesign,
    basis: &ApportionmentBasis,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let a = design.weights();
    let c = basis.gram_qr().gram_solve_mat(a)?;
    let t = basis.gram_qr().mul_mat(&c);
    let svd = ThinSvdLeft::new(&t);
    let u2 = svd.range_basis();
    if u2.ncols() != design.n_categories() {
        return Err(Error::RankDeficient {
            what: "RTS coefficient directions X(XᵀX)⁻¹A".to_string(),
            sigma_min: 0.0,
            tol: 0.0,
        });
    }
    Ok((t, u2))
}

/// Per-category bias bounds on the squared standard errors, per unit
/// `||theta||²`.
#[derive(Debug, Clone)]
pub struct CategoryBias {
    /// Lower bound on `E[v_k - v̂_k] / ||theta||²`.
    pub lower: f64,
    /// Upper bound.
    pub upper: f64,
    /// The exact expected bias under the supplied population model.
    pub exact_expected_bias: f64,
}

/// Bias envelope of the RTS squared standard errors under a general
/// population model.
#[derive(Debug, Clone)]
pub struct BiasEnvelope {
    categories: Vec<CategoryBias>,
}

impl BiasEnvelope {
    /// Per-category records, in design column order.
    pub fn categories(&self) -> &[CategoryBias] {
        &self.categories
    }
}

/// Exact expected bias of the RTS squared standard errors and its
/// closed-form envelope, under a population with mean matrix `mean` and
/// covariance `sigma` (`Var[y] = ||theta||² sigma`).
///
/// The true per-category variance is
/// `v_k = ||theta||² a_kᵀ(XᵀX)⁻¹Xᵀ sigma X(XᵀX)⁻¹a_k` and the expectation
/// of the squared standard error follows from
/// `E[yᵀ(I-P_X)y] = ||theta||² tr(sigma (I-P_X)) + ||Mtheta||² - ||P_X Mtheta||²`.
/// When `theta` is not supplied, the rank-one `theta thetaᵀ` term is
/// majorized by `M Mᵀ`, exactly as in the envelope's lower bound.
pub fn bias_envelope(
    dict: &Dictionary,
    design: &SourceDesign,
    basis: &ApportionmentBasis,
    mean: &DMatrix<f64>,
    sigma: &CovarianceOp,
    theta: Option<&DVector<f64>>,
) -> Result<BiasEnvelope> {
    let p = dict.p();
    let n = dict.n();
    let k = design.n_categories();
    if mean.nrows() != p || mean.ncols() != k {
        return Err(Error::invalid(format!(
            "population mean must be {p} x {k}, got {} x {}",
            mean.nrows(),
            mean.ncols()
        )));
    }
    if sigma.dim() != p {
        return Err(Error::invalid("population covariance dimension mismatch"));
    }
    if let Some(t) = theta {
        if t.len() != k {
            return Err(Error::invalid("theta length does not match category count"));
        }
        if t.norm_squared() <= 0.0 {
            return Err(Error::invalid("theta must be nonzero"));
        }
    }
    let denom = (p - n) as f64;
    let gram = design_gram_inverse_form(design, basis)?;
    let (t_dirs, u2) = rts_coefficient_directions(design, basis)?;

    let s2 = symmetrize(&sigma.sandwich(&u2));
    let (s2_vals, _) = symmetric_eigen_sorted(&s2);
    let lambda_max2 = s2_vals[0];
    let lambda_min2 = s2_vals[s2_vals.len() - 1];

    let q = basis.gram_qr().q();
    let trace_sigma_u3 = (sigma.trace() - sigma.sandwich(q).trace()).max(0.0);
    let trace_m_u3 = (mean.norm_squared() - q.tr_mul(mean).norm_squared()).max(0.0);
    let m_term_exact = match theta {
        Some(t) => {
            let mt = mean * t;
            (mt.norm_squared() - q.tr_mul(&mt).norm_squared()).max(0.0) / t.norm_squared()
        }
        None => trace_m_u3,
    };

    let mut categories = Vec::with_capacity(k);
    for j in 0..k {
        let g = gram[(j, j)];
        let w = t_dirs.column(j).into_owned();
        let v_unit = sigma.quad_form(&w);
        let expected_sse = g * (trace_sigma_u3 + m_term_exact) / denom;
        categories.push(CategoryBias {
            lower: g * (lambda_min2 - trace_sigma_u3 / denom - trace_m_u3 / denom),
            upper: g * (lambda_max2 - trace_sigma_u3 / denom),
            exact_expected_bias: v_unit - expected_sse,
        });
    }
    Ok(BiasEnvelope { categories })
}
