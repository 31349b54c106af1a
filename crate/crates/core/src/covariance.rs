//! Covariance operators in dense or low-rank-plus-isotropic form.
//!
//! The apportionment model only ever needs a covariance through a handful of
//! operations: applying the inverse, quadratic forms, traces of sandwiched
//! blocks, and Gaussian sampling. [`CovarianceOp`] provides those for a
//! dense symmetric matrix and for `scale * F Fᵀ + iso * I`, the
//! low-rank-plus-isotropic family. The low-rank inverse goes through the
//! thin SVD of the factor (Woodbury form), so applying it costs
//! `O(p * rank)` instead of `O(p³)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::ThinSvdLeft;

/// A positive semidefinite covariance operator.
#[derive(Debug, Clone)]
pub struct CovarianceOp {
    kind: Kind,
    dim: usize,
}

#[derive(Debug, Clone)]
enum Kind {
    Dense {
        matrix: DMatrix<f64>,
        chol: Option<Cholesky<f64, Dyn>>,
    },
    LowRankIso {
        factor: DMatrix<f64>,
        scale: f64,
        iso: f64,
        // SVD of sqrt(scale) * factor
        svd: ThinSvdLeft,
    },
    Zero,
}

impl CovarianceOp {
    /// Wrap a dense symmetric matrix. The Cholesky factor is prepared
    /// eagerly when one exists; operators without one still support
    /// products, quadratic forms, and traces, but not solves.
    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::invalid("covariance matrix must be square"));
        }
        if (matrix.clone() - matrix.transpose()).norm() > 1e-8 * matrix.norm().max(1.0) {
            return Err(Error::invalid("covariance matrix must be symmetric"));
        }
        let dim = matrix.nrows();
        let chol = Cholesky::new(matrix.clone());
        Ok(CovarianceOp {
            kind: Kind::Dense { matrix, chol },
            dim,
        })
    }

    /// `scale * factor factorᵀ + iso * I` with `scale >= 0`, `iso >= 0`.
    pub fn low_rank_iso(factor: DMatrix<f64>, scale: f64, iso: f64) -> Result<Self> {
        if !(scale >= 0.0) || !(iso >= 0.0) || !scale.is_finite() || !iso.is_finite() {
            return Err(Error::invalid(format!(
                "covariance scales must be finite and nonnegative (scale = {scale}, iso = {iso})"
            )));
        }
        let dim = factor.nrows();
        let scaled = &factor * scale.sqrt();
        let svd = ThinSvdLeft::new(&scaled);
        Ok(CovarianceOp {
            kind: Kind::LowRankIso {
                factor,
                scale,
                iso,
                svd,
            },
            dim,
        })
    }

    /// The zero covariance (degenerate, for noise-free models).
    pub fn zero(dim: usize) -> Self {
        CovarianceOp {
            kind: Kind::Zero,
            dim,
        }
    }

    /// Side length of the operator.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether the operator is identically zero.
    pub fn is_zero(&self) -> bool {
        match &self.kind {
            Kind::Zero => true,
            Kind::Dense { matrix, .. } => matrix.iter().all(|v| *v == 0.0),
            Kind::LowRankIso { scale, iso, factor, .. } => {
                *iso == 0.0 && (*scale == 0.0 || factor.ncols() == 0)
            }
        }
    }

    /// `Sigma v`.
    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            Kind::Zero => DVector::zeros(self.dim),
            Kind::Dense { matrix, .. } => matrix * v,
            Kind::LowRankIso {
                factor, scale, iso, ..
            } => factor * (factor.tr_mul(v) * *scale) + v * *iso,
        }
    }

    /// `Sigma⁻¹ v`. Fails if the operator is singular.
    pub fn solve_vec(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.kind {
            Kind::Zero => Err(Error::SingularCovariance("zero covariance".into())),
            Kind::Dense { chol, .. } => chol
                .as_ref()
                .map(|c| c.solve(v))
                .ok_or_else(|| Error::SingularCovariance("dense factorization failed".into())),
            Kind::LowRankIso { iso, svd, .. } => {
                if *iso <= 0.0 {
                    return Err(Error::SingularCovariance(
                        "low-rank covariance with zero isotropic part".into(),
                    ));
                }
                Ok(woodbury_solve(svd, *iso, v))
            }
        }
    }

    /// `Sigma⁻¹ B`, column by column.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.dim, b.ncols());
        for j in 0..b.ncols() {
            let col = b.column(j).into_owned();
            out.set_column(j, &self.solve_vec(&col)?);
        }
        Ok(out)
    }

    /// `vᵀ Sigma v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.mul_vec(v))
    }

    /// `Bᵀ Sigma B` for a `p x m` block `B`.
    pub fn sandwich(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.kind {
            Kind::Zero => DMatrix::zeros(b.ncols(), b.ncols()),
            Kind::Dense { matrix, .. } => b.tr_mul(&(matrix * b)),
            Kind::LowRankIso {
                factor, scale, iso, ..
            } => {
                let fb = factor.tr_mul(b);
                fb.tr_mul(&fb) * *scale + b.tr_mul(b) * *iso
            }
        }
    }

    /// `trace(Sigma)`.
    pub fn trace(&self) -> f64 {
        match &self.kind {
            Kind::Zero => 0.0,
            Kind::Dense { matrix, .. } => matrix.trace(),
            Kind::LowRankIso {
                factor, scale, iso, ..
            } => scale * factor.norm_squared() + iso * self.dim as f64,
        }
    }

    /// Draw one `N(0, Sigma)` vector.
    pub fn sample(&self, rng: &mut impl Rng) -> Result<DVector<f64>> {
        match &self.kind {
            Kind::Zero => Ok(DVector::zeros(self.dim)),
            Kind::Dense { chol, .. } => {
                let c = chol.as_ref().ok_or_else(|| {
                    Error::SingularCovariance("cannot sample: dense factorization failed".into())
                })?;
                let z = standard_normal(self.dim, rng);
                Ok(c.l() * z)
            }
            Kind::LowRankIso {
                factor, scale, iso, ..
            } => {
                let z1 = standard_normal(factor.ncols(), rng);
                let z2 = standard_normal(self.dim, rng);
                Ok(factor * z1 * scale.sqrt() + z2 * iso.sqrt())
            }
        }
    }
}

fn standard_normal(len: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// `(U diag(d²) Uᵀ + iso I)⁻¹ v = (v - U diag(d²/(d²+iso)) Uᵀ v) / iso`.
fn woodbury_solve(svd: &ThinSvdLeft, iso: f64, v: &DVector<f64>) -> DVector<f64> {
    if svd.d.is_empty() {
        return v / iso;
    }
    let mut coef = svd.u.tr_mul(v);
    for (i, c) in coef.iter_mut().enumerate() {
        let d2 = svd.d[i] * svd.d[i];
        *c *= d2 / (d2 + iso);
    }
    (v - &svd.u * coef) / iso
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_low_rank(p: usize, r: usize, seed: u64) -> (CovarianceOp, DMatrix<f64>) {
        let mut rng = crate::rng::derive_rng(seed, &[9]);
        let f = DMatrix::from_fn(p, r, |_, _| rng.gen::<f64>() - 0.5);
        let scale = 0.7;
        let iso = 0.3;
        let dense = &f * f.transpose() * scale + DMatrix::identity(p, p) * iso;
        (CovarianceOp::low_rank_iso(f, scale, iso).unwrap(), dense)
    }

    #[test]
    fn woodbury_matches_dense_inverse() {
        let (op, dense) = random_low_rank(12, 3, 5);
        let mut rng = crate::rng::derive_rng(5, &[1]);
        let v = DVector::from_fn(12, |_, _| rng.gen::<f64>() - 0.5);
        let got = op.solve_vec(&v).unwrap();
        let expected = dense.clone().try_inverse().unwrap() * &v;
        assert!((got - expected).norm() < 1e-10);
    }

    #[test]
    fn sandwich_and_trace_match_dense() {
        let (op, dense) = random_low_rank(10, 2, 7);
        let mut rng = crate::rng::derive_rng(7, &[2]);
        let b = DMatrix::from_fn(10, 4, |_, _| rng.gen::<f64>() - 0.5);
        let got = op.sandwich(&b);
        let expected = b.tr_mul(&(&dense * &b));
        assert!((got - expected).norm() < 1e-10);
        assert!((op.trace() - dense.trace()).abs() < 1e-10);
    }

    #[test]
    fn zero_covariance_reports_singular() {
        let op = CovarianceOp::zero(4);
        assert!(op.is_zero());
        assert!(op.solve_vec(&DVector::zeros(4)).is_err());
        let mut rng = crate::rng::derive_rng(1, &[0]);
        assert_eq!(op.sample(&mut rng).unwrap(), DVector::zeros(4));
    }

    #[test]
    fn dense_solve_round_trips() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let op = CovarianceOp::dense(m.clone()).unwrap();
        let v = DVector::from_row_slice(&[1.0, -1.0]);
        let w = op.solve_vec(&v).unwrap();
        assert!((m * w - v).norm() < 1e-12);
    }
}
