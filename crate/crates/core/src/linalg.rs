//! Shared dense linear-algebra helpers.
//!
//! Every solve in this crate goes through orthogonal factorizations; Gram
//! matrices are never inverted explicitly. Rank is always judged against the
//! rank-revealing tolerance `eps * max(rows, cols) * sigma_max`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Rank tolerance for an `nrows x ncols` matrix with largest singular value
/// `sigma_max`: singular values at or below it are treated as zero.
pub fn rank_tolerance(nrows: usize, ncols: usize, sigma_max: f64) -> f64 {
    f64::EPSILON * nrows.max(ncols) as f64 * sigma_max
}

/// Check that `m` has full column rank at the rank-revealing tolerance.
///
/// Returns `(sigma_max, sigma_min)` on success and [`Error::RankDeficient`]
/// naming `what` otherwise.
pub fn check_full_column_rank(m: &DMatrix<f64>, what: &str) -> Result<(f64, f64)> {
    if m.ncols() == 0 {
        return Ok((0.0, 0.0));
    }
    if m.nrows() < m.ncols() {
        return Err(Error::RankDeficient {
            what: format!("{what} (fewer rows than columns)"),
            sigma_min: 0.0,
            tol: 0.0,
        });
    }
    let svd = m.clone().svd(false, false);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    let tol = rank_tolerance(m.nrows(), m.ncols(), sigma_max);
    if !(sigma_min > tol) || !sigma_min.is_finite() {
        return Err(Error::RankDeficient {
            what: what.to_string(),
            sigma_min,
            tol,
        });
    }
    Ok((sigma_max, sigma_min))
}

/// Thin QR factorization of a tall matrix, kept for repeated least-squares
/// and Gram-inverse applications.
///
/// For `m` of size `p x n` (`p >= n`), stores `q` (`p x n`, orthonormal
/// columns) and `r` (`n x n`, upper triangular) with `m = q r`.
#[derive(Debug, Clone)]
pub struct QrLs {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl QrLs {
    /// Factor `m`. The caller is responsible for having rank-checked `m`;
    /// solves fail with [`Error::RankDeficient`] if a zero pivot shows up
    /// anyway.
    pub fn new(m: &DMatrix<f64>) -> Self {
        let qr = m.clone().qr();
        QrLs {
            q: qr.q(),
            r: qr.r(),
        }
    }

    /// Orthonormal basis of the column space (`p x n`).
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    fn pivot_error(&self) -> Error {
        let min_diag = self.r.diagonal().iter().fold(f64::INFINITY, |a, d| a.min(d.abs()));
        Error::RankDeficient {
            what: "triangular factor".to_string(),
            sigma_min: min_diag,
            tol: 0.0,
        }
    }

    /// Least-squares coefficients of `rhs` on the factored matrix:
    /// `r⁻¹ qᵀ rhs`.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let qty = self.q.tr_mul(rhs);
        self.r
            .solve_upper_triangular(&qty)
            .ok_or_else(|| self.pivot_error())
    }

    /// Apply `(mᵀm)⁻¹` to a vector via two triangular solves.
    pub fn gram_solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let w = self
            .r
            .tr_solve_upper_triangular(v)
            .ok_or_else(|| self.pivot_error())?;
        self.r
            .solve_upper_triangular(&w)
            .ok_or_else(|| self.pivot_error())
    }

    /// Apply `(mᵀm)⁻¹` to each column of `b`.
    pub fn gram_solve_mat(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let w = self
            .r
            .tr_solve_upper_triangular(b)
            .ok_or_else(|| self.pivot_error())?;
        self.r
            .solve_upper_triangular(&w)
            .ok_or_else(|| self.pivot_error())
    }

    /// Apply the factored matrix itself: `m b = q (r b)`.
    pub fn mul_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        &self.q * (&self.r * b)
    }

    /// Orthogonal projection of `v` onto the column space.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.q * self.q.tr_mul(v)
    }

    /// Residual of `v` against the column space, `(I - q qᵀ) v`.
    pub fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        v - self.project(v)
    }
}

/// Thin SVD keeping only the left factor: `m = u diag(d) vᵀ` with `u` of
/// size `p x min(p, c)` and `d` sorted in descending order.
#[derive(Debug, Clone)]
pub struct ThinSvdLeft {
    /// Left singular vectors.
    pub u: DMatrix<f64>,
    /// Singular values, descending.
    pub d: DVector<f64>,
}

impl ThinSvdLeft {
    /// Compute the thin left SVD of `m`. A matrix with zero columns yields
    /// an empty factor.
    pub fn new(m: &DMatrix<f64>) -> Self {
        if m.ncols() == 0 {
            return ThinSvdLeft {
                u: DMatrix::zeros(m.nrows(), 0),
                d: DVector::zeros(0),
            };
        }
        let svd = m.clone().svd(true, false);
        ThinSvdLeft {
            u: svd.u.expect("left singular vectors requested"),
            d: svd.singular_values,
        }
    }

    /// Columns of `u` whose singular value exceeds the rank tolerance.
    pub fn range_basis(&self) -> DMatrix<f64> {
        if self.d.is_empty() {
            return self.u.clone();
        }
        let tol = rank_tolerance(self.u.nrows(), self.d.len(), self.d.max());
        let rank = self.d.iter().filter(|&&s| s > tol).count();
        self.u.columns(0, rank).into_owned()
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order.
pub fn symmetric_eigen_sorted(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let k = m.nrows();
    if k == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let values = DVector::from_iterator(k, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Smallest eigenvalue of a symmetric matrix (0 for an empty matrix).
pub fn min_eigenvalue_symmetric(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Force exact symmetry, averaging away round-off skew.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Orthonormal basis of the orthogonal complement of the column space of
/// `basis` (which must itself have orthonormal columns).
///
/// Works column-by-column with twice-reorthogonalized Gram-Schmidt over the
/// identity, so the `p x p` projector is never materialized.
pub fn orthonormal_complement(basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = basis.nrows();
    let n = basis.ncols();
    let m = p - n;
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(m);
    for j in 0..p {
        if cols.len() == m {
            break;
        }
        let mut v = DVector::zeros(p);
        v[j] = 1.0;
        for _ in 0..2 {
            let coef = basis.tr_mul(&v);
            v -= basis * coef;
            for c in &cols {
                let d = c.dot(&v);
                v.axpy(-d, c, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            v /= norm;
            cols.push(v);
        }
    }
    if cols.len() != m {
        return Err(Error::RankDeficient {
            what: "orthogonal complement".to_string(),
            sigma_min: 0.0,
            tol: 1e-8,
        });
    }
    let mut out = DMatrix::zeros(p, m);
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_least_squares_matches_normal_equations() {
        let m = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_row_slice(&[1.0, 2.0, 2.0, 4.0]);
        let qr = QrLs::new(&m);
        let beta = qr.solve(&y).unwrap();
        // brute-force normal equations
        let g = m.tr_mul(&m);
        let rhs = m.tr_mul(&y);
        let expected = g.try_inverse().unwrap() * rhs;
        assert!((beta - expected).norm() < 1e-12);
    }

    #[test]
    fn gram_solve_applies_inverse_gram() {
        let m = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let qr = QrLs::new(&m);
        let v = DVector::from_row_slice(&[1.0, -2.0]);
        let got = qr.gram_solve(&v).unwrap();
        let expected = m.tr_mul(&m).try_inverse().unwrap() * &v;
        assert!((got - expected).norm() < 1e-12);
    }

    #[test]
    fn complement_of_coordinate_span() {
        // span{e1, e2, e3} in R^4 -> complement is e4
        let mut basis = DMatrix::zeros(4, 3);
        basis[(0, 0)] = 1.0;
        basis[(1, 1)] = 1.0;
        basis[(2, 2)] = 1.0;
        let comp = orthonormal_complement(&basis).unwrap();
        assert_eq!(comp.ncols(), 1);
        assert!((comp[(3, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        use rand::Rng;
        let mut rng = crate::rng::derive_rng(11, &[0]);
        let m = DMatrix::from_fn(20, 6, |_, _| rng.gen::<f64>() - 0.5);
        let q = QrLs::new(&m).q().clone();
        let comp = orthonormal_complement(&q).unwrap();
        assert_eq!(comp.ncols(), 14);
        let gram = comp.tr_mul(&comp);
        assert!((gram - DMatrix::identity(14, 14)).norm() < 1e-10);
        assert!(q.tr_mul(&comp).norm() < 1e-10);
    }

    #[test]
    fn rank_check_flags_collinear_columns() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let err = check_full_column_rank(&m, "test matrix").unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn eigen_sort_is_descending() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let (vals, vecs) = symmetric_eigen_sorted(&m);
        assert!(vals[0] >= vals[1]);
        let recon = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((recon - m).norm() < 1e-12);
    }
}
