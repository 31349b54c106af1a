//! Synthetic EEM-style dictionary generation for desk-scale studies.
//!
//! Profiles live on an excitation x emission wavelength grid and are built
//! as smooth category landscapes plus a shared low-rank variation basis and
//! a small isotropic floor:
//!
//! ```text
//! x_i = mu_{cat(i)} + sum_f s_f w_{i,f} b_f + eps_i
//! ```
//!
//! The shared factors `b_f` give the within-category scatter the correlated
//! low-rank structure that real fluorescence dictionaries show, which is
//! what the shrinkage calibration in [`super::population`] picks up (large
//! `nu*`, small `gamma*`). The isotropic term keeps the dictionary full
//! rank.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::eem::format_feature_id;
use crate::error::{Error, Result};
use crate::model::{Dictionary, SourceDesign};
use crate::rng::{derive_rng, domain};

/// Number of shared variation factors.
const FACTOR_COUNT: usize = 6;
/// Scale of the leading factor loading.
const FACTOR_SCALE: f64 = 0.35;
/// Geometric decay of the factor scales.
const FACTOR_DECAY: f64 = 0.85;
/// Standard deviation of the isotropic floor.
const IID_SIGMA: f64 = 0.02;
/// Number of Gaussian bumps per category mean.
const BUMPS_PER_MEAN: usize = 3;

/// The wavelength grid backing a synthetic dictionary.
#[derive(Debug, Clone)]
pub struct WavelengthGrid {
    /// Excitation wavelengths (nm), ascending.
    pub excitations: Vec<f64>,
    /// Emission wavelengths (nm), ascending.
    pub emissions: Vec<f64>,
}

impl WavelengthGrid {
    /// Factor `p` into an excitation x emission grid: the excitation count
    /// is the smallest divisor of `p` at or above `sqrt(p)`.
    pub fn for_feature_count(p: usize) -> Result<Self> {
        if p < 4 {
            return Err(Error::invalid("need at least 4 features"));
        }
        let root = (p as f64).sqrt().ceil() as usize;
        let n_ex = (root..=p / 2)
            .find(|d| p % d == 0)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "p = {p} has no divisor usable as an excitation count; \
                     choose p with a factor near sqrt(p)"
                ))
            })?;
        let n_em = p / n_ex;
        if n_em < 2 {
            return Err(Error::invalid(format!(
                "p = {p} factors into a degenerate {n_ex} x {n_em} grid"
            )));
        }
        Ok(WavelengthGrid {
            excitations: (0..n_ex).map(|i| 250.0 + 10.0 * i as f64).collect(),
            emissions: (0..n_em).map(|j| 300.0 + 4.0 * j as f64).collect(),
        })
    }

    /// Total feature count.
    pub fn feature_count(&self) -> usize {
        self.excitations.len() * self.emissions.len()
    }

    /// Canonical feature ids, ascending by excitation then emission.
    pub fn feature_ids(&self) -> Vec<String> {
        let mut ids = Vec::with_capacity(self.feature_count());
        for &ex in &self.excitations {
            for &em in &self.emissions {
                ids.push(format_feature_id(ex, em));
            }
        }
        ids
    }
}

/// A smooth random landscape over the grid: a few Gaussian bumps.
fn random_landscape(grid: &WavelengthGrid, bumps: usize, rng: &mut impl Rng) -> DVector<f64> {
    let ex_lo = grid.excitations[0];
    let ex_hi = *grid.excitations.last().unwrap();
    let em_lo = grid.emissions[0];
    let em_hi = *grid.emissions.last().unwrap();
    let ex_range = (ex_hi - ex_lo).max(1.0);
    let em_range = (em_hi - em_lo).max(1.0);

    let mut centers = Vec::with_capacity(bumps);
    for _ in 0..bumps {
        let cx = ex_lo + rng.gen::<f64>() * ex_range;
        let cy = em_lo + rng.gen::<f64>() * em_range;
        let sx = (0.12 + 0.25 * rng.gen::<f64>()) * ex_range;
        let sy = (0.12 + 0.25 * rng.gen::<f64>()) * em_range;
        let amp = 0.4 + 0.6 * rng.gen::<f64>();
        centers.push((cx, cy, sx, sy, amp));
    }
    let mut values = DVector::zeros(grid.feature_count());
    let mut idx = 0;
    for &ex in &grid.excitations {
        for &em in &grid.emissions {
            let mut v = 0.0;
            for &(cx, cy, sx, sy, amp) in &centers {
                let dx = (ex - cx) / sx;
                let dy = (em - cy) / sy;
                v += amp * (-0.5 * (dx * dx + dy * dy)).exp();
            }
            values[idx] = v;
            idx += 1;
        }
    }
    values
}

/// Generate a synthetic dictionary with `k` categories of `n_per_category`
/// single-source profiles each, on a `p`-feature wavelength grid.
/// Deterministic given the seed.
pub fn synthetic_dictionary(
    p: usize,
    n_per_category: usize,
    k: usize,
    seed: u64,
) -> Result<(Dictionary, SourceDesign)> {
    if k == 0 || n_per_category < 2 {
        return Err(Error::invalid(
            "need at least one category and two profiles per category",
        ));
    }
    let n = k * n_per_category;
    if n >= p {
        return Err(Error::invalid(format!(
            "profile count n = {n} must stay below the feature count p = {p}"
        )));
    }
    let grid = WavelengthGrid::for_feature_count(p)?;

    let mut means = Vec::with_capacity(k);
    for cat in 0..k {
        let mut rng = derive_rng(seed, &[domain::DICTIONARY, 1, cat as u64]);
        let mut mu = random_landscape(&grid, BUMPS_PER_MEAN, &mut rng);
        mu.add_scalar_mut(0.05);
        means.push(mu);
    }

    let mut factors = Vec::with_capacity(FACTOR_COUNT);
    for f in 0..FACTOR_COUNT {
        let mut rng = derive_rng(seed, &[domain::DICTIONARY, 2, f as u64]);
        let mut b = random_landscape(&grid, 2, &mut rng);
        let norm = b.norm();
        if norm > 0.0 {
            b /= norm;
        }
        factors.push(b * FACTOR_SCALE * FACTOR_DECAY.powi(f as i32));
    }

    let mut values = DMatrix::zeros(p, n);
    let mut labels = Vec::with_capacity(n);
    let category_names: Vec<String> = (1..=k).map(|c| format!("src{c}")).collect();
    let mut profile_ids = Vec::with_capacity(n);
    let mut col = 0;
    for cat in 0..k {
        for rep in 0..n_per_category {
            let mut rng = derive_rng(seed, &[domain::DICTIONARY, 3, col as u64]);
            let mut x = means[cat].clone();
            for b in &factors {
                let w: f64 = rng.sample(StandardNormal);
                x.axpy(w, b, 1.0);
            }
            for v in x.iter_mut() {
                let eps: f64 = rng.sample(StandardNormal);
                *v += IID_SIGMA * eps;
            }
            values.set_column(col, &x);
            labels.push(category_names[cat].clone());
            profile_ids.push(format!("{}_p{rep:02}", category_names[cat]));
            col += 1;
        }
    }

    let dict = Dictionary::new(values, grid.feature_ids(), profile_ids)?;
    let design = SourceDesign::from_labels(&labels, &category_names)?;
    Ok((dict, design))
}
