//! Sampling primitives for the simulation study: Dirichlet proportions,
//! synthetic profiles, and per-category dictionary subsampling.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::model::{Dictionary, Profile, SourceDesign};
use crate::rng::{derive_rng, domain};
use crate::simulation::population::SyntheticModel;

/// Draw proportions from the symmetric `Dirichlet(1_K / K)` distribution.
/// Deterministic given the seed; `K = 1` always yields `(1.0)`.
pub fn sample_theta(k: usize, seed: u64) -> Result<DVector<f64>> {
    if k == 0 {
        return Err(Error::invalid("need at least one category"));
    }
    let mut rng = derive_rng(seed, &[domain::THETA]);
    Ok(sample_theta_with(k, &mut rng))
}

pub(crate) fn sample_theta_with(k: usize, rng: &mut impl Rng) -> DVector<f64> {
    if k == 1 {
        return DVector::from_element(1, 1.0);
    }
    let gamma = Gamma::new(1.0 / k as f64, 1.0).expect("valid gamma shape");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return DVector::from_iterator(k, draws.iter().map(|g| g / total));
        }
    }
}

/// Draw one profile from the population model:
/// `y = M theta + ||theta|| * z` with `z ~ N(0, Sigma)`.
pub fn sample_profile(
    model: &SyntheticModel,
    theta: &DVector<f64>,
    seed: u64,
) -> Result<Profile> {
    let mut rng = derive_rng(seed, &[domain::DRAW]);
    let values = sample_profile_values(model, theta, &mut rng)?;
    Profile::fully_observed(values, model.feature_ids().to_vec())
}

pub(crate) fn sample_profile_values(
    model: &SyntheticModel,
    theta: &DVector<f64>,
    rng: &mut impl Rng,
) -> Result<DVector<f64>> {
    if theta.len() != model.n_categories() {
        return Err(Error::invalid(format!(
            "theta has {} entries but the model has {} categories",
            theta.len(),
            model.n_categories()
        )));
    }
    let noise = if model.is_noise_free() {
        DVector::zeros(model.p())
    } else {
        model.covariance().sample(rng)? * theta.norm()
    };
    Ok(model.mean() * theta + noise)
}

/// Retain `ceil(alpha * n_k)` profiles per source category, drawn uniformly
/// without replacement; selected profiles keep their dictionary order.
/// Requires single-source (indicator) design rows, `0 < alpha <= 1`, and at
/// least two retained profiles per category.
pub fn subsample_dictionary(
    dict: &Dictionary,
    design: &SourceDesign,
    alpha: f64,
    seed: u64,
) -> Result<(Dictionary, SourceDesign)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    if design.n_profiles() != dict.n() {
        return Err(Error::invalid("design does not match the dictionary"));
    }
    if alpha == 1.0 {
        return Ok((dict.clone(), design.clone()));
    }
    let labels = design.one_hot_labels().ok_or_else(|| {
        Error::invalid(
            "dictionary subsampling requires single-source profiles (indicator design rows)",
        )
    })?;
    let k = design.n_categories();
    let mut selected: Vec<usize> = Vec::new();
    for cat in 0..k {
        let members: Vec<usize> = (0..dict.n()).filter(|&i| labels[i] == cat).collect();
        let keep = (alpha * members.len() as f64).ceil() as usize;
        if keep < 2 {
            return Err(Error::invalid(format!(
                "category {:?} would retain {keep} profile(s) at alpha = {alpha}; \
                 at least 2 are needed for nonempty residuals",
                design.category_names()[cat]
            )));
        }
        let mut rng = derive_rng(seed, &[domain::SUBSAMPLE, cat as u64]);
        let mut chosen = rand::seq::index::sample(&mut rng, members.len(), keep).into_vec();
        chosen.sort_unstable();
        selected.extend(chosen.into_iter().map(|j| members[j]));
    }
    selected.sort_unstable();

    let mut values = nalgebra::DMatrix::zeros(dict.p(), selected.len());
    let mut profile_ids = Vec::with_capacity(selected.len());
    let mut sub_labels = Vec::with_capacity(selected.len());
    for (dst, &src) in selected.iter().enumerate() {
        values.set_column(dst, &dict.values().column(src));
        profile_ids.push(dict.profile_ids()[src].clone());
        sub_labels.push(design.category_names()[labels[src]].clone());
    }
    let sub_dict = Dictionary::new(values, dict.feature_ids().to_vec(), profile_ids)?;
    let names: Vec<String> = design.category_names().to_vec();
    let sub_design = SourceDesign::from_labels(&sub_labels, &names)?;
    Ok((sub_dict, sub_design))
}
