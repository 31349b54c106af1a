//! Feature-id conventions for excitation-emission data.
//!
//! A feature of an EEM profile is an (excitation nm, emission nm) pair.
//! Vectorized profiles order features ascending by excitation, then
//! emission, and name them `ex<excitation>_em<emission>` with the shortest
//! round-trip decimal rendering (so `350` rather than `350.0`).

use crate::error::{Error, Result};

/// Canonical feature id for an (excitation, emission) pair.
pub fn format_feature_id(excitation_nm: f64, emission_nm: f64) -> String {
    format!("ex{excitation_nm}_em{emission_nm}")
}

/// Parse a canonical EEM feature id back into its wavelengths.
pub fn parse_feature_id(id: &str) -> Option<(f64, f64)> {
    let rest = id.strip_prefix("ex")?;
    let (ex, em) = rest.split_once("_em")?;
    let ex: f64 = ex.parse().ok()?;
    let em: f64 = em.parse().ok()?;
    if ex.is_finite() && em.is_finite() {
        Some((ex, em))
    } else {
        None
    }
}

fn matches_wavelength(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

/// Indices of all features whose excitation wavelength appears in
/// `excitations`. Every feature id must be in canonical EEM form, and every
/// requested wavelength must match at least one feature.
pub fn mask_for_excitations(feature_ids: &[String], excitations: &[f64]) -> Result<Vec<usize>> {
    if excitations.is_empty() {
        return Err(Error::invalid("excitation mask list is empty"));
    }
    let mut parsed = Vec::with_capacity(feature_ids.len());
    for id in feature_ids {
        let (ex, _) = parse_feature_id(id).ok_or_else(|| {
            Error::invalid(format!(
                "feature id {id:?} is not in ex<excitation>_em<emission> form; \
                 excitation masking needs EEM feature ids"
            ))
        })?;
        parsed.push(ex);
    }
    for &want in excitations {
        if !parsed.iter().any(|&ex| matches_wavelength(ex, want)) {
            return Err(Error::invalid(format!(
                "no feature has excitation wavelength {want}"
            )));
        }
    }
    Ok((0..feature_ids.len())
        .filter(|&i| excitations.iter().any(|&want| matches_wavelength(parsed[i], want)))
        .collect())
}
