//! CSV formats for dictionaries, source labels, and sample profiles.
//!
//! Two matrix layouts are accepted:
//!
//! * wide: header `feature_id,<profile_id>,...`, one row per feature;
//! * long EEM: header `profile_id,excitation_nm,emission_nm,intensity`,
//!   one row per (profile, excitation, emission) cell, vectorized in
//!   ascending (excitation, emission) order with canonical
//!   `ex<..>_em<..>` feature ids.
//!
//! Missing intensities are empty cells; the literal string `NaN` is
//! rejected. A feature missing in any dictionary profile is dropped from
//! every profile and from samples (shared support mask).
//!
//! Labels files carry either `profile_id,source` rows or
//! `profile_id,<category>,...` mixing-weight rows; every dictionary
//! profile must be labeled exactly once.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use apportion::eem::format_feature_id;
use apportion::model::{Dictionary, Profile, SourceDesign};
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, Result};

/// A dictionary with its design and the shared-support bookkeeping.
#[derive(Debug)]
pub struct LoadedDictionary {
    pub dict: Dictionary,
    pub design: SourceDesign,
    /// Feature ids dropped by the shared-support rule, in input order.
    pub dropped_features: Vec<String>,
    /// All feature ids seen in the matrix file, including dropped ones.
    pub feature_universe: HashSet<String>,
}

fn parse_intensity(cell: &str, context: &str) -> Result<Option<f64>> {
    let trimmed = cell.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    if trimmed.eq_ignore_ascii_case("nan") {
        return Err(CliError::validation(format!(
            "{context}: the string {trimmed:?} is not a valid intensity; encode missing values as empty cells"
        )));
    }
    trimmed
        .parse::<f64>()
        .map(Some)
        .map_err(|_| CliError::validation(format!("{context}: non-numeric cell {trimmed:?}")))
        .and_then(|v| match v {
            Some(x) if !x.is_finite() => Err(CliError::validation(format!(
                "{context}: non-finite intensity {trimmed:?}"
            ))),
            other => Ok(other),
        })
}

fn parse_wavelength(cell: &str, context: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| {
        CliError::validation(format!("{context}: non-numeric wavelength {cell:?}"))
    })?;
    if !v.is_finite() {
        return Err(CliError::validation(format!(
            "{context}: non-finite wavelength {cell:?}"
        )));
    }
    Ok(v)
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))
}

/// Feature values keyed by id, one value option per profile.
struct RawMatrix {
    profile_ids: Vec<String>,
    features: Vec<(String, Vec<Option<f64>>)>,
}

fn read_wide_matrix(path: &Path) -> Result<RawMatrix> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let profile_ids: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    if profile_ids.is_empty() {
        return Err(CliError::validation(format!(
            "{}: expected profile columns after feature_id",
            path.display()
        )));
    }
    let mut features = Vec::new();
    let mut seen = HashSet::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let feature_id = record
            .get(0)
            .ok_or_else(|| CliError::validation(format!("{}: empty row {row_idx}", path.display())))?
            .to_string();
        if feature_id.is_empty() {
            return Err(CliError::validation(format!(
                "{}: row {row_idx} has an empty feature id",
                path.display()
            )));
        }
        if !seen.insert(feature_id.clone()) {
            return Err(CliError::validation(format!(
                "{}: duplicate feature id {feature_id:?}",
                path.display()
            )));
        }
        if record.len() != profile_ids.len() + 1 {
            return Err(CliError::validation(format!(
                "{}: row {row_idx} ({feature_id}) has {} cells, expected {}",
                path.display(),
                record.len(),
                profile_ids.len() + 1
            )));
        }
        let mut values = Vec::with_capacity(profile_ids.len());
        for (j, cell) in record.iter().skip(1).enumerate() {
            let ctx = format!(
                "{}: feature {feature_id}, profile {}",
                path.display(),
                profile_ids[j]
            );
            values.push(parse_intensity(cell, &ctx)?);
        }
        features.push((feature_id, values));
    }
    Ok(RawMatrix {
        profile_ids,
        features,
    })
}

fn read_long_matrix(path: &Path) -> Result<RawMatrix> {
    let mut rdr = reader(path)?;
    let mut profile_ids: Vec<String> = Vec::new();
    let mut profile_index: HashMap<String, usize> = HashMap::new();
    // key = bit patterns of (excitation, emission); value keeps the floats
    let mut feature_order: Vec<(f64, f64)> = Vec::new();
    let mut feature_index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), Option<f64>> = HashMap::new();

    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != 4 {
            return Err(CliError::validation(format!(
                "{}: row {row_idx} has {} cells, expected 4",
                path.display(),
                record.len()
            )));
        }
        let profile_id = record.get(0).unwrap_or("").to_string();
        if profile_id.is_empty() {
            return Err(CliError::validation(format!(
                "{}: row {row_idx} has an empty profile id",
                path.display()
            )));
        }
        let ctx = format!("{}: row {row_idx} (profile {profile_id})", path.display());
        let ex = parse_wavelength(record.get(1).unwrap_or(""), &ctx)?;
        let em = parse_wavelength(record.get(2).unwrap_or(""), &ctx)?;
        let value = parse_intensity(record.get(3).unwrap_or(""), &ctx)?;

        let pid = *profile_index.entry(profile_id.clone()).or_insert_with(|| {
            profile_ids.push(profile_id.clone());
            profile_ids.len() - 1
        });
        let fkey = (ex.to_bits(), em.to_bits());
        let fid = *feature_index.entry(fkey).or_insert_with(|| {
            feature_order.push((ex, em));
            feature_order.len() - 1
        });
        if cells.insert((fid, pid), value).is_some() {
            return Err(CliError::validation(format!(
                "{ctx}: duplicate (excitation, emission) pair ({ex}, {em})"
            )));
        }
    }
    if profile_ids.is_empty() {
        return Err(CliError::validation(format!(
            "{}: no records",
            path.display()
        )));
    }

    let mut order: Vec<usize> = (0..feature_order.len()).collect();
    order.sort_by(|&a, &b| {
        let (ax, ay) = feature_order[a];
        let (bx, by) = feature_order[b];
        ax.partial_cmp(&bx)
            .expect("finite wavelengths")
            .then(ay.partial_cmp(&by).expect("finite wavelengths"))
    });
    let features = order
        .into_iter()
        .map(|fid| {
            let (ex, em) = feature_order[fid];
            let values: Vec<Option<f64>> = (0..profile_ids.len())
                .map(|pid| cells.get(&(fid, pid)).copied().flatten())
                .collect();
            (format_feature_id(ex, em), values)
        })
        .collect();
    Ok(RawMatrix {
        profile_ids,
        features,
    })
}

fn read_matrix(path: &Path) -> Result<RawMatrix> {
    let mut rdr = reader(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    drop(rdr);
    match headers.first().map(String::as_str) {
        Some("feature_id") => read_wide_matrix(path),
        Some("profile_id")
            if headers
                == ["profile_id", "excitation_nm", "emission_nm", "intensity"] =>
        {
            read_long_matrix(path)
        }
        _ => Err(CliError::validation(format!(
            "{}: unrecognized matrix header {:?}; expected `feature_id,<profile ids>` or \
             `profile_id,excitation_nm,emission_nm,intensity`",
            path.display(),
            headers.join(",")
        ))),
    }
}

enum LabelsFile {
    Labels(HashMap<String, String>),
    Weights {
        categories: Vec<String>,
        rows: HashMap<String, Vec<f64>>,
    },
}

fn read_labels(path: &Path) -> Result<LabelsFile> {
    let mut rdr = reader(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    if headers.first().map(String::as_str) != Some("profile_id") || headers.len() < 2 {
        return Err(CliError::validation(format!(
            "{}: labels header must start with profile_id",
            path.display()
        )));
    }
    let is_label_file = headers.len() == 2 && headers[1] == "source";
    let mut labels = HashMap::new();
    let mut rows = HashMap::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let profile_id = record.get(0).unwrap_or("").to_string();
        if profile_id.is_empty() {
            return Err(CliError::validation(format!(
                "{}: row {row_idx} has an empty profile id",
                path.display()
            )));
        }
        if is_label_file {
            let source = record.get(1).unwrap_or("").to_string();
            if source.is_empty() {
                return Err(CliError::validation(format!(
                    "{}: profile {profile_id} has an empty source label",
                    path.display()
                )));
            }
            if labels.insert(profile_id.clone(), source).is_some() {
                return Err(CliError::validation(format!(
                    "{}: duplicate profile id {profile_id:?}",
                    path.display()
                )));
            }
        } else {
            if record.len() != headers.len() {
                return Err(CliError::validation(format!(
                    "{}: row {row_idx} has {} cells, expected {}",
                    path.display(),
                    record.len(),
                    headers.len()
                )));
            }
            let mut weights = Vec::with_capacity(headers.len() - 1);
            for (j, cell) in record.iter().skip(1).enumerate() {
                let w: f64 = cell.parse().map_err(|_| {
                    CliError::validation(format!(
                        "{}: profile {profile_id}, category {}: non-numeric weight {cell:?}",
                        path.display(),
                        headers[j + 1]
                    ))
                })?;
                weights.push(w);
            }
            if rows.insert(profile_id.clone(), weights).is_some() {
                return Err(CliError::validation(format!(
                    "{}: duplicate profile id {profile_id:?}",
                    path.display()
                )));
            }
        }
    }
    Ok(if is_label_file {
        LabelsFile::Labels(labels)
    } else {
        LabelsFile::Weights {
            categories: headers[1..].to_vec(),
            rows,
        }
    })
}

/// Load a dictionary matrix and its labels file, applying the shared
/// support rule and validating the pairing.
pub fn load_dictionary(matrix_path: &Path, labels_path: &Path) -> Result<LoadedDictionary> {
    let raw = read_matrix(matrix_path)?;
    let feature_universe: HashSet<String> =
        raw.features.iter().map(|(id, _)| id.clone()).collect();

    let mut kept = Vec::new();
    let mut dropped_features = Vec::new();
    for (id, values) in &raw.features {
        if values.iter().all(|v| v.is_some()) {
            kept.push((id.clone(), values.clone()));
        } else {
            dropped_features.push(id.clone());
        }
    }
    let p = kept.len();
    let n = raw.profile_ids.len();
    if p <= n {
        return Err(CliError::validation(format!(
            "{}: after the shared-support mask the dictionary has p = {p} features for n = {n} \
             profiles; p must exceed n",
            matrix_path.display()
        )));
    }
    let mut values = DMatrix::zeros(p, n);
    for (i, (_, row)) in kept.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            values[(i, j)] = v.expect("kept features are fully observed");
        }
    }
    let feature_ids: Vec<String> = kept.into_iter().map(|(id, _)| id).collect();
    let dict = Dictionary::new(values, feature_ids, raw.profile_ids.clone())?;

    let design = match read_labels(labels_path)? {
        LabelsFile::Labels(map) => {
            let mut labels = Vec::with_capacity(n);
            let mut categories: Vec<String> = Vec::new();
            for pid in &raw.profile_ids {
                let label = map.get(pid).ok_or_else(|| {
                    CliError::validation(format!(
                        "{}: no label for profile {pid:?}",
                        labels_path.display()
                    ))
                })?;
                if !categories.contains(label) {
                    categories.push(label.clone());
                }
                labels.push(label.clone());
            }
            check_no_extra_profiles(map.keys(), &raw.profile_ids, labels_path)?;
            SourceDesign::from_labels(&labels, &categories)?
        }
        LabelsFile::Weights { categories, rows } => {
            let k = categories.len();
            let mut weights = DMatrix::zeros(n, k);
            for (i, pid) in raw.profile_ids.iter().enumerate() {
                let row = rows.get(pid).ok_or_else(|| {
                    CliError::validation(format!(
                        "{}: no weight row for profile {pid:?}",
                        labels_path.display()
                    ))
                })?;
                for (j, w) in row.iter().enumerate() {
                    weights[(i, j)] = *w;
                }
            }
            check_no_extra_profiles(rows.keys(), &raw.profile_ids, labels_path)?;
            SourceDesign::from_weights(weights, categories)?
        }
    };

    Ok(LoadedDictionary {
        dict,
        design,
        dropped_features,
        feature_universe,
    })
}

fn check_no_extra_profiles<'a>(
    labeled: impl Iterator<Item = &'a String>,
    known: &[String],
    path: &Path,
) -> Result<()> {
    let known: HashSet<&String> = known.iter().collect();
    for pid in labeled {
        if !known.contains(pid) {
            return Err(CliError::validation(format!(
                "{}: profile {pid:?} does not appear in the dictionary",
                path.display()
            )));
        }
    }
    Ok(())
}

/// Load a sample profile aligned to a loaded dictionary. Entries absent
/// from the file (or present with an empty intensity) are unobserved;
/// entries for dropped features are discarded by the shared-support rule.
pub fn load_profile(path: &Path, loaded: &LoadedDictionary) -> Result<Profile> {
    let mut rdr = reader(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    let mut provided: HashMap<String, Option<f64>> = HashMap::new();

    if headers == ["feature_id", "intensity"] {
        for (row_idx, record) in rdr.records().enumerate() {
            let record = record?;
            let id = record.get(0).unwrap_or("").to_string();
            if id.is_empty() {
                return Err(CliError::validation(format!(
                    "{}: row {row_idx} has an empty feature id",
                    path.display()
                )));
            }
            let ctx = format!("{}: feature {id}", path.display());
            let value = parse_intensity(record.get(1).unwrap_or(""), &ctx)?;
            if provided.insert(id.clone(), value).is_some() {
                return Err(CliError::validation(format!(
                    "{}: duplicate feature id {id:?}",
                    path.display()
                )));
            }
        }
    } else if headers == ["excitation_nm", "emission_nm", "intensity"] {
        for (row_idx, record) in rdr.records().enumerate() {
            let record = record?;
            let ctx = format!("{}: row {row_idx}", path.display());
            let ex = parse_wavelength(record.get(0).unwrap_or(""), &ctx)?;
            let em = parse_wavelength(record.get(1).unwrap_or(""), &ctx)?;
            let value = parse_intensity(record.get(2).unwrap_or(""), &ctx)?;
            let id = format_feature_id(ex, em);
            if provided.insert(id.clone(), value).is_some() {
                return Err(CliError::validation(format!(
                    "{ctx}: duplicate (excitation, emission) pair ({ex}, {em})"
                )));
            }
        }
    } else {
        return Err(CliError::validation(format!(
            "{}: unrecognized sample header {:?}; expected `feature_id,intensity` or \
             `excitation_nm,emission_nm,intensity`",
            path.display(),
            headers.join(",")
        )));
    }

    for id in provided.keys() {
        if !loaded.feature_universe.contains(id) {
            return Err(CliError::validation(format!(
                "{}: feature {id:?} does not appear in the dictionary",
                path.display()
            )));
        }
    }

    let p = loaded.dict.p();
    let mut values = DVector::zeros(p);
    let mut observed = vec![false; p];
    for (i, id) in loaded.dict.feature_ids().iter().enumerate() {
        if let Some(Some(v)) = provided.get(id) {
            values[i] = *v;
            observed[i] = true;
        }
    }
    Ok(Profile::with_mask(
        values,
        observed,
        loaded.dict.feature_ids().to_vec(),
    )?)
}

/// Render a value with 17 significant digits so the decimal text
/// round-trips bit-exactly.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Wide-format CSV for a dictionary, bit-exact on round trip.
pub fn dictionary_to_csv(dict: &Dictionary) -> String {
    let mut out = String::from("feature_id");
    for pid in dict.profile_ids() {
        let _ = write!(out, ",{pid}");
    }
    out.push('\n');
    for (i, fid) in dict.feature_ids().iter().enumerate() {
        let _ = write!(out, "{fid}");
        for j in 0..dict.n() {
            let _ = write!(out, ",{}", format_value(dict.values()[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// `feature_id,intensity` CSV for a profile; unobserved entries are empty
/// cells. Bit-exact on round trip.
pub fn profile_to_csv(profile: &Profile) -> String {
    let mut out = String::from("feature_id,intensity\n");
    for (i, fid) in profile.feature_ids().iter().enumerate() {
        if profile.observed()[i] {
            let _ = writeln!(out, "{fid},{}", format_value(profile.values()[i]));
        } else {
            let _ = writeln!(out, "{fid},");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    const FIXTURE_DICT: &str = "feature_id,p1,p2,p3\nf1,1,0,0\nf2,0,1,0\nf3,0,1,1\nf4,0,0,0\n";
    const FIXTURE_LABELS: &str = "profile_id,source\np1,s1\np2,s1\np3,s2\n";

    #[test]
    fn wide_fixture_round_trips() {
        let dict_file = write_temp(FIXTURE_DICT);
        let labels_file = write_temp(FIXTURE_LABELS);
        let loaded = load_dictionary(dict_file.path(), labels_file.path()).unwrap();
        assert_eq!(loaded.dict.p(), 4);
        assert_eq!(loaded.dict.n(), 3);
        assert_eq!(loaded.design.category_names(), ["s1", "s2"]);
        assert!(loaded.dropped_features.is_empty());
        assert_eq!(loaded.dict.values()[(0, 0)], 1.0);
        assert_eq!(loaded.dict.values()[(2, 2)], 1.0);
    }

    #[test]
    fn labels_missing_profile_is_named() {
        let dict_file = write_temp(FIXTURE_DICT);
        let labels_file = write_temp("profile_id,source\np1,s1\np2,s1\n");
        let err = load_dictionary(dict_file.path(), labels_file.path()).unwrap_err();
        assert!(err.to_string().contains("p3"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn weight_labels_are_passed_through() {
        let dict_file = write_temp(FIXTURE_DICT);
        let labels_file = write_temp("profile_id,a,b\np1,0.5,0.5\np2,1,0\np3,0,1\n");
        let loaded = load_dictionary(dict_file.path(), labels_file.path()).unwrap();
        assert_eq!(loaded.design.category_names(), ["a", "b"]);
        assert_eq!(loaded.design.weights()[(0, 0)], 0.5);
    }

    #[test]
    fn long_form_applies_shared_support() {
        // profile q2 is missing the (250, 310) cell and q1 carries an empty
        // intensity at (260, 300): both features must be dropped everywhere.
        let mut rows = String::from("profile_id,excitation_nm,emission_nm,intensity\n");
        for (pid, bias) in [("q1", 0.0), ("q2", 1.0), ("q3", 2.0)] {
            for (ex, em, v) in [
                (250.0, 300.0, 1.0),
                (250.0, 310.0, 2.0),
                (260.0, 300.0, 3.0),
                (260.0, 310.0, 4.0),
                (270.0, 300.0, 5.0),
                (270.0, 310.0, 6.0),
            ] {
                if pid == "q2" && ex == 250.0 && em == 310.0 {
                    continue;
                }
                if pid == "q1" && ex == 260.0 && em == 300.0 {
                    rows.push_str("q1,260,300,\n");
                    continue;
                }
                rows.push_str(&format!("{pid},{ex},{em},{}\n", v + bias * v));
            }
        }
        let dict_file = write_temp(&rows);
        let labels_file = write_temp("profile_id,source\nq1,s1\nq2,s1\nq3,s2\n");
        let loaded = load_dictionary(dict_file.path(), labels_file.path()).unwrap();
        assert_eq!(loaded.dict.p(), 4);
        assert_eq!(
            loaded.dropped_features,
            vec!["ex250_em310".to_string(), "ex260_em300".to_string()]
        );
        assert_eq!(
            loaded.dict.feature_ids(),
            ["ex250_em300", "ex260_em310", "ex270_em300", "ex270_em310"]
        );
    }

    #[test]
    fn nan_intensity_is_rejected() {
        let dict_file = write_temp("feature_id,p1,p2\nf1,1,NaN\nf2,0,1\nf3,1,1\n");
        let labels_file = write_temp(FIXTURE_LABELS);
        let err = load_dictionary(dict_file.path(), labels_file.path()).unwrap_err();
        assert!(err.to_string().contains("NaN"), "{err}");
    }

    #[test]
    fn sample_alignment_and_unknown_features() {
        let dict_file = write_temp(FIXTURE_DICT);
        let labels_file = write_temp(FIXTURE_LABELS);
        let loaded = load_dictionary(dict_file.path(), labels_file.path()).unwrap();

        let sample = write_temp("feature_id,intensity\nf1,1\nf2,\nf4,0.5\n");
        let prof = load_profile(sample.path(), &loaded).unwrap();
        assert_eq!(prof.observed(), [true, false, false, true]);
        assert_eq!(prof.values()[0], 1.0);
        assert_eq!(prof.values()[3], 0.5);

        let bad = write_temp("feature_id,intensity\nf9,1\n");
        let err = load_profile(bad.path(), &loaded).unwrap_err();
        assert!(err.to_string().contains("f9"), "{err}");
    }

    #[test]
    fn writers_round_trip_bit_exactly() {
        let values = DMatrix::from_column_slice(
            3,
            2,
            &[
                0.1234567890123456,
                -7.062513059164629e-108,
                3.0,
                1.0 / 3.0,
                2.5e300,
                -0.0,
            ],
        );
        let dict = Dictionary::new(
            values.clone(),
            vec!["f1".into(), "f2".into(), "f3".into()],
            vec!["p1".into(), "p2".into()],
        )
        .unwrap();
        let csv_text = dictionary_to_csv(&dict);
        let dict_file = write_temp(&csv_text);
        let labels_file = write_temp("profile_id,source\np1,a\np2,b\n");
        let reloaded = load_dictionary(dict_file.path(), labels_file.path()).unwrap();
        assert_eq!(reloaded.dict.values(), &values);

        let prof = Profile::with_mask(
            DVector::from_row_slice(&[1.0 / 3.0, 0.0, -2.75e-9]),
            vec![true, false, true],
            dict.feature_ids().to_vec(),
        )
        .unwrap();
        let text = profile_to_csv(&prof);
        let sample = write_temp(&text);
        let re = load_profile(sample.path(), &reloaded).unwrap();
        assert_eq!(re.observed(), prof.observed());
        assert_eq!(re.values()[0], prof.values()[0]);
        assert_eq!(re.values()[2], prof.values()[2]);
    }
}
