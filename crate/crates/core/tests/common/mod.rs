#![allow(dead_code)]

//! Shared helpers for the integration and acceptance suites.

use apportion::model::{Dictionary, Profile, SourceDesign};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// The hand-checkable reference instance:
/// `X = [e1, e2 + e3, e3]` in `R^4`, labels `(s1, s1, s2)`.
pub fn fixture() -> (Dictionary, SourceDesign) {
    let x = DMatrix::from_column_slice(
        4,
        3,
        &[
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 1.0, 0.0, //
            0.0, 0.0, 1.0, 0.0,
        ],
    );
    let dict = Dictionary::new(
        x,
        vec!["f1".into(), "f2".into(), "f3".into(), "f4".into()],
        vec!["p1".into(), "p2".into(), "p3".into()],
    )
    .unwrap();
    let design = SourceDesign::from_labels(&["s1", "s1", "s2"], &["s1", "s2"]).unwrap();
    (dict, design)
}

/// A fully observed profile aligned with `dict`.
pub fn profile(dict: &Dictionary, values: &[f64]) -> Profile {
    Profile::fully_observed(
        DVector::from_row_slice(values),
        dict.feature_ids().to_vec(),
    )
    .unwrap()
}

pub fn gaussian_vector(len: usize, rng: &mut ChaCha12Rng) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha12Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// A random full-rank instance with `K <= k_max` categories (each occupied),
/// `n <= n_max` profiles, and `p <= p_max` features, Gaussian entries.
pub fn random_instance(
    rng: &mut ChaCha12Rng,
    p_max: usize,
    n_max: usize,
    k_max: usize,
) -> (Dictionary, SourceDesign) {
    let k = rng.gen_range(1..=k_max);
    let n = rng.gen_range(k.max(2)..=n_max.max(k.max(2)));
    let p = rng.gen_range((n + 1)..=p_max.max(n + 1));
    let values = gaussian_matrix(p, n, rng);
    let feature_ids: Vec<String> = (0..p).map(|i| format!("f{i}")).collect();
    let profile_ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
    let dict = Dictionary::new(values, feature_ids, profile_ids).expect("random dictionary");

    let names: Vec<String> = (0..k).map(|c| format!("s{c}")).collect();
    let mut labels: Vec<String> = (0..n)
        .map(|i| {
            if i < k {
                names[i].clone()
            } else {
                names[rng.gen_range(0..k)].clone()
            }
        })
        .collect();
    // shuffle so the forced coverage is not positional
    for i in (1..labels.len()).rev() {
        let j = rng.gen_range(0..=i);
        labels.swap(i, j);
    }
    let design = SourceDesign::from_labels(&labels, &names).expect("random design");
    (dict, design)
}

/// A random Gaussian profile for `dict`.
pub fn random_profile(dict: &Dictionary, rng: &mut ChaCha12Rng) -> Profile {
    profile(
        dict,
        gaussian_vector(dict.p(), rng).as_slice(),
    )
}
