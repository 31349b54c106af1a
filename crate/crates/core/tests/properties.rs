//! Cross-module invariants on randomized instances.

mod common;

use apportion::estimators::{estimate_atr, estimate_fgls, estimate_rts};
use apportion::model::{decompose, Profile};
use apportion::predictors::{
    observed_theta_rts, predict_atr, predict_fgls, predict_rts, PartitionedProblem,
};
use apportion::rng::derive_rng;
use apportion::simulation::{fit_population, sample_profile, sample_theta};
use apportion::variability::subspace_bases;
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[test]
fn reparameterization_reconstructs_the_dictionary() {
    // M Aᵀ + E Nᵀ = X P_A + X (I - P_A) = X
    let mut rng = derive_rng(101, &[0]);
    for trial in 0..200 {
        let (dict, design) = random_instance(&mut rng, 60, 20, 5);
        let basis = decompose(&dict, &design).unwrap();
        let recon = basis.group_means() * design.weights().transpose()
            + basis.residuals() * basis.null_basis().transpose();
        let err = (recon - dict.values()).norm();
        assert!(
            err <= 1e-8 * dict.values().norm(),
            "trial {trial}: reconstruction error {err:.3e}"
        );
    }
}

#[test]
fn estimates_are_permutation_equivariant() {
    let mut rng = derive_rng(102, &[0]);
    for trial in 0..30 {
        let (dict, design) = random_instance(&mut rng, 40, 12, 4);
        let y = random_profile(&dict, &mut rng);
        let basis = decompose(&dict, &design).unwrap();
        let atr = estimate_atr(&basis, &y).unwrap();
        let rts = estimate_rts(&dict, &design, &y).unwrap();
        let fgls = estimate_fgls(&basis, &y, 0.37).unwrap();

        // random permutation of the profiles
        let n = dict.n();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let mut values = DMatrix::zeros(dict.p(), n);
        let mut pids = Vec::with_capacity(n);
        let mut weights = DMatrix::zeros(n, design.n_categories());
        for (dst, &src) in perm.iter().enumerate() {
            values.set_column(dst, &dict.values().column(src));
            pids.push(dict.profile_ids()[src].clone());
            weights.row_mut(dst).copy_from(&design.weights().row(src));
        }
        let dict_p =
            apportion::Dictionary::new(values, dict.feature_ids().to_vec(), pids).unwrap();
        let design_p = apportion::SourceDesign::from_weights(
            weights,
            design.category_names().to_vec(),
        )
        .unwrap();
        let basis_p = decompose(&dict_p, &design_p).unwrap();

        let atr_p = estimate_atr(&basis_p, &y).unwrap();
        let rts_p = estimate_rts(&dict_p, &design_p, &y).unwrap();
        let fgls_p = estimate_fgls(&basis_p, &y, 0.37).unwrap();
        assert!((atr.theta() - atr_p.theta()).norm() < 1e-12, "trial {trial}");
        assert!((rts.theta() - rts_p.theta()).norm() < 1e-12, "trial {trial}");
        assert!(
            (fgls.theta() - fgls_p.theta()).norm() < 1e-12,
            "trial {trial}"
        );
    }
}

#[test]
fn rts_recovers_exact_in_span_coefficients() {
    let mut rng = derive_rng(103, &[0]);
    for trial in 0..50 {
        let (dict, design) = random_instance(&mut rng, 50, 15, 4);
        let beta = gaussian_vector(dict.n(), &mut rng);
        let y_vec = dict.values() * &beta;
        let y = Profile::fully_observed(y_vec, dict.feature_ids().to_vec()).unwrap();
        let est = estimate_rts(&dict, &design, &y).unwrap();
        let expected = design.weights().tr_mul(&beta);
        assert!(
            (est.theta() - &expected).norm() <= 1e-8 * (1.0 + expected.norm()),
            "trial {trial}"
        );
    }
}

#[test]
fn fgls_limits_are_monotone_and_tight() {
    // gamma = 10^-t toward RTS and 10^t toward ATR, t = 2..=10.
    let mut rng = derive_rng(104, &[0]);
    for trial in 0..50 {
        let (dict, design) = random_instance(&mut rng, 60, 20, 5);
        if dict.n() == design.n_categories() {
            continue;
        }
        let basis = decompose(&dict, &design).unwrap();
        let y = random_profile(&dict, &mut rng);
        let rts = estimate_rts(&dict, &design, &y).unwrap();
        let atr = estimate_atr(&basis, &y).unwrap();

        let mut prev = f64::INFINITY;
        for t in 2..=10 {
            let gamma = 10f64.powi(-t);
            let gap = (estimate_fgls(&basis, &y, gamma).unwrap().theta() - rts.theta()).norm();
            assert!(
                gap <= prev * (1.0 + 1e-9) + 1e-13,
                "trial {trial}: RTS gap rose at t={t}: {gap:.3e} > {prev:.3e}"
            );
            prev = gap;
        }
        assert!(prev <= 1e-6 * (1.0 + rts.theta().norm()), "trial {trial}: {prev:.3e}");

        let mut prev = f64::INFINITY;
        for t in 2..=10 {
            let gamma = 10f64.powi(t);
            let gap = (estimate_fgls(&basis, &y, gamma).unwrap().theta() - atr.theta()).norm();
            assert!(
                gap <= prev * (1.0 + 1e-9) + 1e-13,
                "trial {trial}: ATR gap rose at t={t}: {gap:.3e} > {prev:.3e}"
            );
            prev = gap;
        }
        assert!(prev <= 1e-6 * (1.0 + atr.theta().norm()), "trial {trial}: {prev:.3e}");
    }
}

fn random_mask(p: usize, n: usize, rng: &mut rand_chacha::ChaCha12Rng) -> Vec<bool> {
    // keep at least n + 1 observed rows
    let q_max = p - n - 1;
    let q = rng.gen_range(1..=q_max.max(1)).min(q_max.max(1));
    let mut observed = vec![true; p];
    let mut masked = 0;
    while masked < q {
        let i = rng.gen_range(0..p);
        if observed[i] {
            observed[i] = false;
            masked += 1;
        }
    }
    observed
}

#[test]
fn in_span_predictions_are_exact() {
    let mut rng = derive_rng(105, &[0]);
    let mut done = 0;
    while done < 100 {
        let (dict, design) = random_instance(&mut rng, 50, 12, 4);
        if dict.p() < dict.n() + 3 {
            continue;
        }
        let basis = decompose(&dict, &design).unwrap();
        let observed = random_mask(dict.p(), dict.n(), &mut rng);

        // RTS is exact on dictionary-span targets.
        let beta = gaussian_vector(dict.n(), &mut rng);
        let full = dict.values() * &beta;
        let y = Profile::with_mask(full.clone(), observed.clone(), dict.feature_ids().to_vec())
            .unwrap();
        let prob = match PartitionedProblem::new(&dict, &basis, &y) {
            Ok(p) => p,
            Err(_) => continue, // rank-deficient observed rows; resample
        };
        let pred = predict_rts(&prob).unwrap();
        for (j, &i) in prob.unobserved_indices().iter().enumerate() {
            assert!((pred[j] - full[i]).abs() <= 1e-8 * (1.0 + full[i].abs()));
        }

        // ATR and feasible GLS are exact on group-mean-span targets.
        let coef = gaussian_vector(design.n_categories(), &mut rng);
        let full = basis.group_means() * &coef;
        let y = Profile::with_mask(full.clone(), observed, dict.feature_ids().to_vec()).unwrap();
        let prob = match PartitionedProblem::new(&dict, &basis, &y) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let pred_atr = predict_atr(&prob).unwrap();
        let pred_fgls = predict_fgls(&prob, 0.8).unwrap();
        for (j, &i) in prob.unobserved_indices().iter().enumerate() {
            assert!((pred_atr[j] - full[i]).abs() <= 1e-8 * (1.0 + full[i].abs()));
            assert!((pred_fgls[j] - full[i]).abs() <= 1e-7 * (1.0 + full[i].abs()));
        }
        done += 1;
    }
}

#[test]
fn completion_then_reestimation_is_consistent() {
    let mut rng = derive_rng(106, &[0]);
    let mut done = 0;
    while done < 30 {
        let (dict, design) = random_instance(&mut rng, 50, 12, 4);
        let basis = decompose(&dict, &design).unwrap();
        let observed = random_mask(dict.p(), dict.n(), &mut rng);
        let values = gaussian_vector(dict.p(), &mut rng);
        let y =
            Profile::with_mask(values.clone(), observed, dict.feature_ids().to_vec()).unwrap();
        let prob = match PartitionedProblem::new(&dict, &basis, &y) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let theta_obs = observed_theta_rts(&prob, &design).unwrap();
        let pred = predict_rts(&prob).unwrap();
        let mut completed = values;
        for (j, &i) in prob.unobserved_indices().iter().enumerate() {
            completed[i] = pred[j];
        }
        let completed =
            Profile::fully_observed(completed, dict.feature_ids().to_vec()).unwrap();
        let re = estimate_rts(&dict, &design, &completed).unwrap();
        assert!((re.theta() - &theta_obs).norm() <= 1e-10 * (1.0 + theta_obs.norm()));
        done += 1;
    }
}

#[test]
fn subspace_bases_stay_orthogonal_on_random_instances() {
    let mut rng = derive_rng(107, &[0]);
    for _ in 0..20 {
        let (dict, design) = random_instance(&mut rng, 40, 12, 4);
        if dict.n() == design.n_categories() {
            continue;
        }
        let basis = decompose(&dict, &design).unwrap();
        let bases = subspace_bases(&dict, &design, &basis).unwrap();
        let p = dict.p();
        assert_eq!(
            bases.u1.ncols() + bases.u2.ncols() + bases.u3.ncols(),
            p,
            "the three subspaces partition R^p"
        );
        for u in [&bases.u1, &bases.u2, &bases.u3] {
            let gram = u.tr_mul(u);
            assert!((gram - DMatrix::identity(u.ncols(), u.ncols())).norm() < 1e-10);
        }
        assert!(bases.u1.tr_mul(&bases.u2).norm() < 1e-8);
        assert!(bases.u1.tr_mul(&bases.u3).norm() < 1e-8);
        assert!(bases.u2.tr_mul(&bases.u3).norm() < 1e-8);
    }
}

#[test]
fn sampled_profiles_match_the_population_moments() {
    // p = 50 instance; 20000 draws; mean within 4 MC standard errors
    // coordinate-wise and a fixed linear functional's variance within 5%.
    let mut rng = derive_rng(108, &[0]);
    let (dict, design) = loop {
        let (d, a) = random_instance(&mut rng, 50, 12, 3);
        if d.p() == 50 && d.n() >= a.n_categories() + 2 {
            break (d, a);
        }
    };
    let model = fit_population(&dict, &design, None).unwrap();
    let theta = sample_theta(design.n_categories(), 7).unwrap();
    let mean_true = model.mean() * &theta;
    let scale2 = theta.norm_squared();

    let draws = 20_000;
    let u = gaussian_vector(dict.p(), &mut rng);
    let mut sum = DVector::zeros(dict.p());
    let mut sum_sq = DVector::zeros(dict.p());
    let mut fsum = 0.0;
    let mut fsum_sq = 0.0;
    for r in 0..draws {
        let y = sample_profile(&model, &theta, r as u64).unwrap();
        let v = y.values();
        sum += v;
        sum_sq += v.component_mul(v);
        let f = u.dot(v);
        fsum += f;
        fsum_sq += f * f;
    }
    let n = draws as f64;
    for i in 0..dict.p() {
        let mean = sum[i] / n;
        let var = (sum_sq[i] - sum[i] * sum[i] / n) / (n - 1.0);
        let se = (var / n).sqrt();
        assert!(
            (mean - mean_true[i]).abs() <= 4.0 * se,
            "coordinate {i}: mean {mean:.5} vs {:.5} (se {se:.2e})",
            mean_true[i]
        );
    }
    let fvar = (fsum_sq - fsum * fsum / n) / (n - 1.0);
    let fvar_true = scale2 * model.covariance().quad_form(&u);
    assert!(
        (fvar - fvar_true).abs() <= 0.05 * fvar_true,
        "functional variance {fvar:.5} vs {fvar_true:.5}"
    );
}
