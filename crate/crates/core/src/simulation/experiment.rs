//! The Monte Carlo experiment harness.
//!
//! One experiment evaluates estimators (or predictors, or standard errors)
//! over a grid of Dirichlet-drawn proportion vectors and per-category
//! dictionary subsamples. Every random draw comes from a stream derived
//! from the master seed and the cell coordinates, so reports are
//! bit-identical regardless of worker-thread count or scheduling; cells run
//! in parallel with rayon.
//!
//! Modes:
//!
//! * `estimation`: RMSE of ATR, RTS, oracle OLS, and oracle GLS estimates
//!   per (theta, alpha) cell;
//! * `prediction`: RMSE of the ATR and RTS predictors on a fixed
//!   excitation mask;
//! * `stderr`: per category, the mean reported RTS standard error next to
//!   the empirical standard deviation of the RTS estimate.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::eem::mask_for_excitations;
use crate::error::{Error, Result};
use crate::estimators::GlsSolver;
use crate::linalg::{check_full_column_rank, QrLs};
use crate::model::{decompose, ApportionmentBasis, Dictionary, SourceDesign};
use crate::rng::{derive_rng, derive_seed, domain};
use crate::simulation::population::{fit_population_from_basis, SyntheticModel};
use crate::simulation::sampling::{sample_profile_values, sample_theta_with, subsample_dictionary};
use crate::variability::design_gram_inverse_form;

/// What an experiment measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentMode {
    /// RMSE of the coefficient estimates.
    Estimation,
    /// RMSE of the missing-entry predictors.
    Prediction,
    /// Reported standard error versus empirical standard deviation.
    Stderr,
}

impl ExperimentMode {
    /// Stable name used in configs and reports.
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentMode::Estimation => "estimation",
            ExperimentMode::Prediction => "prediction",
            ExperimentMode::Stderr => "stderr",
        }
    }

    /// Parse a config-file mode name.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "estimation" => Ok(ExperimentMode::Estimation),
            "prediction" => Ok(ExperimentMode::Prediction),
            "stderr" => Ok(ExperimentMode::Stderr),
            other => Err(Error::invalid(format!(
                "unknown experiment mode {other:?} (expected estimation, prediction, or stderr)"
            ))),
        }
    }
}

/// Configuration of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// What to measure.
    pub mode: ExperimentMode,
    /// Number of Dirichlet theta evaluation points.
    pub theta_count: usize,
    /// Dictionary retention fractions, each in (0, 1].
    pub alphas: Vec<f64>,
    /// Monte Carlo replicates per (theta, alpha) cell.
    pub replicates: usize,
    /// Excitation wavelengths whose features are withheld (prediction mode).
    pub mask_excitations: Vec<f64>,
    /// Master seed; all randomness derives from it.
    pub seed: u64,
    /// Optional replacement weight when the shrinkage calibration puts zero
    /// weight on the residual structure.
    pub nu_floor: Option<f64>,
    /// Test-only population override (e.g. a noise-free model); `None`
    /// calibrates from the dictionary.
    pub model_override: Option<SyntheticModel>,
}

/// One row of the experiment report.
#[derive(Debug, Clone)]
pub struct ReportRow {
    /// Dictionary retention fraction.
    pub alpha: f64,
    /// Index of the theta evaluation point.
    pub theta_id: usize,
    /// Estimator or predictor name.
    pub method: String,
    /// One of `rmse_theta`, `rmse_prediction`, `sd_rts`, `mean_se_rts`.
    pub metric_name: String,
    /// Source category, present only for per-category metrics.
    pub category: Option<String>,
    /// Metric value.
    pub value: f64,
    /// Replicates behind the value.
    pub replicates: usize,
    /// Master seed of the run.
    pub seed: u64,
}

/// Canonically sorted experiment results.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    /// Rows, sorted by (alpha, theta, method, metric, category).
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    /// Render as CSV, byte-identical for identical rows.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("alpha,theta_id,method,metric_name,category,value,replicates,seed\n");
        for row in &self.rows {
            let category = row.category.as_deref().unwrap_or("");
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.alpha,
                row.theta_id,
                row.method,
                row.metric_name,
                category,
                row.value,
                row.replicates,
                row.seed
            ));
        }
        out
    }
}

/// Mean and spread of the per-replicate squared errors of one method in one
/// cell; `rmse = sqrt(mean_sq)`.
#[derive(Debug, Clone, Copy)]
pub struct MethodStats {
    /// Root mean squared error.
    pub rmse: f64,
    /// Mean of the squared errors.
    pub mean_sq: f64,
    /// Sample variance of the squared errors.
    pub var_sq: f64,
}

/// Per-cell estimation statistics, including the paired oracle comparison.
#[derive(Debug, Clone)]
pub struct EstimationCell {
    /// Retention fraction of the cell.
    pub alpha: f64,
    /// Theta evaluation point of the cell.
    pub theta_id: usize,
    /// ATR statistics.
    pub atr: MethodStats,
    /// RTS statistics.
    pub rts: MethodStats,
    /// Oracle OLS statistics.
    pub oracle_ols: MethodStats,
    /// Oracle GLS statistics.
    pub oracle_gls: MethodStats,
    /// Mean of the paired per-replicate difference `sq_ols - sq_gls`.
    pub diff_ols_gls_mean: f64,
    /// Sample variance of that difference.
    pub diff_ols_gls_var: f64,
}

/// Per-cell prediction statistics.
#[derive(Debug, Clone)]
pub struct PredictionCell {
    /// Retention fraction of the cell.
    pub alpha: f64,
    /// Theta evaluation point of the cell.
    pub theta_id: usize,
    /// ATR predictor statistics.
    pub atr: MethodStats,
    /// RTS predictor statistics.
    pub rts: MethodStats,
}

/// Per-(cell, category) standard-error statistics.
#[derive(Debug, Clone)]
pub struct StderrCell {
    /// Retention fraction of the cell.
    pub alpha: f64,
    /// Theta evaluation point of the cell.
    pub theta_id: usize,
    /// Source category name.
    pub category: String,
    /// Empirical standard deviation of the RTS estimate entry.
    pub sd: f64,
    /// Mean reported standard error.
    pub mean_se: f64,
    /// Sample variance of the reported standard errors.
    pub var_se: f64,
}

/// Report plus the per-cell statistics the acceptance checks need.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// Canonical report rows.
    pub report: ExperimentReport,
    /// Estimation-mode cells (empty otherwise).
    pub estimation: Vec<EstimationCell>,
    /// Prediction-mode cells (empty otherwise).
    pub prediction: Vec<PredictionCell>,
    /// Stderr-mode cells (empty otherwise).
    pub stderr: Vec<StderrCell>,
}

fn with_cell_context(err: Error, alpha: f64, theta_id: usize, replicate: usize) -> Error {
    let ctx = format!("cell alpha = {alpha}, theta {theta_id}, replicate {replicate}");
    match err {
        Error::Invalid(m) => Error::Invalid(format!("{ctx}: {m}")),
        Error::SingularCovariance(m) => Error::SingularCovariance(format!("{ctx}: {m}")),
        Error::DegenerateCalibration(m) => Error::DegenerateCalibration(format!("{ctx}: {m}")),
        Error::RankDeficient {
            what,
            sigma_min,
            tol,
        } => Error::RankDeficient {
            what: format!("{ctx}: {what}"),
            sigma_min,
            tol,
        },
    }
}

/// Welford-free accumulator over a fixed replicate count.
#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    sum: f64,
    sum_sq: f64,
    n: usize,
}

impl Accumulator {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
        self.n += 1;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    fn stats(&self) -> MethodStats {
        MethodStats {
            rmse: self.mean().sqrt(),
            mean_sq: self.mean(),
            var_sq: self.variance(),
        }
    }
}

struct PredictionState {
    observed: Vec<usize>,
    unobserved: Vec<usize>,
    qr_x_obs: QrLs,
    x_unobs: DMatrix<f64>,
    qr_m_obs: QrLs,
    m_unobs: DMatrix<f64>,
}

struct AlphaState {
    alpha: f64,
    design: SourceDesign,
    basis: ApportionmentBasis,
    qr_means: QrLs,
    gram_design: DMatrix<f64>,
    residual_dof: f64,
    prediction: Option<PredictionState>,
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), m.ncols());
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).copy_from(&m.row(src));
    }
    out
}

fn prepare_alpha(
    dict: &Dictionary,
    design: &SourceDesign,
    config: &ExperimentConfig,
    alpha_index: usize,
    mask: &[usize],
) -> Result<AlphaState> {
    let alpha = config.alphas[alpha_index];
    let seed = derive_seed(config.seed, &[domain::SUBSAMPLE, alpha_index as u64]);
    let (sub_dict, sub_design) = subsample_dictionary(dict, design, alpha, seed)?;
    let basis = decompose(&sub_dict, &sub_design)?;
    check_full_column_rank(basis.group_means(), "group means of the subsample")?;
    let qr_means = QrLs::new(basis.group_means());
    let gram_design = design_gram_inverse_form(&sub_design, &basis)?;
    let residual_dof = (sub_dict.p() - sub_dict.n()) as f64;

    let prediction = if config.mode == ExperimentMode::Prediction {
        let unobserved: Vec<usize> = mask.to_vec();
        let is_masked: Vec<bool> = {
            let mut flags = vec![false; sub_dict.p()];
            for &i in mask {
                flags[i] = true;
            }
            flags
        };
        let observed: Vec<usize> = (0..sub_dict.p()).filter(|&i| !is_masked[i]).collect();
        let x_obs = select_rows(sub_dict.values(), &observed);
        check_full_column_rank(&x_obs, "observed dictionary rows (insufficient observed coverage)")?;
        let m_obs = select_rows(basis.group_means(), &observed);
        check_full_column_rank(&m_obs, "observed rows of the group means")?;
        Some(PredictionState {
            qr_x_obs: QrLs::new(&x_obs),
            x_unobs: select_rows(sub_dict.values(), &unobserved),
            qr_m_obs: QrLs::new(&m_obs),
            m_unobs: select_rows(basis.group_means(), &unobserved),
            observed,
            unobserved,
        })
    } else {
        None
    };

    Ok(AlphaState {
        alpha,
        design: sub_design,
        basis,
        qr_means,
        gram_design,
        residual_dof,
        prediction,
    })
}

enum OracleGlsState {
    Solver(GlsSolver),
    NoiseFree,
}

struct OracleState {
    qr_mean: QrLs,
    gls: OracleGlsState,
}

fn validate_config(config: &ExperimentConfig) -> Result<()> {
    if config.theta_count == 0 {
        return Err(Error::invalid("theta_count must be at least 1"));
    }
    if config.replicates == 0 {
        return Err(Error::invalid("replicates must be at least 1"));
    }
    if config.mode == ExperimentMode::Stderr && config.replicates < 2 {
        return Err(Error::invalid(
            "stderr mode needs at least 2 replicates to form a standard deviation",
        ));
    }
    if config.alphas.is_empty() {
        return Err(Error::invalid("alphas must be non-empty"));
    }
    for (i, &a) in config.alphas.iter().enumerate() {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::invalid(format!(
                "alpha[{i}] = {a} must lie in (0, 1]"
            )));
        }
        if config.alphas[..i].contains(&a) {
            return Err(Error::invalid(format!("alpha {a} appears twice")));
        }
    }
    if config.mode == ExperimentMode::Prediction && config.mask_excitations.is_empty() {
        return Err(Error::invalid(
            "prediction mode needs a mask_excitation list",
        ));
    }
    Ok(())
}

/// Run one experiment. Deterministic for a fixed config regardless of the
/// rayon thread count; a failing replicate aborts the run with its cell
/// coordinates attached.
pub fn run_experiment(
    dict: &Dictionary,
    design: &SourceDesign,
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    validate_config(config)?;
    let full_basis = decompose(dict, design)?;
    let model = match &config.model_override {
        Some(m) => {
            if m.p() != dict.p() || m.n_categories() != design.n_categories() {
                return Err(Error::invalid("model override does not match the dictionary"));
            }
            m.clone()
        }
        None => fit_population_from_basis(dict, design, &full_basis, config.nu_floor)?,
    };

    let mask = if config.mode == ExperimentMode::Prediction {
        let m = mask_for_excitations(dict.feature_ids(), &config.mask_excitations)?;
        if m.len() == dict.p() {
            return Err(Error::invalid("the excitation mask withholds every feature"));
        }
        m
    } else {
        Vec::new()
    };

    let thetas: Vec<DVector<f64>> = (0..config.theta_count)
        .map(|t| {
            let mut rng = derive_rng(config.seed, &[domain::THETA, t as u64]);
            sample_theta_with(design.n_categories(), &mut rng)
        })
        .collect();

    check_full_column_rank(model.mean(), "population mean matrix")?;
    let oracle = OracleState {
        qr_mean: QrLs::new(model.mean()),
        gls: if model.is_noise_free() {
            OracleGlsState::NoiseFree
        } else {
            OracleGlsState::Solver(GlsSolver::new(model.mean(), model.covariance())?)
        },
    };

    let alpha_states: Vec<AlphaState> = (0..config.alphas.len())
        .map(|a| prepare_alpha(dict, design, config, a, &mask))
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..config.alphas.len())
        .flat_map(|a| (0..config.theta_count).map(move |t| (a, t)))
        .collect();

    let mut estimation = Vec::new();
    let mut prediction = Vec::new();
    let mut stderr = Vec::new();

    match config.mode {
        ExperimentMode::Estimation => {
            estimation = cells
                .par_iter()
                .map(|&(a, t)| run_estimation_cell(&alpha_states[a], &oracle, &model, &thetas[t], config, a, t))
                .collect::<Result<Vec<_>>>()?;
        }
        ExperimentMode::Prediction => {
            prediction = cells
                .par_iter()
                .map(|&(a, t)| run_prediction_cell(&alpha_states[a], &model, &thetas[t], config, a, t))
                .collect::<Result<Vec<_>>>()?;
        }
        ExperimentMode::Stderr => {
            stderr = cells
                .par_iter()
                .map(|&(a, t)| run_stderr_cell(&alpha_states[a], &model, &thetas[t], config, a, t))
                .collect::<Result<Vec<Vec<_>>>>()?
                .into_iter()
                .flatten()
                .collect();
        }
    }

    let mut rows = Vec::new();
    for cell in &estimation {
        for (method, stats) in [
            ("ATR", &cell.atr),
            ("RTS", &cell.rts),
            ("ORACLE_OLS", &cell.oracle_ols),
            ("ORACLE_GLS", &cell.oracle_gls),
        ] {
            rows.push(ReportRow {
                alpha: cell.alpha,
                theta_id: cell.theta_id,
                method: method.to_string(),
                metric_name: "rmse_theta".to_string(),
                category: None,
                value: stats.rmse,
                replicates: config.replicates,
                seed: config.seed,
            });
        }
    }
    for cell in &prediction {
        for (method, stats) in [("ATR", &cell.atr), ("RTS", &cell.rts)] {
            rows.push(ReportRow {
                alpha: cell.alpha,
                theta_id: cell.theta_id,
                method: method.to_string(),
                metric_name: "rmse_prediction".to_string(),
                category: None,
                value: stats.rmse,
                replicates: config.replicates,
                seed: config.seed,
            });
        }
    }
    for cell in &stderr {
        for (metric, value) in [("sd_rts", cell.sd), ("mean_se_rts", cell.mean_se)] {
            rows.push(ReportRow {
                alpha: cell.alpha,
                theta_id: cell.theta_id,
                method: "RTS".to_string(),
                metric_name: metric.to_string(),
                category: Some(cell.category.clone()),
                value,
                replicates: config.replicates,
                seed: config.seed,
            });
        }
    }
    rows.sort_by(|x, y| {
        x.alpha
            .partial_cmp(&y.alpha)
            .expect("finite alpha")
            .then(x.theta_id.cmp(&y.theta_id))
            .then(x.method.cmp(&y.method))
            .then(x.metric_name.cmp(&y.metric_name))
            .then(x.category.cmp(&y.category))
    });
    for row in &rows {
        if !row.value.is_finite() || row.value < 0.0 {
            return Err(Error::SingularCovariance(format!(
                "non-finite or negative report value for alpha {}, theta {}, {} {}",
                row.alpha, row.theta_id, row.method, row.metric_name
            )));
        }
    }

    Ok(ExperimentOutcome {
        report: ExperimentReport { rows },
        estimation,
        prediction,
        stderr,
    })
}

fn run_estimation_cell(
    state: &AlphaState,
    oracle: &OracleState,
    model: &SyntheticModel,
    theta: &DVector<f64>,
    config: &ExperimentConfig,
    alpha_index: usize,
    theta_id: usize,
) -> Result<EstimationCell> {
    let mut acc_atr = Accumulator::default();
    let mut acc_rts = Accumulator::default();
    let mut acc_ols = Accumulator::default();
    let mut acc_gls = Accumulator::default();
    let mut acc_diff = Accumulator::default();
    for r in 0..config.replicates {
        let mut run = || -> Result<()> {
            let mut rng = derive_rng(
                config.seed,
                &[domain::DRAW, alpha_index as u64, theta_id as u64, r as u64],
            );
            let y = sample_profile_values(model, theta, &mut rng)?;
            let th_atr = state.qr_means.solve(&y)?;
            let beta = state.basis.gram_qr().solve(&y)?;
            let th_rts = state.design.weights().tr_mul(&beta);
            let th_ols = oracle.qr_mean.solve(&y)?;
            let th_gls = match &oracle.gls {
                OracleGlsState::Solver(s) => s.theta(&y),
                OracleGlsState::NoiseFree => th_ols.clone(),
            };
            let sq_atr = (th_atr - theta).norm_squared();
            let sq_rts = (th_rts - theta).norm_squared();
            let sq_ols = (th_ols - theta).norm_squared();
            let sq_gls = (th_gls - theta).norm_squared();
            acc_atr.push(sq_atr);
            acc_rts.push(sq_rts);
            acc_ols.push(sq_ols);
            acc_gls.push(sq_gls);
            acc_diff.push(sq_ols - sq_gls);
            Ok(())
        };
        run().map_err(|e| with_cell_context(e, state.alpha, theta_id, r))?;
    }
    Ok(EstimationCell {
        alpha: state.alpha,
        theta_id,
        atr: acc_atr.stats(),
        rts: acc_rts.stats(),
        oracle_ols: acc_ols.stats(),
        oracle_gls: acc_gls.stats(),
        diff_ols_gls_mean: acc_diff.mean(),
        diff_ols_gls_var: acc_diff.variance(),
    })
}

fn run_prediction_cell(
    state: &AlphaState,
    model: &SyntheticModel,
    theta: &DVector<f64>,
    config: &ExperimentConfig,
    alpha_index: usize,
    theta_id: usize,
) -> Result<PredictionCell> {
    let pred = state
        .prediction
        .as_ref()
        .expect("prediction state prepared for prediction mode");
    let mut acc_atr = Accumulator::default();
    let mut acc_rts = Accumulator::default();
    for r in 0..config.replicates {
        let mut run = || -> Result<()> {
            let mut rng = derive_rng(
                config.seed,
                &[domain::DRAW, alpha_index as u64, theta_id as u64, r as u64],
            );
            let y = sample_profile_values(model, theta, &mut rng)?;
            let y_obs = DVector::from_iterator(
                pred.observed.len(),
                pred.observed.iter().map(|&i| y[i]),
            );
            let truth = DVector::from_iterator(
                pred.unobserved.len(),
                pred.unobserved.iter().map(|&i| y[i]),
            );
            let yhat_rts = &pred.x_unobs * pred.qr_x_obs.solve(&y_obs)?;
            let yhat_atr = &pred.m_unobs * pred.qr_m_obs.solve(&y_obs)?;
            acc_rts.push((yhat_rts - &truth).norm_squared());
            acc_atr.push((yhat_atr - &truth).norm_squared());
            Ok(())
        };
        run().map_err(|e| with_cell_context(e, state.alpha, theta_id, r))?;
    }
    Ok(PredictionCell {
        alpha: state.alpha,
        theta_id,
        atr: acc_atr.stats(),
        rts: acc_rts.stats(),
    })
}

fn run_stderr_cell(
    state: &AlphaState,
    model: &SyntheticModel,
    theta: &DVector<f64>,
    config: &ExperimentConfig,
    alpha_index: usize,
    theta_id: usize,
) -> Result<Vec<StderrCell>> {
    let k = state.design.n_categories();
    let mut acc_theta = vec![Accumulator::default(); k];
    let mut acc_se = vec![Accumulator::default(); k];
    for r in 0..config.replicates {
        let mut run = || -> Result<()> {
            let mut rng = derive_rng(
                config.seed,
                &[domain::DRAW, alpha_index as u64, theta_id as u64, r as u64],
            );
            let y = sample_profile_values(model, theta, &mut rng)?;
            let beta = state.basis.gram_qr().solve(&y)?;
            let th_rts = state.design.weights().tr_mul(&beta);
            let resid = state.basis.gram_qr().residual(&y);
            let scale = resid.norm_squared() / state.residual_dof;
            for j in 0..k {
                acc_theta[j].push(th_rts[j]);
                acc_se[j].push((scale * state.gram_design[(j, j)]).sqrt());
            }
            Ok(())
        };
        run().map_err(|e| with_cell_context(e, state.alpha, theta_id, r))?;
    }
    Ok((0..k)
        .map(|j| StderrCell {
            alpha: state.alpha,
            theta_id,
            category: state.design.category_names()[j].clone(),
            sd: acc_theta[j].variance().sqrt(),
            mean_se: acc_se[j].mean(),
            var_se: acc_se[j].variance(),
        })
        .collect())
}
