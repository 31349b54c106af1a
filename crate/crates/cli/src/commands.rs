//! Subcommand definitions and execution.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use apportion::eem::mask_for_excitations;
use apportion::estimators::{estimate_atr, estimate_fgls, estimate_rts, Estimate};
use apportion::model::{decompose, ApportionmentBasis, Profile};
use apportion::predictors::{
    observed_theta_atr, observed_theta_fgls, observed_theta_rts, predict_atr, predict_fgls,
    predict_rts, PartitionedProblem,
};
use apportion::rng::RNG_ALGORITHM;
use apportion::simulation::{run_experiment, synthetic_dictionary, ExperimentOutcome};
use apportion::variability::{gamma_threshold, standard_errors_rts_with};

use crate::config::SimulateConfig;
use crate::error::{CliError, Result};
use crate::formats::{load_dictionary, load_profile, profile_to_csv, LoadedDictionary};
use crate::report::{
    file_digest, timestamp, Diagnostics, PredictionBlock, Provenance, Report,
    StandardErrorsBlock,
};

/// Linear source apportionment from profile dictionaries.
#[derive(Debug, Parser)]
#[command(name = "apportion", version, about)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Omit the timestamp from reports (byte-identical reruns).
    #[arg(long, global = true)]
    no_timestamp: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate source proportions for a fully observed sample.
    Estimate(EstimateArgs),
    /// Predict unobserved entries of a partially observed sample.
    Predict(PredictArgs),
    /// Report the gamma crossover threshold of a dictionary.
    Threshold(ThresholdArgs),
    /// Run a Monte Carlo study from a config file.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Average-then-regress (feasible OLS).
    Atr,
    /// Regress-then-sum (feasible GLS limit).
    Rts,
    /// Feasible GLS at a finite gamma.
    Gls,
}

impl MethodArg {
    fn as_str(&self) -> &'static str {
        match self {
            MethodArg::Atr => "atr",
            MethodArg::Rts => "rts",
            MethodArg::Gls => "gls",
        }
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Dictionary matrix CSV (wide or long form).
    #[arg(long)]
    dict: PathBuf,
    /// Labels CSV (`profile_id,source` or mixing weights).
    #[arg(long)]
    labels: PathBuf,
    /// Sample profile CSV.
    #[arg(long)]
    sample: PathBuf,
    /// Estimator.
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Regularization level (gls only).
    #[arg(long)]
    gamma: Option<f64>,
    /// Attach squared standard errors (rts only).
    #[arg(long)]
    se: bool,
    /// Report path.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Dictionary matrix CSV (wide or long form).
    #[arg(long)]
    dict: PathBuf,
    /// Labels CSV (`profile_id,source` or mixing weights).
    #[arg(long)]
    labels: PathBuf,
    /// Sample profile CSV; absent or empty entries count as unobserved.
    #[arg(long)]
    sample: PathBuf,
    /// Predictor.
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Regularization level (gls only).
    #[arg(long)]
    gamma: Option<f64>,
    /// Treat all features at these excitation wavelengths as unobserved
    /// (comma-separated nm values; needs EEM feature ids).
    #[arg(long, conflicts_with = "mask_features")]
    mask_excitation: Option<String>,
    /// File with one feature id per line to treat as unobserved.
    #[arg(long)]
    mask_features: Option<PathBuf>,
    /// Report path.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Completed-profile CSV path.
    #[arg(long, default_value = "completed.csv")]
    out_profile: PathBuf,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    /// Dictionary matrix CSV (wide or long form).
    #[arg(long)]
    dict: PathBuf,
    /// Labels CSV.
    #[arg(long)]
    labels: PathBuf,
    /// Report path.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// TOML study config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
}

/// Execute a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate(args) => run_estimate(args, cli.no_timestamp),
        Command::Predict(args) => run_predict(args, cli.no_timestamp),
        Command::Threshold(args) => run_threshold(args, cli.no_timestamp),
        Command::Simulate(args) => run_simulate(args, cli.no_timestamp),
    }
}

fn check_gamma(method: MethodArg, gamma: Option<f64>) -> Result<Option<f64>> {
    match (method, gamma) {
        (MethodArg::Gls, Some(g)) => Ok(Some(g)),
        (MethodArg::Gls, None) => Err(CliError::validation(
            "method gls requires --gamma (the gamma -> 0 and gamma -> infinity limits are \
             methods rts and atr)",
        )),
        (_, Some(_)) => Err(CliError::validation(format!(
            "--gamma only applies to method gls, not {}",
            method.as_str()
        ))),
        (_, None) => Ok(None),
    }
}

struct Inputs {
    loaded: LoadedDictionary,
    basis: ApportionmentBasis,
    digests: BTreeMap<String, String>,
}

fn load_inputs(dict: &Path, labels: &Path) -> Result<Inputs> {
    let loaded = load_dictionary(dict, labels)?;
    let basis = decompose(&loaded.dict, &loaded.design)?;
    let mut digests = BTreeMap::new();
    digests.insert("dict".to_string(), file_digest(dict)?);
    digests.insert("labels".to_string(), file_digest(labels)?);
    Ok(Inputs {
        loaded,
        basis,
        digests,
    })
}

fn base_diagnostics(inputs: &Inputs) -> Result<Diagnostics> {
    let dict = &inputs.loaded.dict;
    let design = &inputs.loaded.design;
    let threshold = gamma_threshold(design, &inputs.basis)?;
    let mut notes = Vec::new();
    if let Some(note) = &threshold.note {
        notes.push(format!("gamma threshold: {note}"));
    }
    if !inputs.loaded.dropped_features.is_empty() {
        notes.push(format!(
            "shared-support mask dropped {} feature(s): {}",
            inputs.loaded.dropped_features.len(),
            inputs.loaded.dropped_features.join(", ")
        ));
    }
    Ok(Diagnostics {
        p: dict.p(),
        n: dict.n(),
        k: design.n_categories(),
        rank_dictionary: dict.n(),
        rank_design: design.n_categories(),
        dropped_features: inputs.loaded.dropped_features.len(),
        gamma_threshold: threshold.value.is_finite().then_some(threshold.value),
        gamma_threshold_infinite: threshold.value.is_infinite(),
        residual_norm: None,
        notes,
    })
}

fn write_report(path: &Path, report: &Report) -> Result<()> {
    std::fs::write(path, report.to_json()?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_estimate(args: EstimateArgs, no_timestamp: bool) -> Result<()> {
    let gamma = check_gamma(args.method, args.gamma)?;
    if args.se && args.method != MethodArg::Rts {
        return Err(CliError::validation(
            "--se only applies to method rts (squared standard errors are an RTS quantity)",
        ));
    }
    let mut inputs = load_inputs(&args.dict, &args.labels)?;
    inputs
        .digests
        .insert("sample".to_string(), file_digest(&args.sample)?);
    let y = load_profile(&args.sample, &inputs.loaded)?;
    y.require_fully_observed("estimation")?;

    let dict = &inputs.loaded.dict;
    let design = &inputs.loaded.design;
    let estimate: Estimate = match args.method {
        MethodArg::Atr => estimate_atr(&inputs.basis, &y)?,
        MethodArg::Rts => {
            let est = estimate_rts(dict, design, &y)?;
            if args.se {
                let sse = standard_errors_rts_with(&inputs.basis, design, y.values())?;
                est.with_sse(sse)
            } else {
                est
            }
        }
        MethodArg::Gls => estimate_fgls(&inputs.basis, &y, gamma.expect("validated"))?,
    };

    let residual_norm = match args.method {
        MethodArg::Rts => inputs.basis.gram_qr().residual(y.values()).norm(),
        _ => (y.values() - inputs.basis.group_means() * estimate.theta()).norm(),
    };
    let mut diagnostics = base_diagnostics(&inputs)?;
    diagnostics.residual_norm = Some(residual_norm);

    let standard_errors = estimate.sse().map(|m| StandardErrorsBlock {
        matrix: (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect(),
        diagonal_sqrt: m.diagonal().iter().map(|v| v.sqrt()).collect(),
    });

    let report = Report {
        command: "estimate".to_string(),
        method: Some(args.method.as_str().to_string()),
        gamma,
        categories: design.category_names().to_vec(),
        theta: Some(estimate.theta().iter().copied().collect()),
        standard_errors,
        prediction: None,
        diagnostics,
        provenance: Provenance {
            inputs: inputs.digests,
            seed: None,
            rng: None,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp(no_timestamp),
        },
    };
    write_report(&args.out, &report)
}

fn parse_excitation_list(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|_| {
                CliError::validation(format!("invalid excitation wavelength {tok:?}"))
            })
        })
        .collect()
}

fn run_predict(args: PredictArgs, no_timestamp: bool) -> Result<()> {
    let gamma = check_gamma(args.method, args.gamma)?;
    let mut inputs = load_inputs(&args.dict, &args.labels)?;
    inputs
        .digests
        .insert("sample".to_string(), file_digest(&args.sample)?);
    let sample = load_profile(&args.sample, &inputs.loaded)?;

    // The unobserved set is the union of entries missing from the sample
    // and entries withheld by a mask flag.
    let dict = &inputs.loaded.dict;
    let mut observed: Vec<bool> = sample.observed().to_vec();
    if let Some(list) = &args.mask_excitation {
        let excitations = parse_excitation_list(list)?;
        for i in mask_for_excitations(dict.feature_ids(), &excitations)? {
            observed[i] = false;
        }
    }
    if let Some(path) = &args.mask_features {
        inputs
            .digests
            .insert("mask_features".to_string(), file_digest(path)?);
        let text = std::fs::read_to_string(path)?;
        for (line_no, line) in text.lines().enumerate() {
            let id = line.trim();
            if id.is_empty() {
                continue;
            }
            if !inputs.loaded.feature_universe.contains(id) {
                return Err(CliError::validation(format!(
                    "{}: line {}: feature {id:?} does not appear in the dictionary",
                    path.display(),
                    line_no + 1
                )));
            }
            if let Some(i) = dict.feature_ids().iter().position(|f| f == id) {
                observed[i] = false;
            }
        }
    }
    let y = Profile::with_mask(
        sample.values().clone(),
        observed,
        dict.feature_ids().to_vec(),
    )?;

    let design = &inputs.loaded.design;
    let prob = PartitionedProblem::new(dict, &inputs.basis, &y)?;
    let (prediction, theta) = match args.method {
        MethodArg::Rts => (
            predict_rts(&prob)?,
            observed_theta_rts(&prob, design)?,
        ),
        MethodArg::Atr => (predict_atr(&prob)?, observed_theta_atr(&prob)?),
        MethodArg::Gls => {
            let g = gamma.expect("validated");
            (predict_fgls(&prob, g)?, observed_theta_fgls(&prob, g)?)
        }
    };

    let mut completed = y.values().clone();
    for (j, &i) in prob.unobserved_indices().iter().enumerate() {
        completed[i] = prediction[j];
    }
    let completed =
        Profile::fully_observed(completed, dict.feature_ids().to_vec())?;
    std::fs::write(&args.out_profile, profile_to_csv(&completed))?;
    println!("wrote {}", args.out_profile.display());

    let mut diagnostics = base_diagnostics(&inputs)?;
    let resid = DVector::from_iterator(
        prob.observed_indices().len(),
        prob.observed_indices()
            .iter()
            .map(|&i| (y.values()[i] - (inputs.basis.group_means() * &theta)[i])),
    );
    diagnostics.residual_norm = Some(resid.norm());
    diagnostics
        .notes
        .push(format!("predicted {} unobserved entries", prob.unobserved_len()));

    let report = Report {
        command: "predict".to_string(),
        method: Some(args.method.as_str().to_string()),
        gamma,
        categories: design.category_names().to_vec(),
        theta: Some(theta.iter().copied().collect()),
        standard_errors: None,
        prediction: Some(PredictionBlock {
            unobserved_count: prob.unobserved_len(),
            completed_profile: args.out_profile.display().to_string(),
        }),
        diagnostics,
        provenance: Provenance {
            inputs: inputs.digests,
            seed: None,
            rng: None,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp(no_timestamp),
        },
    };
    write_report(&args.out, &report)
}

fn run_threshold(args: ThresholdArgs, no_timestamp: bool) -> Result<()> {
    let inputs = load_inputs(&args.dict, &args.labels)?;
    let diagnostics = base_diagnostics(&inputs)?;
    let report = Report {
        command: "threshold".to_string(),
        method: None,
        gamma: None,
        categories: inputs.loaded.design.category_names().to_vec(),
        theta: None,
        standard_errors: None,
        prediction: None,
        diagnostics,
        provenance: Provenance {
            inputs: inputs.digests,
            seed: None,
            rng: None,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp(no_timestamp),
        },
    };
    write_report(&args.out, &report)
}

#[derive(Debug, Serialize)]
struct AggregateRow {
    alpha: f64,
    method: String,
    metric_name: String,
    cells: usize,
    mean: f64,
    min: f64,
    max: f64,
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    command: String,
    config: SimulateConfig,
    aggregates: Vec<AggregateRow>,
    provenance: Provenance,
}

fn aggregate(outcome: &ExperimentOutcome) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for row in &outcome.report.rows {
        groups
            .entry((
                format!("{}", row.alpha),
                row.method.clone(),
                row.metric_name.clone(),
            ))
            .or_default()
            .push(row.value);
    }
    groups
        .into_iter()
        .map(|((alpha, method, metric_name), values)| {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            AggregateRow {
                alpha: alpha.parse().expect("alpha round-trips"),
                method,
                metric_name,
                cells: values.len(),
                mean,
                min,
                max,
            }
        })
        .collect()
}

fn run_simulate(args: SimulateArgs, no_timestamp: bool) -> Result<()> {
    let config = SimulateConfig::from_path(&args.config)?;
    let experiment = config.experiment()?;
    let (dict, design) = synthetic_dictionary(
        config.p,
        config.n_per_category,
        config.k,
        config.seed,
    )?;

    let outcome = match config.threads {
        Some(threads) => {
            let pool = rayon_pool(threads)?;
            pool.install(|| run_experiment(&dict, &design, &experiment))?
        }
        None => run_experiment(&dict, &design, &experiment)?,
    };

    std::fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join("report.csv");
    std::fs::write(&csv_path, outcome.report.to_csv_string())?;
    println!("wrote {}", csv_path.display());

    let mut inputs = BTreeMap::new();
    inputs.insert("config".to_string(), file_digest(&args.config)?);
    let summary = SimulateSummary {
        command: "simulate".to_string(),
        config: config.clone(),
        aggregates: aggregate(&outcome),
        provenance: Provenance {
            inputs,
            seed: Some(config.seed),
            rng: Some(RNG_ALGORITHM.to_string()),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp(no_timestamp),
        },
    };
    let json_path = args.out.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::validation(format!("summary serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(&json_path, text)?;
    println!("wrote {}", json_path.display());
    Ok(())
}

fn rayon_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::validation(format!("cannot build a {threads}-thread pool: {e}")))
}
