//! Command-line front end for the WOMAC prediction-competition engine.
//!
//! Three subcommands: `score` (leaderboards from CSV data), `simulate`
//! (Monte Carlo win-probability presets), and `experiment` (the train/test
//! correlation protocol). Every command is a pure function of its input
//! files, flags, and `--seed`: reruns produce byte-identical outputs, and
//! `--threads` (or `WOMAC_THREADS`) only caps the worker pool without
//! affecting any output byte. On failure a machine-readable JSON error is
//! printed to stderr and the exit code is 2 (validation), 3 (i/o), or 4
//! (internal).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use womac_core::data::{filter_complete, filter_hfc, load_csv, Dataset};
use womac_core::experiments::{
    run_correlation_experiment, summary_csv, CorrelationReport, ExperimentConfig, KPolicy,
};
use womac_core::mechanisms::{run_standard, run_womac, WomacConfig};
use womac_core::meta::DEFAULT_K_GRID;
use womac_core::scoring::{CompetitionResult, ReferenceMatrix};
use womac_core::sim::{
    efficiency_curve, estimate_win_prob, DeviationStrategy, OutcomeModel, ReferenceNoiseModel,
    SimMechanism, ThetaPrior, WinProbEstimate, WorldConfig,
};

#[derive(Parser)]
#[command(name = "womac", version, about = "Deterministic prediction-competition scoring engine")]
struct Cli {
    /// Worker thread cap (0 = library default); WOMAC_THREADS is equivalent.
    /// Never affects output bytes.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a dataset and write a leaderboard.
    Score(ScoreArgs),
    /// Run a Monte Carlo simulation preset.
    Simulate(SimulateArgs),
    /// Run the train/test correlation experiment.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MechanismArg {
    Standard,
    WomacTopk,
    WomacLsq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FilterArg {
    Complete,
    Hfc,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    outcomes: PathBuf,
    #[arg(long, value_enum, default_value_t = MechanismArg::WomacTopk)]
    mechanism: MechanismArg,
    /// Top-k fraction for womac-topk.
    #[arg(long, default_value_t = 0.05)]
    k: f64,
    /// Screened peer count for womac-lsq (default: min(10, n-1)).
    #[arg(long)]
    screen_size: Option<usize>,
    /// Ridge penalty for womac-lsq.
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    #[arg(long, value_enum, default_value_t = FilterArg::Complete)]
    filter: FilterArg,
    #[arg(long, default_value_t = 250)]
    hfc_min_task_responses: usize,
    #[arg(long, default_value_t = 0.5)]
    hfc_min_expert_completion: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Preset {
    Fig1Outflank,
    Thm2Precision,
    EfficiencyCurve,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    preset: Preset,
    /// Replicates per estimate (default depends on the preset).
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Expert count override.
    #[arg(long)]
    num_experts: Option<usize>,
    /// Outflank step override (fig1-outflank; default 2 * tau1).
    #[arg(long)]
    outflank_delta: Option<f64>,
    /// Reference noise sd for the precise arm (default 0.1).
    #[arg(long, default_value_t = 0.1)]
    noise_a: f64,
    /// Reference noise sd for the noisy arm (default 1.0).
    #[arg(long, default_value_t = 1.0)]
    noise_b: f64,
    /// Task-count grid for efficiency-curve, comma separated.
    #[arg(long, value_delimiter = ',')]
    m_grid: Option<Vec<usize>>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    outcomes: PathBuf,
    #[arg(long, value_enum, default_value_t = FilterArg::Complete)]
    filter: FilterArg,
    #[arg(long, default_value_t = 250)]
    hfc_min_task_responses: usize,
    #[arg(long, default_value_t = 0.5)]
    hfc_min_expert_completion: f64,
    /// JSON config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Experiment config file schema: every field optional, defaults match the
/// library, plus a `sweep` k-policy that fans out one run per fixed k.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
enum KPolicySpec {
    TunedInSample { grid: Vec<f64> },
    Fixed { k: f64 },
    Sweep { ks: Vec<f64> },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    m_train_grid: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    subsamples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m_test: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_policy: Option<KPolicySpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    expert_subsample: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Io(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Io(_) => "io",
            CliError::Internal(_) => "internal",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<womac_core::Error> for CliError {
    fn from(err: womac_core::Error) -> Self {
        use womac_core::Error as E;
        match &err {
            E::Validation(_) | E::Dimension(_) | E::Parse { .. } => {
                CliError::Validation(err.to_string())
            }
            E::Io(_) | E::Csv(_) => CliError::Io(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Internal(format!("json: {err}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = if cli.threads > 0 {
        cli.threads
    } else {
        std::env::var("WOMAC_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0)
    };
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!(
                "{}",
                json!({"error": {"code": 4, "kind": "internal", "message": e.to_string()}})
            );
            return ExitCode::from(4);
        }
    }
    let result = match cli.command {
        Command::Score(args) => cmd_score(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Experiment(args) => cmd_experiment(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!(
                "{}",
                json!({"error": {
                    "code": err.code(),
                    "kind": err.kind(),
                    "message": err.message(),
                }})
            );
            ExitCode::from(err.code())
        }
    }
}

/// FNV-1a over the little-endian bytes of each value, row-major.
fn matrix_checksum(values: &[f64]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_le_bytes() {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x100_0000_01b3);
        }
    }
    format!("{hash:016x}")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(dir, name, &text)
}

fn load_dataset(
    predictions: &Path,
    outcomes: &Path,
    filter: FilterArg,
    hfc_min_task_responses: usize,
    hfc_min_expert_completion: f64,
) -> Result<Dataset, CliError> {
    let raw = load_csv(predictions, outcomes)?;
    let dataset = match filter {
        FilterArg::Complete => filter_complete(&raw)?,
        FilterArg::Hfc => filter_hfc(&raw, hfc_min_task_responses, hfc_min_expert_completion)?,
    };
    Ok(dataset)
}

fn cmd_score(args: &ScoreArgs) -> Result<(), CliError> {
    let dataset = load_dataset(
        &args.predictions,
        &args.outcomes,
        args.filter,
        args.hfc_min_task_responses,
        args.hfc_min_expert_completion,
    )?;
    let w = &dataset.matrix;
    let n = w.num_experts();
    let resolved_screen_size = args.screen_size.unwrap_or_else(|| 10.min(n - 1));

    let (result, reference): (CompetitionResult, ReferenceMatrix) = match args.mechanism {
        MechanismArg::Standard => {
            let result = run_standard(w, &dataset.outcomes)?;
            let reference = ReferenceMatrix::shared(dataset.outcomes.values(), n)?;
            (result, reference)
        }
        MechanismArg::WomacTopk => {
            run_womac(w, &dataset.outcomes, &WomacConfig::top_k_average(args.k))?
        }
        MechanismArg::WomacLsq => run_womac(
            w,
            &dataset.outcomes,
            &WomacConfig::least_squares(resolved_screen_size, args.ridge),
        )?,
    };

    let m = w.num_tasks();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        result.scores[a]
            .partial_cmp(&result.scores[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut leaderboard = String::from("rank,expert_id,score,mean_score\n");
    for (rank, &j) in order.iter().enumerate() {
        leaderboard.push_str(&format!(
            "{},{},{},{}\n",
            rank + 1,
            w.expert_ids()[j],
            result.scores[j],
            result.scores[j] / m as f64
        ));
    }

    let config = json!({
        "command": "score",
        "predictions": args.predictions,
        "outcomes": args.outcomes,
        "mechanism": args.mechanism,
        "k": args.k,
        "screen_size": resolved_screen_size,
        "ridge": args.ridge,
        "filter": args.filter,
        "hfc_min_task_responses": args.hfc_min_task_responses,
        "hfc_min_expert_completion": args.hfc_min_expert_completion,
    });
    let report = json!({
        "mechanism": result.mechanism,
        "num_tasks": m,
        "num_experts": n,
        "imputed_cells": dataset.imputed_count(),
        "winner_index": result.winner,
        "winner_id": w.expert_ids()[result.winner],
        "tied_winner_indices": result.tied_winners,
        "tied_winner_ids": result.tied_winners.iter()
            .map(|&j| w.expert_ids()[j].clone()).collect::<Vec<_>>(),
        "reference_checksum": matrix_checksum(reference.values()),
        "config": config,
    });

    write_file(&args.out_dir, "leaderboard.csv", &leaderboard)?;
    write_json(&args.out_dir, "result.json", &report)?;
    write_json(&args.out_dir, "config_resolved.json", &config)?;
    Ok(())
}

#[derive(Serialize)]
struct SimRow {
    label: String,
    focal_expert: usize,
    focal_freq: f64,
    focal_ci95: f64,
    focal_ci99: f64,
    estimate: WinProbEstimate,
}

fn sim_row(label: &str, focal: usize, estimate: WinProbEstimate) -> SimRow {
    SimRow {
        label: label.to_string(),
        focal_expert: focal,
        focal_freq: estimate.per_expert_freq[focal],
        focal_ci95: estimate.ci_halfwidth[focal],
        focal_ci99: estimate.ci_halfwidth_z(2.5758293035489004)[focal],
        estimate,
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    match args.preset {
        Preset::Fig1Outflank => {
            let n = args.num_experts.unwrap_or(10);
            let tau1 = 0.1;
            let delta = args.outflank_delta.unwrap_or(2.0 * tau1);
            let replicates = args.replicates.unwrap_or(50_000);
            let world = WorldConfig {
                m: 1,
                theta_prior: ThetaPrior::Fixed(vec![0.0]),
                outcome_model: OutcomeModel::Gaussian { sd: 10.0 },
                expert_sds: vec![tau1; n],
            };
            let truthful = estimate_win_prob(
                &world,
                &SimMechanism::Standard,
                &ReferenceNoiseModel::Exact,
                &vec![DeviationStrategy::Truthful; n],
                replicates,
                args.seed,
            )?;
            let mut strategies = vec![DeviationStrategy::Truthful; n];
            strategies[0] = DeviationStrategy::Outflank {
                offset: delta,
                direction: 1,
            };
            let outflank = estimate_win_prob(
                &world,
                &SimMechanism::Standard,
                &ReferenceNoiseModel::Exact,
                &strategies,
                replicates,
                args.seed,
            )?;
            let rows = vec![
                sim_row("truthful", 0, truthful),
                sim_row("outflank", 0, outflank),
            ];
            let config = json!({
                "command": "simulate",
                "preset": args.preset,
                "seed": args.seed,
                "replicates": replicates,
                "world": world,
                "outflank_delta": delta,
            });
            let mut csv = String::from("label,expert_index,freq,ci95\n");
            for row in &rows {
                for j in 0..n {
                    csv.push_str(&format!(
                        "{},{},{},{}\n",
                        row.label, j, row.estimate.per_expert_freq[j], row.estimate.ci_halfwidth[j]
                    ));
                }
            }
            let report = json!({"config": config, "rows": rows});
            write_file(&args.out_dir, "simulation_summary.csv", &csv)?;
            write_json(&args.out_dir, "simulation_report.json", &report)?;
            write_json(&args.out_dir, "config_resolved.json", &config)?;
        }
        Preset::Thm2Precision => {
            let n = args.num_experts.unwrap_or(10);
            if n < 2 {
                return Err(CliError::Validation("need at least 2 experts".into()));
            }
            let replicates = args.replicates.unwrap_or(20_000);
            let mut sds = vec![0.6; n];
            sds[0] = 0.3;
            let world = WorldConfig {
                m: 10,
                theta_prior: ThetaPrior::Gaussian { mean: 0.0, sd: 1.0 },
                outcome_model: OutcomeModel::Gaussian { sd: 1.0 },
                expert_sds: sds,
            };
            let truthful = vec![DeviationStrategy::Truthful; n];
            let precise = estimate_win_prob(
                &world,
                &SimMechanism::Estimator,
                &ReferenceNoiseModel::GaussianNoise { sd: args.noise_a },
                &truthful,
                replicates,
                womac_core::rng::derive_seed(args.seed, 0),
            )?;
            let noisy = estimate_win_prob(
                &world,
                &SimMechanism::Estimator,
                &ReferenceNoiseModel::GaussianNoise { sd: args.noise_b },
                &truthful,
                replicates,
                womac_core::rng::derive_seed(args.seed, 1),
            )?;
            let rows = vec![
                sim_row("precise", 0, precise),
                sim_row("noisy", 0, noisy),
            ];
            let separated = rows[0].focal_freq - rows[0].focal_ci99
                > rows[1].focal_freq + rows[1].focal_ci99;
            let config = json!({
                "command": "simulate",
                "preset": args.preset,
                "seed": args.seed,
                "replicates": replicates,
                "world": world,
                "noise_a": args.noise_a,
                "noise_b": args.noise_b,
            });
            let mut csv = String::from("arm,noise_sd,best_expert,freq,ci95,ci99\n");
            for (row, sd) in rows.iter().zip([args.noise_a, args.noise_b]) {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    row.label, sd, row.focal_expert, row.focal_freq, row.focal_ci95, row.focal_ci99
                ));
            }
            let report = json!({
                "config": config,
                "rows": rows,
                "ci99_disjoint": separated,
            });
            write_file(&args.out_dir, "simulation_summary.csv", &csv)?;
            write_json(&args.out_dir, "simulation_report.json", &report)?;
            write_json(&args.out_dir, "config_resolved.json", &config)?;
        }
        Preset::EfficiencyCurve => {
            let n = args.num_experts.unwrap_or(10);
            if n < 2 {
                return Err(CliError::Validation("need at least 2 experts".into()));
            }
            let replicates = args.replicates.unwrap_or(5_000);
            let m_grid = args
                .m_grid
                .clone()
                .unwrap_or_else(|| vec![1, 2, 4, 8, 16, 32]);
            let mut sds = vec![0.6; n];
            sds[0] = 0.3;
            let world = WorldConfig {
                m: 1, // overridden per grid point
                theta_prior: ThetaPrior::Gaussian { mean: 0.0, sd: 1.0 },
                outcome_model: OutcomeModel::Gaussian { sd: 1.0 },
                expert_sds: sds,
            };
            let points = efficiency_curve(
                &world,
                &ReferenceNoiseModel::GaussianNoise { sd: args.noise_a },
                &ReferenceNoiseModel::GaussianNoise { sd: args.noise_b },
                &m_grid,
                replicates,
                args.seed,
            )?;
            let config = json!({
                "command": "simulate",
                "preset": args.preset,
                "seed": args.seed,
                "replicates": replicates,
                "world": world,
                "noise_a": args.noise_a,
                "noise_b": args.noise_b,
                "m_grid": m_grid,
            });
            let mut csv = String::from("m,best_expert,freq_a,ci_a,freq_b,ci_b\n");
            for p in &points {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    p.m, p.best_expert, p.freq_a, p.ci_a, p.freq_b, p.ci_b
                ));
            }
            let report = json!({"config": config, "points": points});
            write_file(&args.out_dir, "simulation_summary.csv", &csv)?;
            write_json(&args.out_dir, "simulation_report.json", &report)?;
            write_json(&args.out_dir, "config_resolved.json", &config)?;
        }
    }
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<(), CliError> {
    let dataset = load_dataset(
        &args.predictions,
        &args.outcomes,
        args.filter,
        args.hfc_min_task_responses,
        args.hfc_min_expert_completion,
    )?;
    let file_cfg: ExperimentFileConfig = match &args.config {
        None => ExperimentFileConfig::default(),
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
    };
    let defaults = ExperimentConfig::default();
    let base = ExperimentConfig {
        m_train_grid: file_cfg.m_train_grid.clone().unwrap_or(defaults.m_train_grid),
        subsamples: file_cfg.subsamples.unwrap_or(defaults.subsamples),
        m_test: file_cfg.m_test.unwrap_or(defaults.m_test),
        k_policy: KPolicy::default(), // set per run below
        expert_subsample: file_cfg.expert_subsample,
        seed: args.seed.or(file_cfg.seed).unwrap_or(0),
    };
    let policy = file_cfg.k_policy.clone().unwrap_or(KPolicySpec::TunedInSample {
        grid: DEFAULT_K_GRID.to_vec(),
    });

    // One (label, config) pair per run; the sweep policy fans out.
    let runs: Vec<(Option<f64>, ExperimentConfig)> = match &policy {
        KPolicySpec::TunedInSample { grid } => vec![(
            None,
            ExperimentConfig {
                k_policy: KPolicy::TunedInSample { grid: grid.clone() },
                ..base.clone()
            },
        )],
        KPolicySpec::Fixed { k } => vec![(
            None,
            ExperimentConfig {
                k_policy: KPolicy::Fixed { k: *k },
                ..base.clone()
            },
        )],
        KPolicySpec::Sweep { ks } => {
            if ks.is_empty() {
                return Err(CliError::Validation("sweep needs at least one k".into()));
            }
            ks.iter()
                .map(|&k| {
                    (
                        Some(k),
                        ExperimentConfig {
                            k_policy: KPolicy::Fixed { k },
                            ..base.clone()
                        },
                    )
                })
                .collect()
        }
    };

    let resolved = json!({
        "command": "experiment",
        "predictions": args.predictions,
        "outcomes": args.outcomes,
        "filter": args.filter,
        "hfc_min_task_responses": args.hfc_min_task_responses,
        "hfc_min_expert_completion": args.hfc_min_expert_completion,
        "experiment": {
            "m_train_grid": base.m_train_grid,
            "subsamples": base.subsamples,
            "m_test": base.m_test,
            "k_policy": policy,
            "expert_subsample": base.expert_subsample,
            "seed": base.seed,
        },
    });

    let mut reports: Vec<(Option<f64>, CorrelationReport)> = Vec::new();
    for (k_label, cfg) in &runs {
        let report = run_correlation_experiment(&dataset.matrix, &dataset.outcomes, cfg)?;
        let name = match k_label {
            None => "correlation_summary.csv".to_string(),
            Some(k) => format!("correlation_summary_k{k}.csv"),
        };
        write_file(&args.out_dir, &name, &summary_csv(&report))?;
        reports.push((*k_label, report));
    }
    let report_json = if reports.len() == 1 && reports[0].0.is_none() {
        json!({"config": resolved, "report": reports[0].1})
    } else {
        json!({
            "config": resolved,
            "sweep": reports.iter().map(|(k, r)| json!({"k": k, "report": r}))
                .collect::<Vec<_>>(),
        })
    };
    write_json(&args.out_dir, "correlation_report.json", &report_json)?;
    write_json(&args.out_dir, "config_resolved.json", &resolved)?;
    Ok(())
}
