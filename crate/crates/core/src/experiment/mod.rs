//! Config-driven experiment runs and their output files.
//!
//! Every operation validates the whole config first, runs all trials, and
//! only then writes its CSV files followed by `manifest.json`. A failed run
//! never leaves a manifest behind.
//!
//! Seeds: trial `k` draws game noise from `derive_seed(seed, [k, 1])`, agent
//! `i`'s directions from `derive_seed(seed, [k, 2, i])` and Monte-Carlo
//! evaluation draws from `derive_seed(seed, [k, 3])`; see [`crate::seeds`].

pub mod config;
pub mod output;
pub mod runner;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{aggregate, episodes_to_within, regret, terminal_value, AggregateSeries, Metric, TrialTrace};
use crate::learner::Variant;
use crate::seeds::{derive_seed, direction_seed, noise_seed, EVALUATION_STREAM};

pub use config::{
    validate_betas, ExperimentConfig, ResolvedConfig, ResolvedVariant, ScenarioConfig, ScheduleConfig,
    Theorem1Config, ValidationReport, VariantConfig, VariantKind,
};
pub use output::{FileEntry, SummaryRow, AGGREGATE_HEADER, SCHEDULE_HEADER, SCHEMA_VERSION, TRACE_HEADER};
pub use runner::{run_all, run_trial, ContractViolation, RunError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SCHEDULE_FILE: &str = "schedule.csv";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Validation(ValidationReport),
    #[error("contract violation: {0}")]
    Run(#[from] RunError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("serialization: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl From<ValidationReport> for ExperimentError {
    fn from(r: ValidationReport) -> Self {
        Self::Validation(r)
    }
}

impl ExperimentError {
    /// 2 for invalid configs, 3 for run-time contract violations, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Run(RunError::Contract { .. }) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Run,
    Compare,
    SweepBeta,
}

impl Operation {
    /// Name of the aggregate CSV this operation writes.
    pub fn aggregate_file(&self) -> &'static str {
        match self {
            Self::Run => "aggregate.csv",
            Self::Compare => "comparison.csv",
            Self::SweepBeta => "sweep.csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub trial: usize,
    pub noise: u64,
    pub directions: Vec<u64>,
    pub evaluation: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTable {
    pub master: u64,
    pub rule: String,
    pub trials: Vec<TrialSeeds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub library_version: String,
    pub operation: Operation,
    pub config_hash: String,
    pub hash_rule: String,
    pub config: serde_json::Value,
    pub seeds: SeedTable,
    pub paired_seeds: bool,
    pub pairing: String,
    pub files: Vec<FileEntry>,
    pub total_samples: u64,
    pub total_clamps: u64,
    pub warnings: Vec<String>,
    pub duration_seconds: f64,
}

/// Everything a run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    /// Traces grouped by variant, then ordered by trial.
    pub traces: Vec<Vec<TrialTrace>>,
    pub aggregates: Vec<AggregateSeries>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub jobs: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

pub fn seed_table(cfg: &ResolvedConfig) -> SeedTable {
    let n = cfg.num_agents();
    SeedTable {
        master: cfg.seed,
        rule: "splitmix64 fold: s0 = master, s_{j+1} = splitmix64(s_j ^ splitmix64(p_j + 1)); \
               noise [trial, 1], directions [trial, 2, agent], evaluation [trial, 3]; \
               each seed initializes a ChaCha8 generator"
            .into(),
        trials: (0..cfg.trials)
            .map(|k| TrialSeeds {
                trial: k,
                noise: noise_seed(cfg.seed, k),
                directions: (0..n).map(|i| direction_seed(cfg.seed, k, i)).collect(),
                evaluation: derive_seed(cfg.seed, &[k as u64, EVALUATION_STREAM]),
            })
            .collect(),
    }
}

/// Per-trial and per-agent terminal values, convergence times and regret.
pub fn summarize(cfg: &ResolvedConfig, traces: &[Vec<TrialTrace>]) -> Result<Vec<SummaryRow>, ExperimentError> {
    let mut rows = Vec::new();
    let horizon = cfg.episodes;
    for group in traces {
        for tr in group {
            for i in 0..cfg.num_agents() {
                let series = tr.series(Metric::CvarAtMean(i));
                let regret = match cfg.regret_grid {
                    Some(m) => Some(
                        regret(tr, cfg.game.as_ref(), i, &cfg.alpha, m)
                            .map_err(|e| ValidationReport::single(format!("regret: {e}")))?,
                    ),
                    None => None,
                };
                rows.push(SummaryRow {
                    variant: tr.variant.clone(),
                    trial: tr.trial,
                    agent: Some(i),
                    final_x: Some(tr.episodes[horizon - 1].agents[i].x.clone()),
                    terminal_cvar: terminal_value(&series, cfg.tail_fraction),
                    episodes_to_within: episodes_to_within(&series, cfg.convergence_eps, cfg.tail_fraction),
                    regret,
                });
            }
            let series = tr.series(Metric::MeanCvarAtMean);
            rows.push(SummaryRow {
                variant: tr.variant.clone(),
                trial: tr.trial,
                agent: None,
                final_x: None,
                terminal_cvar: terminal_value(&series, cfg.tail_fraction),
                episodes_to_within: episodes_to_within(&series, cfg.convergence_eps, cfg.tail_fraction),
                regret: None,
            });
        }
    }
    Ok(rows)
}

/// Runs a resolved config and writes its outputs into `out`.
pub fn execute(
    cfg: &ResolvedConfig,
    operation: Operation,
    out: &Path,
    opts: RunOptions,
) -> Result<RunOutcome, ExperimentError> {
    let start = Instant::now();
    fs::create_dir_all(out).map_err(io_err(out))?;
    let manifest_path = out.join(MANIFEST_FILE);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(io_err(&manifest_path))?;
    }

    let traces = run_all(cfg, opts.jobs)?;

    let metrics = Metric::standard_set(&cfg.dims());
    let mut aggregates = Vec::new();
    for group in &traces {
        for m in &metrics {
            aggregates.push(aggregate(group, *m).map_err(|e| ValidationReport::single(e.to_string()))?);
        }
    }
    let summary = summarize(cfg, &traces)?;

    let mut warnings = Vec::new();
    if cfg.trials < 2 {
        warnings.push("fewer than two trials: standard deviations are undefined and reported as 0".into());
    }
    for v in &cfg.variants {
        if v.below_horizon_threshold == Some(true) {
            warnings.push(format!("{}: horizon is below the parameter schedule's minimum", v.label));
        }
    }
    let total_clamps: u64 = traces.iter().flatten().map(|t| t.total_clamps() as u64).sum();
    if total_clamps > 0 {
        warnings.push(format!("{total_clamps} cost samples fell outside the histogram support and were clamped"));
    }

    let write = |name: &str, text: &str| output::write_file(out, name, text).map_err(io_err(&out.join(name)));
    let files = vec![
        write(TRACE_FILE, &output::trace_csv(traces.iter().flatten()))?,
        write(operation.aggregate_file(), &output::aggregate_csv(&aggregates))?,
        write(SUMMARY_FILE, &output::summary_csv(&summary))?,
    ];

    let config = serde_json::to_value(cfg)?;
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        library_version: env!("CARGO_PKG_VERSION").into(),
        operation,
        config_hash: output::canonical_hash(&config)?,
        hash_rule: "sha256 of the resolved config serialized as compact JSON with sorted object keys".into(),
        config,
        seeds: seed_table(cfg),
        paired_seeds: true,
        pairing: "noise and direction streams are keyed by trial index only; every variant and beta value \
                  in a run sees identical randomness"
            .into(),
        files,
        total_samples: (cfg.total_samples_per_trial() * cfg.trials * cfg.variants.len()) as u64,
        total_clamps,
        warnings,
        duration_seconds: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    output::write_atomic(&manifest_path, text.as_bytes()).map_err(io_err(&manifest_path))?;
    Ok(RunOutcome {
        manifest,
        traces,
        aggregates,
        summary,
    })
}

pub fn run(config: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<RunOutcome, ExperimentError> {
    execute(&config.resolve()?, Operation::Run, out, opts)
}

/// Runs every variant under paired seeds and writes one comparison CSV.
pub fn compare(config: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<RunOutcome, ExperimentError> {
    let resolved = config.resolve();
    if config.variants.len() < 2 {
        let mut report = resolved.err().unwrap_or(ValidationReport { violations: vec![] });
        report.violations.push(format!("compare needs at least 2 variants, got {}", config.variants.len()));
        return Err(report.into());
    }
    execute(&resolved?, Operation::Compare, out, opts)
}

/// Replaces the variant list with momentum at each `beta`, keeping the first
/// variant's step size and perturbation radius.
pub fn sweep_config(config: &ExperimentConfig, betas: &[f64]) -> Result<ExperimentConfig, ValidationReport> {
    validate_betas(betas)?;
    let template = config
        .variants
        .first()
        .ok_or_else(|| ValidationReport::single("sweep needs a template variant for eta and delta"))?;
    let mut swept = config.clone();
    swept.variants = betas
        .iter()
        .map(|b| VariantConfig {
            kind: VariantKind::Momentum,
            name: None,
            beta: Some(*b),
            ..template.clone()
        })
        .collect();
    swept.sweep_betas = Some(betas.to_vec());
    Ok(swept)
}

pub fn sweep_beta(
    config: &ExperimentConfig,
    betas: &[f64],
    out: &Path,
    opts: RunOptions,
) -> Result<RunOutcome, ExperimentError> {
    let swept = sweep_config(config, betas)?;
    execute(&swept.resolve()?, Operation::SweepBeta, out, opts)
}

/// One row per episode: `(t, n_t, r_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRow {
    pub t: usize,
    pub n_t: usize,
    pub r_t: f64,
}

pub fn schedule_rows(cfg: &ResolvedConfig) -> Vec<ScheduleRow> {
    cfg.sample_counts
        .iter()
        .zip(&cfg.dkw_radii)
        .enumerate()
        .map(|(k, (n, r))| ScheduleRow { t: k + 1, n_t: *n, r_t: *r })
        .collect()
}

/// Writes `schedule.csv` for the config's sampling schedule.
pub fn emit_schedule(config: &ExperimentConfig, out: &Path) -> Result<Vec<ScheduleRow>, ExperimentError> {
    let cfg = config.resolve()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let text = output::schedule_csv(&cfg.sample_counts, &cfg.dkw_radii);
    output::write_file(out, SCHEDULE_FILE, &text).map_err(io_err(&out.join(SCHEDULE_FILE)))?;
    Ok(schedule_rows(&cfg))
}

/// Label that a momentum variant with this `beta` gets in output files.
pub fn momentum_label(beta: f64) -> String {
    Variant::Momentum { beta }.label()
}
