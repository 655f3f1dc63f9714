use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cvar_games::experiment::{self, ExperimentConfig, ExperimentError, RunOptions, ValidationReport};

#[derive(Parser)]
#[command(name = "cvar-games", version, about = "Risk-averse zeroth-order learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every variant and write trace, aggregate and manifest files.
    Run(Common),
    /// Run at least two variants under paired seeds and write comparison.csv.
    Compare(Common),
    /// Run momentum at each beta with the first variant's eta and delta.
    SweepBeta {
        #[command(flatten)]
        common: Common,
        /// Comma-separated beta values; defaults to the config's sweep_betas.
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
    },
    /// Write schedule.csv with t, n_t and r_t.
    EmitSchedule(Common),
    /// Check a config and print every violation.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's output_dir, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    quiet: bool,
    /// Maximum number of trials run at once.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, ExperimentError> {
        let text = std::fs::read_to_string(&self.config).map_err(|source| ExperimentError::Io {
            path: self.config.clone(),
            source,
        })?;
        let mut cfg = ExperimentConfig::from_json(&text)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    fn options(&self) -> RunOptions {
        match self.jobs {
            Some(j) => RunOptions { jobs: j.max(1) },
            None => RunOptions::default(),
        }
    }
}

fn report(quiet: bool, out: &Path, outcome: &experiment::RunOutcome) {
    if quiet {
        return;
    }
    let m = &outcome.manifest;
    println!("wrote {} files to {}", m.files.len() + 1, out.display());
    println!("config hash {}", m.config_hash);
    for w in &m.warnings {
        println!("warning: {w}");
    }
    for row in outcome.summary.iter().filter(|r| r.agent.is_none()) {
        if row.trial == 0 {
            println!(
                "{}: trial 0 terminal CVaR {:.6}, within eps after {} episodes",
                row.variant, row.terminal_cvar, row.episodes_to_within
            );
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Run(c) => {
            let cfg = c.load()?;
            let out = c.out_dir(&cfg);
            let outcome = experiment::run(&cfg, &out, c.options())?;
            report(c.quiet, &out, &outcome);
        }
        Command::Compare(c) => {
            let cfg = c.load()?;
            let out = c.out_dir(&cfg);
            let outcome = experiment::compare(&cfg, &out, c.options())?;
            report(c.quiet, &out, &outcome);
        }
        Command::SweepBeta { common: c, betas } => {
            let cfg = c.load()?;
            let betas = betas
                .or_else(|| cfg.sweep_betas.clone())
                .ok_or_else(|| ValidationReport::single("no beta list: pass --betas or set sweep_betas"))?;
            let out = c.out_dir(&cfg);
            let outcome = experiment::sweep_beta(&cfg, &betas, &out, c.options())?;
            report(c.quiet, &out, &outcome);
        }
        Command::EmitSchedule(c) => {
            let cfg = c.load()?;
            let out = c.out_dir(&cfg);
            let rows = experiment::emit_schedule(&cfg, &out)?;
            if !c.quiet {
                let total: usize = rows.iter().map(|r| r.n_t).sum();
                println!("wrote {} rows to {}; total samples {total}", rows.len(), out.display());
            }
        }
        Command::Validate(c) => {
            let cfg = c.load()?;
            let resolved = cfg.resolve()?;
            if !c.quiet {
                println!(
                    "ok: {} scenario, {} variants, {} trials, {} episodes, {} samples per trial",
                    resolved.scenario.label(),
                    resolved.variants.len(),
                    resolved.trials,
                    resolved.episodes,
                    resolved.total_samples_per_trial()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
