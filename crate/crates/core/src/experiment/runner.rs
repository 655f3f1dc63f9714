//! Trial execution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::evaluation::{true_cvar, AgentRecord, EpisodeRecord, EvalError, TrialTrace};
use crate::game::{check_cost_bound, check_profile, ActionProfile, GameError};
use crate::learner::{LearnerError, LearnerState};
use crate::seeds::{direction_seed, stream, EVALUATION_STREAM, NOISE_STREAM};

use super::config::{ResolvedConfig, ResolvedVariant};

/// A run-time contract failure inside a trial.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("trial {trial}, variant {variant}, episode {episode}: {source}")]
    Contract {
        trial: usize,
        variant: String,
        episode: usize,
        source: ContractViolation,
    },
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContractViolation {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Runs one trial of one variant.
///
/// Game noise comes from the trial's noise stream and directions from one
/// stream per agent, so every variant sees the same randomness.
pub fn run_trial(cfg: &ResolvedConfig, variant: &ResolvedVariant, trial: usize) -> Result<TrialTrace, RunError> {
    let wrap = |episode: usize| {
        move |e: ContractViolation| RunError::Contract {
            trial,
            variant: variant.label.clone(),
            episode,
            source: e,
        }
    };
    let game = cfg.game.as_ref();
    let n = game.num_agents();
    let mut noise = stream(cfg.seed, &[trial as u64, NOISE_STREAM]);
    let mut eval_rng = stream(cfg.seed, &[trial as u64, EVALUATION_STREAM]);
    let mut dir_rngs: Vec<_> = (0..n)
        .map(|i| ChaCha8Rng::seed_from_u64(direction_seed(cfg.seed, trial, i)))
        .collect();
    let mut learners = (0..n)
        .map(|i| {
            LearnerState::new(
                &cfg.initial_action[i],
                game.action_set(i).clone(),
                cfg.alpha[i],
                variant.eta,
                variant.delta,
                &mut dir_rngs[i],
            )
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| wrap(0)(e.into()))?;

    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut buf = vec![0.0; n];
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); n];
    for t in 1..=cfg.episodes {
        let on_err = wrap(t);
        let n_t = cfg.sample_counts[t - 1];
        let mean = ActionProfile::new(learners.iter().map(|l| l.action().to_vec()).collect())
            .map_err(|e| on_err(e.into()))?;
        let played = ActionProfile::new(learners.iter().map(|l| l.played_action()).collect())
            .map_err(|e| on_err(e.into()))?;
        check_profile(game, &played).map_err(|e| on_err(e.into()))?;
        let truth_played = evaluate(cfg, &played, &mut eval_rng).map_err(|e| on_err(e.into()))?;
        let truth_mean = evaluate(cfg, &mean, &mut eval_rng).map_err(|e| on_err(e.into()))?;

        for s in samples.iter_mut() {
            s.clear();
        }
        for _ in 0..n_t {
            game.draw_costs(&played, &mut noise, &mut buf);
            check_cost_bound(game, &buf).map_err(|e| on_err(e.into()))?;
            for (s, c) in samples.iter_mut().zip(&buf) {
                s.push(*c);
            }
        }

        let mut agents = Vec::with_capacity(n);
        for i in 0..n {
            let out = learners[i]
                .step(&samples[i], variant.variant, cfg.support, &mut dir_rngs[i])
                .map_err(|e| on_err(e.into()))?;
            agents.push(AgentRecord {
                x: mean.agent(i).to_vec(),
                xhat: played.agent(i).to_vec(),
                cvar_est: out.cvar_estimate,
                cvar_true: truth_played[i],
                cvar_at_mean: truth_mean[i],
                grad_norm: out.grad_norm,
                clamps: out.clamps,
            });
        }
        episodes.push(EpisodeRecord {
            episode: t,
            n_t,
            r_t: cfg.dkw_radii[t - 1],
            agents,
        });
    }
    Ok(TrialTrace {
        trial,
        variant: variant.label.clone(),
        episodes,
    })
}

fn evaluate(cfg: &ResolvedConfig, x: &ActionProfile, rng: &mut dyn rand::RngCore) -> Result<Vec<f64>, EvalError> {
    true_cvar(cfg.game.as_ref(), x, &cfg.alpha, cfg.true_cvar, rng)
}

/// Runs every (variant, trial) pair on at most `jobs` threads.
///
/// Results are ordered by variant, then trial, whatever the thread count.
pub fn run_all(cfg: &ResolvedConfig, jobs: usize) -> Result<Vec<Vec<TrialTrace>>, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let tasks: Vec<(usize, usize)> = (0..cfg.variants.len())
        .flat_map(|v| (0..cfg.trials).map(move |k| (v, k)))
        .collect();
    let traces: Vec<TrialTrace> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(v, k)| run_trial(cfg, &cfg.variants[v], k))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut grouped: Vec<Vec<TrialTrace>> = vec![Vec::with_capacity(cfg.trials); cfg.variants.len()];
    for (trace, (v, _)) in traces.into_iter().zip(tasks) {
        grouped[v].push(trace);
    }
    Ok(grouped)
}
