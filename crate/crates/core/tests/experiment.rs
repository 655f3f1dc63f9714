use std::fs;
use std::sync::Arc;

use rand::RngCore;

use cvar_games::distribution::RiskLevel;
use cvar_games::evaluation::Metric;
use cvar_games::experiment::{
    self, compare, emit_schedule, execute, run, sweep_beta, ExperimentConfig, ExperimentError, Operation,
    RunOptions, ScenarioConfig, ScheduleConfig, VariantConfig, VariantKind, AGGREGATE_HEADER, MANIFEST_FILE,
    TRACE_FILE, TRACE_HEADER,
};
use cvar_games::game::{ActionProfile, BoxActionSet, GameOracle};
use cvar_games::learner::SamplingSchedule;

fn opts() -> RunOptions {
    RunOptions { jobs: 4 }
}

fn quadratic(episodes: usize, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        scenario: ScenarioConfig::Quadratic {
            centers: vec![vec![0.3, 0.7], vec![0.6, 0.2]],
            coupling: 0.2,
            lo: None,
            hi: None,
        },
        episodes,
        schedule: ScheduleConfig {
            a: Some(0.5),
            b: Some(0.5),
            sample_counts: None,
        },
        variants: vec![VariantConfig::momentum(0.5, 0.01, 0.05)],
        alpha: vec![0.5],
        trials,
        ..ExperimentConfig::cournot_default()
    }
}

fn short_cournot(variants: Vec<VariantConfig>) -> ExperimentConfig {
    ExperimentConfig {
        episodes: 300,
        trials: 4,
        variants,
        ..ExperimentConfig::cournot_default()
    }
}

fn rf() -> VariantConfig {
    VariantConfig::new(VariantKind::ResidualFeedback, 0.0025, 0.05)
}

#[test]
fn two_episode_quadratic_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&quadratic(2, 1), dir.path(), opts()).unwrap();
    let trace = fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    for agent in ["0", "1"] {
        assert_eq!(rows.iter().filter(|r| r.split(',').nth(2) == Some(agent)).count(), 2);
    }
    assert_eq!(out.traces[0][0].horizon(), 2);
    assert!(out.manifest.warnings.iter().any(|w| w.contains("fewer than two trials")));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cfg = quadratic(40, 3);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run(&cfg, a.path(), RunOptions { jobs: 1 }).unwrap().manifest;
    let mb = run(&cfg, b.path(), RunOptions { jobs: 3 }).unwrap().manifest;
    for f in [TRACE_FILE, "aggregate.csv", "summary.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(ma.config_hash, mb.config_hash);
    assert_eq!(ma.files, mb.files);
    assert_eq!(ma.seeds, mb.seeds);
}

#[test]
fn manifest_contents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quadratic(10, 2);
    let out = run(&cfg, dir.path(), opts()).unwrap();
    let text = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    let m: experiment::RunManifest = serde_json::from_str(&text).unwrap();
    assert_eq!(m, out.manifest);
    assert_eq!(m.config_hash.len(), 64);
    assert!(m.config_hash.chars().all(|c| matches!(c, '0'..='9' | 'a'..='f')));
    assert!(m.paired_seeds);
    assert_eq!(m.seeds.trials.len(), 2);
    assert_eq!(m.seeds.trials[1].directions.len(), 2);
    assert_eq!(m.schema_version, experiment::SCHEMA_VERSION);
    for f in &m.files {
        let bytes = fs::read(dir.path().join(&f.name)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes);
        assert_eq!(experiment::output::sha256_hex(&bytes), f.sha256);
    }
    let resolved = cfg.resolve().unwrap();
    assert_eq!(m.total_samples as usize, 2 * resolved.total_samples_per_trial());

    let mut other = cfg.clone();
    other.seed += 1;
    let dir2 = tempfile::tempdir().unwrap();
    assert_ne!(run(&other, dir2.path(), opts()).unwrap().manifest.config_hash, m.config_hash);
}

#[test]
fn momentum_zero_matches_residual_feedback() {
    let cfg = short_cournot(vec![VariantConfig::momentum(0.0, 0.0025, 0.05), rf()]);
    let dir = tempfile::tempdir().unwrap();
    let out = compare(&cfg, dir.path(), opts()).unwrap();
    let k = Metric::standard_set(&[1, 1]).len();
    assert_eq!(out.aggregates.len(), 2 * k);
    for (a, b) in out.aggregates[..k].iter().zip(&out.aggregates[k..]) {
        assert_eq!(a.metric, b.metric);
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.std, b.std);
    }
    let csv = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(AGGREGATE_HEADER));
}

#[test]
fn compare_needs_two_variants() {
    let dir = tempfile::tempdir().unwrap();
    let err = compare(&short_cournot(vec![rf()]), dir.path(), opts()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let err = compare(&short_cournot(vec![]), dir.path(), opts()).unwrap_err();
    let ExperimentError::Validation(report) = err else { panic!() };
    assert!(report.violations.len() >= 2, "{:?}", report.violations);
    assert!(!dir.path().join(MANIFEST_FILE).exists());
}

#[test]
fn singleton_sweep_equals_run() {
    let cfg = short_cournot(vec![VariantConfig::momentum(0.3, 0.006, 0.05)]);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let five = short_cournot(vec![VariantConfig::momentum(0.5, 0.006, 0.05)]);
    run(&five, a.path(), opts()).unwrap();
    sweep_beta(&cfg, &[0.5], b.path(), opts()).unwrap();
    assert_eq!(fs::read(a.path().join(TRACE_FILE)).unwrap(), fs::read(b.path().join(TRACE_FILE)).unwrap());
    assert!(b.path().join("sweep.csv").exists());
}

#[test]
fn zero_beta_sweep_reproduces_residual_feedback() {
    let dir = tempfile::tempdir().unwrap();
    let template = short_cournot(vec![VariantConfig::momentum(0.5, 0.0025, 0.05)]);
    let sweep = sweep_beta(&template, &[0.0, 0.5], dir.path(), opts()).unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let plain = run(&short_cournot(vec![rf()]), dir2.path(), opts()).unwrap();
    for (s, r) in sweep.traces[0].iter().zip(&plain.traces[0]) {
        assert_eq!(s.episodes, r.episodes);
    }
    assert!(sweep_beta(&template, &[1.0], dir.path(), opts()).is_err());
    assert!(sweep_beta(&template, &[], dir.path(), opts()).is_err());
}

#[test]
fn variant_list_does_not_change_noise() {
    let m = VariantConfig::momentum(0.5, 0.006, 0.05);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let alone = run(&short_cournot(vec![m.clone()]), a.path(), opts()).unwrap();
    let with_others = run(
        &short_cournot(vec![rf(), VariantConfig::new(VariantKind::OnePoint, 0.0008, 0.25), m]),
        b.path(),
        opts(),
    )
    .unwrap();
    assert_eq!(alone.traces[0], with_others.traces[2]);
}

#[test]
fn schedule_matches_learner_totals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_cournot(vec![rf()]);
    let rows = emit_schedule(&cfg, dir.path()).unwrap();
    let s = SamplingSchedule::new(0.6, 0.05, 2.5, 300).unwrap();
    assert_eq!(rows[0].n_t, s.sample_count(1).unwrap());
    assert!(rows.windows(2).all(|w| w[1].n_t <= w[0].n_t));
    let out = run(&cfg, dir.path(), opts()).unwrap();
    let scheduled: usize = rows.iter().map(|r| r.n_t).sum();
    assert!(out.traces[0].iter().all(|t| t.total_samples() == scheduled));
    let csv = fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
    assert_eq!(csv.lines().count(), 301);
}

#[test]
fn cournot_default_aggregate_over_twenty_trials() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        variants: vec![VariantConfig::momentum(0.5, 0.006, 0.05)],
        ..ExperimentConfig::cournot_default()
    };
    run(&cfg, dir.path(), opts()).unwrap();
    let csv = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("episode,variant,metric,mean,std,trials"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().all(|r| r[5] == "20"));
    assert!(rows.iter().all(|r| r[4].parse::<f64>().unwrap() >= 0.0));
    let avg: Vec<_> = rows.iter().filter(|r| r[2] == "cvar_at_mean.avg").collect();
    assert_eq!(avg.len(), 2000);
}

/// Cournot costs with a declared bound the costs can exceed.
struct Underbounded(cvar_games::CournotGame, Vec<BoxActionSet>);

impl GameOracle for Underbounded {
    fn num_agents(&self) -> usize {
        2
    }
    fn action_set(&self, agent: usize) -> &BoxActionSet {
        &self.1[agent]
    }
    fn cost_bound(&self) -> f64 {
        0.5
    }
    fn draw_costs(&self, x: &ActionProfile, rng: &mut dyn RngCore, out: &mut [f64]) {
        self.0.draw_costs(x, rng, out)
    }
    fn true_cvar(&self, x: &ActionProfile, levels: &[RiskLevel]) -> Option<Vec<f64>> {
        self.0.true_cvar(x, levels)
    }
    fn name(&self) -> &str {
        "underbounded"
    }
}

#[test]
fn cost_bound_violation_is_a_contract_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_cournot(vec![rf()]);
    run(&cfg, dir.path(), opts()).unwrap();
    assert!(dir.path().join(MANIFEST_FILE).exists());

    let mut resolved = cfg.resolve().unwrap();
    let sets = (0..2).map(|_| BoxActionSet::cube(0.0, 1.0, 1).unwrap()).collect();
    resolved.game = Arc::new(Underbounded(cvar_games::CournotGame::new(), sets));
    let err = execute(&resolved, Operation::Run, dir.path(), opts()).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
    assert!(err.to_string().contains("exceeds") || err.to_string().contains("bound"), "{err}");
    assert!(!dir.path().join(MANIFEST_FILE).exists());
}

#[test]
fn regret_column_when_requested() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short_cournot(vec![rf()]);
    cfg.regret_grid = Some(101);
    let out = run(&cfg, dir.path(), opts()).unwrap();
    assert!(out.summary.iter().filter(|r| r.agent.is_some()).all(|r| r.regret.is_some()));
    let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(experiment::output::SUMMARY_HEADER));
}
