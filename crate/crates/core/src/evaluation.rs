//! Trial traces, true-CVaR evaluation, regret, DKW radii and multi-trial
//! aggregation.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{cvar_exact_oracle, DistributionError, RiskLevel};
use crate::game::{check_profile, ActionProfile, GameError, GameOracle};
use crate::learner::SamplingSchedule;

/// Largest per-agent dimension the comparator grid search accepts.
pub const MAX_GRID_DIM: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("game '{0}' has no closed-form CVaR; use the Monte-Carlo method")]
    NoClosedForm(String),
    #[error("action dimension {0} is too large for grid search (max {MAX_GRID_DIM}); use Monte-Carlo scenarios only")]
    GridTooLarge(usize),
    #[error("grid resolution must be at least 2, got {0}")]
    GridTooCoarse(usize),
    #[error("confidence parameter must lie in (0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("episode {t} outside 1..={horizon}")]
    EpisodeOutOfRange { t: usize, horizon: usize },
    #[error("traces disagree on horizon or variant")]
    MismatchedTraces,
    #[error("no traces to aggregate")]
    NoTraces,
    #[error("agent {agent} out of range for {agents} agents")]
    NoSuchAgent { agent: usize, agents: usize },
    #[error("empty trace")]
    EmptyTrace,
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// What one agent did and saw in one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    /// Mean action `x_t` before this episode's update.
    pub x: Vec<f64>,
    /// Played action `x_t + delta u_t`.
    pub xhat: Vec<f64>,
    pub cvar_est: f64,
    /// True CVaR at the played profile.
    pub cvar_true: f64,
    /// True CVaR at the mean-action profile.
    pub cvar_at_mean: f64,
    pub grad_norm: f64,
    pub clamps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// 1-based episode index.
    pub episode: usize,
    pub n_t: usize,
    pub r_t: f64,
    pub agents: Vec<AgentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub trial: usize,
    pub variant: String,
    pub episodes: Vec<EpisodeRecord>,
}

impl TrialTrace {
    pub fn horizon(&self) -> usize {
        self.episodes.len()
    }

    pub fn num_agents(&self) -> usize {
        self.episodes.first().map_or(0, |e| e.agents.len())
    }

    pub fn total_samples(&self) -> usize {
        self.episodes.iter().map(|e| e.n_t).sum()
    }

    pub fn total_clamps(&self) -> usize {
        self.episodes
            .iter()
            .flat_map(|e| e.agents.iter())
            .map(|a| a.clamps)
            .sum()
    }

    /// Played profile `x̂_t` of episode `t` (1-based).
    pub fn played_profile(&self, t: usize) -> ActionProfile {
        let e = &self.episodes[t - 1];
        ActionProfile::new(e.agents.iter().map(|a| a.xhat.clone()).collect()).expect("non-empty")
    }

    pub fn mean_profile(&self, t: usize) -> ActionProfile {
        let e = &self.episodes[t - 1];
        ActionProfile::new(e.agents.iter().map(|a| a.x.clone()).collect()).expect("non-empty")
    }

    /// Series of a metric over episodes.
    pub fn series(&self, metric: Metric) -> Vec<f64> {
        self.episodes.iter().map(|e| metric.extract(e)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    CvarTrue(usize),
    CvarEstimate(usize),
    CvarAtMean(usize),
    /// Agent-averaged true CVaR at the mean-action profile.
    MeanCvarAtMean,
    Action { agent: usize, dim: usize },
    GradNorm(usize),
}

impl Metric {
    pub fn name(&self) -> String {
        match self {
            Self::CvarTrue(i) => format!("cvar_true.{i}"),
            Self::CvarEstimate(i) => format!("cvar_est.{i}"),
            Self::CvarAtMean(i) => format!("cvar_at_mean.{i}"),
            Self::MeanCvarAtMean => "cvar_at_mean.avg".into(),
            Self::Action { agent, dim } => format!("x.{agent}.{dim}"),
            Self::GradNorm(i) => format!("grad_norm.{i}"),
        }
    }

    pub fn extract(&self, e: &EpisodeRecord) -> f64 {
        match *self {
            Self::CvarTrue(i) => e.agents[i].cvar_true,
            Self::CvarEstimate(i) => e.agents[i].cvar_est,
            Self::CvarAtMean(i) => e.agents[i].cvar_at_mean,
            Self::MeanCvarAtMean => e.agents.iter().map(|a| a.cvar_at_mean).sum::<f64>() / e.agents.len() as f64,
            Self::Action { agent, dim } => e.agents[agent].x[dim],
            Self::GradNorm(i) => e.agents[i].grad_norm,
        }
    }

    /// Every metric recorded for an `agents`-player game with the given dimensions.
    pub fn standard_set(dims: &[usize]) -> Vec<Metric> {
        let mut out = Vec::new();
        for (i, d) in dims.iter().enumerate() {
            out.push(Self::CvarTrue(i));
            out.push(Self::CvarEstimate(i));
            out.push(Self::CvarAtMean(i));
            out.extend((0..*d).map(|dim| Self::Action { agent: i, dim }));
            out.push(Self::GradNorm(i));
        }
        out.push(Self::MeanCvarAtMean);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CvarMethod {
    Analytic,
    MonteCarlo { samples: usize },
}

/// True CVaR of every agent's cost at `x`.
pub fn true_cvar(
    game: &dyn GameOracle,
    x: &ActionProfile,
    levels: &[RiskLevel],
    method: CvarMethod,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>, EvalError> {
    check_profile(game, x)?;
    match method {
        CvarMethod::Analytic => game
            .true_cvar(x, levels)
            .ok_or_else(|| EvalError::NoClosedForm(game.name().to_string())),
        CvarMethod::MonteCarlo { samples } => {
            let n = game.num_agents();
            let mut per_agent: Vec<Vec<(f64, f64)>> = vec![Vec::with_capacity(samples); n];
            let mut buf = vec![0.0; n];
            for _ in 0..samples {
                game.draw_costs(x, rng, &mut buf);
                for (agent, c) in buf.iter().enumerate() {
                    per_agent[agent].push((*c, 1.0));
                }
            }
            per_agent
                .iter()
                .zip(levels)
                .map(|(s, a)| cvar_exact_oracle(s, *a).map_err(EvalError::from))
                .collect()
        }
    }
}

/// Regret of `agent` against the best fixed action in hindsight, with the
/// comparator minimized over an `m`-point-per-dimension grid on its box.
pub fn regret(
    trace: &TrialTrace,
    game: &dyn GameOracle,
    agent: usize,
    levels: &[RiskLevel],
    grid: usize,
) -> Result<f64, EvalError> {
    regret_prefix(trace, game, agent, levels, grid, trace.horizon())
}

/// Regret over the first `horizon` episodes of a trace.
pub fn regret_prefix(
    trace: &TrialTrace,
    game: &dyn GameOracle,
    agent: usize,
    levels: &[RiskLevel],
    grid: usize,
    horizon: usize,
) -> Result<f64, EvalError> {
    if trace.episodes.is_empty() || horizon == 0 {
        return Err(EvalError::EmptyTrace);
    }
    if horizon > trace.horizon() {
        return Err(EvalError::EpisodeOutOfRange { t: horizon, horizon: trace.horizon() });
    }
    if agent >= game.num_agents() {
        return Err(EvalError::NoSuchAgent { agent, agents: game.num_agents() });
    }
    let set = game.action_set(agent);
    if set.dim() > MAX_GRID_DIM {
        return Err(EvalError::GridTooLarge(set.dim()));
    }
    if grid < 2 {
        return Err(EvalError::GridTooCoarse(grid));
    }
    let analytic = |x: &ActionProfile| {
        game.true_cvar(x, levels)
            .ok_or_else(|| EvalError::NoClosedForm(game.name().to_string()))
    };

    let played: Vec<ActionProfile> = (1..=horizon).map(|t| trace.played_profile(t)).collect();
    let mut incurred = 0.0;
    for x in &played {
        incurred += analytic(x)?[agent];
    }

    let axes: Vec<Vec<f64>> = (0..set.dim())
        .map(|k| {
            let (l, h) = (set.lo()[k], set.hi()[k]);
            (0..grid).map(|j| l + (h - l) * j as f64 / (grid - 1) as f64).collect()
        })
        .collect();
    let candidates: Vec<Vec<f64>> = match axes.len() {
        1 => axes[0].iter().map(|v| vec![*v]).collect(),
        _ => axes[0]
            .iter()
            .flat_map(|a| axes[1].iter().map(move |b| vec![*a, *b]))
            .collect(),
    };
    let mut best = f64::INFINITY;
    for cand in candidates {
        let mut total = 0.0;
        for x in &played {
            total += analytic(&x.with_agent(agent, cand.clone()))?[agent];
        }
        best = best.min(total);
    }
    Ok(incurred - best)
}

/// DKW confidence radius `sqrt(ln(2T / gamma) / (2 b U^2 (T - t + 1)^a))`.
pub fn dkw_radius(t: usize, schedule: &SamplingSchedule, gamma: f64) -> Result<f64, EvalError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(EvalError::InvalidGamma(gamma));
    }
    if t == 0 || t > schedule.horizon {
        return Err(EvalError::EpisodeOutOfRange { t, horizon: schedule.horizon });
    }
    let horizon = schedule.horizon as f64;
    Ok(((2.0 * horizon / gamma).ln() / (2.0 * schedule.raw(t))).sqrt())
}

/// Per-episode mean and sample standard deviation of one metric across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSeries {
    pub variant: String,
    pub metric: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub trials: usize,
    /// Set when fewer than two trials were available and `std` is reported as 0.
    pub std_undefined: bool,
}

pub fn aggregate(traces: &[TrialTrace], metric: Metric) -> Result<AggregateSeries, EvalError> {
    let first = traces.first().ok_or(EvalError::NoTraces)?;
    let horizon = first.horizon();
    if traces.iter().any(|t| t.horizon() != horizon || t.variant != first.variant) {
        return Err(EvalError::MismatchedTraces);
    }
    let n = traces.len();
    let mut mean = Vec::with_capacity(horizon);
    let mut std = Vec::with_capacity(horizon);
    for e in 0..horizon {
        let values: Vec<f64> = traces.iter().map(|t| metric.extract(&t.episodes[e])).collect();
        let (m, s) = mean_std(&values);
        mean.push(m);
        std.push(s);
    }
    Ok(AggregateSeries {
        variant: first.variant.clone(),
        metric: metric.name(),
        mean,
        std,
        trials: n,
        std_undefined: n < 2,
    })
}

/// Sample mean and standard deviation (divisor `n - 1`; 0 when `n < 2`).
///
/// Values are summed in sorted order so the result does not depend on the
/// order of the inputs.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = sorted.iter().map(|v| (v - mean) * (v - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / (n - 1) as f64).sqrt())
}

/// Mean of the last `ceil(tail_fraction * len)` values (at least one).
pub fn terminal_value(series: &[f64], tail_fraction: f64) -> f64 {
    let w = ((series.len() as f64 * tail_fraction).ceil() as usize).clamp(1, series.len());
    series[series.len() - w..].iter().sum::<f64>() / w as f64
}

/// First 1-based episode whose value lies within `eps` of the terminal value.
pub fn episodes_to_within(series: &[f64], eps: f64, tail_fraction: f64) -> usize {
    let target = terminal_value(series, tail_fraction);
    series
        .iter()
        .position(|v| (v - target).abs() <= eps)
        .map_or(series.len(), |p| p + 1)
}

/// One-sided sign-test p-value `P(X >= successes)` for `X ~ Binomial(n, 1/2)`.
pub fn sign_test_p_value(successes: usize, n: usize) -> f64 {
    let mut coeff = 1.0f64;
    let mut tail = 0.0;
    for k in 0..=n {
        if k > 0 {
            coeff = coeff * (n - k + 1) as f64 / k as f64;
        }
        if k >= successes {
            tail += coeff;
        }
    }
    tail / 2f64.powi(n as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{cournot_true_cvar, CournotGame, QuadraticTestGame};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lvl(a: f64) -> RiskLevel {
        RiskLevel::new(a).unwrap()
    }

    fn frozen_trace(x: [f64; 2], horizon: usize) -> TrialTrace {
        let rec = |v: f64| AgentRecord {
            x: vec![v],
            xhat: vec![v],
            cvar_est: 0.0,
            cvar_true: 0.0,
            cvar_at_mean: 0.0,
            grad_norm: 0.0,
            clamps: 0,
        };
        TrialTrace {
            trial: 0,
            variant: "frozen".into(),
            episodes: (1..=horizon)
                .map(|episode| EpisodeRecord {
                    episode,
                    n_t: 1,
                    r_t: 0.0,
                    agents: vec![rec(x[0]), rec(x[1])],
                })
                .collect(),
        }
    }

    #[test]
    fn analytic_and_monte_carlo_agree() {
        let game = CournotGame::new();
        let x = ActionProfile::scalars(&[0.35, 0.6]).unwrap();
        let levels = [lvl(0.9), lvl(0.3)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let exact = true_cvar(&game, &x, &levels, CvarMethod::Analytic, &mut rng).unwrap();
        let n = 1_000_000;
        let mc = true_cvar(&game, &x, &levels, CvarMethod::MonteCarlo { samples: n }, &mut rng).unwrap();
        for i in 0..2 {
            let a = levels[i].value();
            let xi = x.agent(i)[0];
            let se = xi * (a / 3.0 - a * a / 4.0).sqrt() / (n as f64).sqrt();
            assert!((exact[i] - mc[i]).abs() < 3.0 * se, "agent {i}: {} vs {}", exact[i], mc[i]);
        }
        let origin = ActionProfile::scalars(&[0.0, 0.0]).unwrap();
        assert_eq!(true_cvar(&game, &origin, &levels, CvarMethod::Analytic, &mut rng).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn deterministic_game_cvar_is_cost() {
        let game = QuadraticTestGame::new(vec![vec![0.2]], 0.0, 0.0, 1.0).unwrap();
        let x = ActionProfile::scalars(&[0.7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for a in [0.05, 0.5, 1.0] {
            let c = true_cvar(&game, &x, &[lvl(a)], CvarMethod::MonteCarlo { samples: 10 }, &mut rng).unwrap();
            assert!((c[0] - 0.25).abs() < 1e-12);
        }
    }

    struct NoClosedForm(CournotGame);

    impl GameOracle for NoClosedForm {
        fn num_agents(&self) -> usize {
            2
        }
        fn action_set(&self, agent: usize) -> &crate::game::BoxActionSet {
            self.0.action_set(agent)
        }
        fn cost_bound(&self) -> f64 {
            self.0.cost_bound()
        }
        fn draw_costs(&self, x: &ActionProfile, rng: &mut dyn RngCore, out: &mut [f64]) {
            self.0.draw_costs(x, rng, out)
        }
        fn name(&self) -> &str {
            "opaque"
        }
    }

    #[test]
    fn analytic_requires_closed_form() {
        let game = NoClosedForm(CournotGame::new());
        let x = ActionProfile::scalars(&[0.5, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            true_cvar(&game, &x, &[lvl(0.5), lvl(0.5)], CvarMethod::Analytic, &mut rng),
            Err(EvalError::NoClosedForm(_))
        ));
        assert!(matches!(
            regret(&frozen_trace([0.5, 0.5], 3), &game, 0, &[lvl(0.5), lvl(0.5)], 11),
            Err(EvalError::NoClosedForm(_))
        ));
    }

    #[test]
    fn frozen_cournot_regret_matches_closed_form() {
        let game = CournotGame::new();
        let levels = [lvl(1.0), lvl(1.0)];
        let horizon = 100;
        let trace = frozen_trace([0.1, 0.1], horizon);
        let r = regret(&trace, &game, 0, &levels, 1001).unwrap();
        // C_1(y, 0.1) = 1 - 1.9 y + y^2 + 0.2 y + 0.5 y = 1 - 1.2 y + y^2, minimized at y = 0.6.
        let own = |y: f64| cournot_true_cvar([y, 0.1], levels)[0];
        let expected = horizon as f64 * (own(0.1) - own(0.6));
        assert!((r - expected).abs() < 1e-9, "{r} vs {expected}");
        // Brute force on a finer grid agrees.
        let fine = (0..=100_000).map(|j| own(j as f64 / 100_000.0)).fold(f64::INFINITY, f64::min);
        assert!((horizon as f64 * (own(0.1) - fine) - r).abs() < 1e-6);
    }

    #[test]
    fn regret_of_best_point_is_near_zero() {
        let game = CournotGame::new();
        let levels = [lvl(0.9), lvl(0.9)];
        // Best response to x_2 = 0.4 is y = (1.25 - 0.4) / 2 = 0.425, a grid point when m = 201.
        let trace = frozen_trace([0.425, 0.4], 50);
        let r = regret(&trace, &game, 0, &levels, 201).unwrap();
        assert!(r.abs() < 1e-9, "regret {r}");
        let single = frozen_trace([0.9, 0.4], 1);
        let r1 = regret(&single, &game, 0, &levels, 201).unwrap();
        let own = |y: f64| cournot_true_cvar([y, 0.4], levels)[0];
        assert!((r1 - (own(0.9) - own(0.425))).abs() < 1e-12);
    }

    #[test]
    fn finer_grid_never_increases_regret_beyond_gap() {
        let game = CournotGame::new();
        let levels = [lvl(0.7), lvl(0.7)];
        let trace = frozen_trace([0.33, 0.57], 20);
        let mut prev = regret(&trace, &game, 1, &levels, 11).unwrap();
        for m in [21, 101, 1001] {
            let r = regret(&trace, &game, 1, &levels, m).unwrap();
            // |dC/dx| <= 2.2 on [0, 1]^2, and grid gaps shrink as 1/(m - 1).
            assert!(r <= prev + 20.0 * 2.2 / (m - 1) as f64);
            prev = r;
        }
        let tiny = QuadraticTestGame::new(vec![vec![0.1, 0.2, 0.3]], 0.0, 0.0, 1.0).unwrap();
        let bad = TrialTrace {
            episodes: vec![EpisodeRecord {
                episode: 1,
                n_t: 1,
                r_t: 0.0,
                agents: vec![AgentRecord {
                    x: vec![0.5; 3],
                    xhat: vec![0.5; 3],
                    cvar_est: 0.0,
                    cvar_true: 0.0,
                    cvar_at_mean: 0.0,
                    grad_norm: 0.0,
                    clamps: 0,
                }],
            }],
            ..trace
        };
        assert!(matches!(regret(&bad, &tiny, 0, &[lvl(1.0)], 11), Err(EvalError::GridTooLarge(3))));
    }

    #[test]
    fn dkw_examples() {
        // b U^2 = 0.5 and T = 1 with gamma = 2 / e gives a unit radicand at t = T.
        let s = SamplingSchedule::new(0.4, 0.5, 1.0, 1).unwrap();
        let gamma = 2.0 / std::f64::consts::E;
        assert!((dkw_radius(1, &s, gamma).unwrap() - 1.0).abs() < 1e-12);

        let s = SamplingSchedule::new(0.6, 0.3, 2.0, 1).unwrap();
        let g = 1.0 - 1e-12;
        let expected = (2f64.ln() / (2.0 * 0.3 * 4.0)).sqrt();
        assert!((dkw_radius(1, &s, g).unwrap() - expected).abs() < 1e-9);

        let s = SamplingSchedule::new(0.6, 0.05, 2.5, 300).unwrap();
        let r: Vec<f64> = (1..=300).map(|t| dkw_radius(t, &s, 0.05).unwrap()).collect();
        assert!(r.windows(2).all(|w| w[0] < w[1]));
        assert!(dkw_radius(1, &s, 1.0).is_err());
        assert!(dkw_radius(301, &s, 0.5).is_err());
    }

    fn trace_with(values: &[f64], trial: usize) -> TrialTrace {
        let mut t = frozen_trace([0.0, 0.0], values.len());
        t.trial = trial;
        for (e, v) in t.episodes.iter_mut().zip(values) {
            e.agents[0].cvar_true = *v;
        }
        t
    }

    #[test]
    fn aggregate_examples() {
        let a = trace_with(&[1.0, 5.0], 0);
        let b = trace_with(&[3.0, 5.0], 1);
        let agg = aggregate(&[a.clone(), b.clone()], Metric::CvarTrue(0)).unwrap();
        assert_eq!(agg.mean, vec![2.0, 5.0]);
        assert!((agg.std[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(agg.std[1], 0.0);
        assert_eq!(agg.trials, 2);
        assert!(!agg.std_undefined);

        let swapped = aggregate(&[b, a.clone()], Metric::CvarTrue(0)).unwrap();
        assert_eq!(swapped, agg);

        let single = aggregate(&[a], Metric::CvarTrue(0)).unwrap();
        assert!(single.std_undefined);
        assert_eq!(single.std, vec![0.0, 0.0]);
        assert_eq!(aggregate(&[], Metric::CvarTrue(0)).unwrap_err(), EvalError::NoTraces);
    }

    #[test]
    fn convergence_time_and_sign_test() {
        let s = [1.0, 0.8, 0.6, 0.52, 0.5, 0.5, 0.5, 0.5];
        assert_eq!(terminal_value(&s, 0.25), 0.5);
        assert_eq!(episodes_to_within(&s, 0.05, 0.25), 4);
        assert_eq!(episodes_to_within(&s, 1.0, 0.25), 1);
        assert!((sign_test_p_value(15, 20) - 0.020_694_732_666_015_625).abs() < 1e-15);
        assert_eq!(sign_test_p_value(0, 20), 1.0);
    }
}
