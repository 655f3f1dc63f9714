//! Per-agent zeroth-order learner.
//!
//! Each episode an agent plays `x + delta * u` for a fresh unit direction `u`,
//! collects `n_t` bandit cost samples, turns them into a histogram and a CVaR
//! estimate, and takes a projected gradient step on the shrunk action box.
//! The variants differ only in how the distribution estimate and the gradient
//! are formed:
//!
//! | variant              | distribution estimate                         | gradient                      |
//! |----------------------|-----------------------------------------------|-------------------------------|
//! | `OnePoint`           | fresh histogram                               | `(d/delta) CVaR_t u`          |
//! | `SampleReuse`        | histogram of this and last episode's samples  | `(d/delta) CVaR_t u`          |
//! | `ResidualFeedback`   | fresh histogram                               | `(d/delta) (CVaR_t - CVaR_{t-1}) u` |
//! | `Momentum(beta)`     | `beta * prev + (1 - beta) * fresh`            | `(d/delta) (CVaR_t - CVaR_{t-1}) u` |
//!
//! `Momentum(0)` and `ResidualFeedback` produce identical trajectories.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{CostSupport, DiscreteDistribution, DistributionError, RiskLevel};
use crate::game::{perturb, project_shrunk, BoxActionSet, GameError};

/// Largest momentum parameter the parameter schedule will emit.
pub const MAX_BETA: f64 = 1.0 - 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("episode {t} outside 1..={horizon}")]
    EpisodeOutOfRange { t: usize, horizon: usize },
    #[error("invalid sampling schedule: {0}")]
    InvalidSchedule(String),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("perturbation radius must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("step size must be non-negative, got {0}")]
    NegativeStepSize(f64),
    #[error("expected {expected} samples this episode, got {got}")]
    SampleCountMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// `n_t = ceil(b U^2 (T - t + 1)^a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSchedule {
    pub a: f64,
    pub b: f64,
    pub bound_u: f64,
    pub horizon: usize,
}

impl SamplingSchedule {
    pub fn new(a: f64, b: f64, bound_u: f64, horizon: usize) -> Result<Self, LearnerError> {
        if !(a > 0.0 && a < 1.0) {
            return Err(LearnerError::InvalidSchedule(format!("a must lie in (0, 1), got {a}")));
        }
        if !(b > 0.0 && b < 1.0) {
            return Err(LearnerError::InvalidSchedule(format!("b must lie in (0, 1), got {b}")));
        }
        if !(bound_u > 0.0 && bound_u.is_finite()) {
            return Err(LearnerError::InvalidSchedule(format!("U must be positive, got {bound_u}")));
        }
        if horizon == 0 {
            return Err(LearnerError::InvalidSchedule("horizon must be at least 1".into()));
        }
        Ok(Self { a, b, bound_u, horizon })
    }

    /// Continuous part `b U^2 (T - t + 1)^a`, shared with the DKW radius.
    pub fn raw(&self, t: usize) -> f64 {
        self.b * self.bound_u * self.bound_u * ((self.horizon - t + 1) as f64).powf(self.a)
    }

    pub fn sample_count(&self, t: usize) -> Result<usize, LearnerError> {
        if t == 0 || t > self.horizon {
            return Err(LearnerError::EpisodeOutOfRange { t, horizon: self.horizon });
        }
        Ok((self.raw(t).ceil() as usize).max(1))
    }

    pub fn counts(&self) -> Vec<usize> {
        (1..=self.horizon)
            .map(|t| self.sample_count(t).expect("t in range"))
            .collect()
    }
}

pub fn sample_count(t: usize, schedule: &SamplingSchedule) -> Result<usize, LearnerError> {
    schedule.sample_count(t)
}

/// Uniform direction on the unit sphere in `R^d` (normalized Gaussian draw).
pub fn sample_unit_sphere(d: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>, LearnerError> {
    if d == 0 {
        return Err(LearnerError::ZeroDimension);
    }
    loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return Ok(g.into_iter().map(|v| v / norm).collect());
        }
    }
}

/// Residual-feedback estimate `(d / delta) (cvar_now - cvar_prev) u`.
pub fn gradient_estimate(
    cvar_now: f64,
    cvar_prev: f64,
    u: &[f64],
    d: usize,
    delta: f64,
) -> Result<Vec<f64>, LearnerError> {
    if !(delta > 0.0) {
        return Err(LearnerError::NonPositiveDelta(delta));
    }
    let scale = d as f64 / delta * (cvar_now - cvar_prev);
    Ok(u.iter().map(|v| scale * v).collect())
}

/// One-point estimate `(d / delta) cvar_now u`.
pub fn one_point_gradient(cvar_now: f64, u: &[f64], d: usize, delta: f64) -> Result<Vec<f64>, LearnerError> {
    gradient_estimate(cvar_now, 0.0, u, d, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    OnePoint,
    SampleReuse,
    ResidualFeedback,
    Momentum { beta: f64 },
}

impl Variant {
    pub fn momentum(beta: f64) -> Result<Self, LearnerError> {
        if !(0.0..1.0).contains(&beta) {
            return Err(DistributionError::InvalidBeta(beta).into());
        }
        Ok(Self::Momentum { beta })
    }

    /// Stable label used in output files, e.g. `momentum(0.5)`.
    pub fn label(&self) -> String {
        match self {
            Self::OnePoint => "one_point".into(),
            Self::SampleReuse => "sample_reuse".into(),
            Self::ResidualFeedback => "residual_feedback".into(),
            Self::Momentum { beta } => format!("momentum({beta})"),
        }
    }

    pub fn uses_residual(&self) -> bool {
        matches!(self, Self::ResidualFeedback | Self::Momentum { .. })
    }

    /// How the distribution and gradient are formed, for output metadata.
    pub fn description(&self) -> &'static str {
        match self {
            Self::OnePoint => "fresh histogram; one-point gradient",
            Self::SampleReuse => {
                "unweighted pooled histogram of this and the previous episode's samples; one-point gradient"
            }
            Self::ResidualFeedback => "fresh histogram; residual-feedback gradient",
            Self::Momentum { .. } => "momentum-mixed histogram; residual-feedback gradient",
        }
    }
}

/// Mutable state of one agent during a trial.
#[derive(Debug, Clone)]
pub struct LearnerState {
    x: Vec<f64>,
    set: BoxActionSet,
    dist_prev: Option<DiscreteDistribution>,
    cvar_prev: Option<f64>,
    samples_prev: Option<Vec<f64>>,
    u: Vec<f64>,
    alpha: RiskLevel,
    eta: f64,
    delta: f64,
}

/// Per-episode output of [`LearnerState::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub gradient: Vec<f64>,
    pub cvar_estimate: f64,
    pub grad_norm: f64,
    pub clamps: usize,
}

impl LearnerState {
    /// The initial action is projected onto the shrunk box.
    pub fn new(
        x0: &[f64],
        set: BoxActionSet,
        alpha: RiskLevel,
        eta: f64,
        delta: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Self, LearnerError> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(LearnerError::NegativeStepSize(eta));
        }
        if !(delta > 0.0) {
            return Err(LearnerError::NonPositiveDelta(delta));
        }
        let x = project_shrunk(x0, &set, delta)?;
        let u = sample_unit_sphere(set.dim(), rng)?;
        Ok(Self {
            x,
            set,
            dist_prev: None,
            cvar_prev: None,
            samples_prev: None,
            u,
            alpha,
            eta,
            delta,
        })
    }

    pub fn action(&self) -> &[f64] {
        &self.x
    }

    pub fn direction(&self) -> &[f64] {
        &self.u
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn alpha(&self) -> RiskLevel {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn previous_distribution(&self) -> Option<&DiscreteDistribution> {
        self.dist_prev.as_ref()
    }

    pub fn previous_cvar(&self) -> Option<f64> {
        self.cvar_prev
    }

    /// Action played this episode, `x + delta * u`.
    pub fn played_action(&self) -> Vec<f64> {
        perturb(&self.x, &self.u, self.delta).expect("direction is unit by construction")
    }

    /// Consumes this episode's samples, updates the action and draws the next direction.
    pub fn step(
        &mut self,
        samples: &[f64],
        variant: Variant,
        support: CostSupport,
        rng: &mut dyn RngCore,
    ) -> Result<StepOutcome, LearnerError> {
        let (fresh, clamps) = DiscreteDistribution::from_samples(samples, support)?;
        let estimate = match variant {
            Variant::OnePoint | Variant::ResidualFeedback => fresh,
            Variant::Momentum { beta } => match &self.dist_prev {
                Some(prev) => prev.mix(&fresh, beta)?,
                None => fresh,
            },
            Variant::SampleReuse => match &self.samples_prev {
                Some(prev) => {
                    let pooled: Vec<f64> = samples.iter().chain(prev).copied().collect();
                    // Clamps of the previous episode were already counted.
                    let (pooled_dist, _) = DiscreteDistribution::from_samples(&pooled, support)?;
                    pooled_dist
                }
                None => fresh,
            },
        };
        if matches!(variant, Variant::SampleReuse) {
            self.samples_prev = Some(samples.to_vec());
        }

        let cvar_now = estimate.cvar(self.alpha);
        let d = self.dim();
        let gradient = if variant.uses_residual() {
            // The first episode has no earlier estimate, so its residual is zero.
            let prev = self.cvar_prev.unwrap_or(cvar_now);
            gradient_estimate(cvar_now, prev, &self.u, d, self.delta)?
        } else {
            one_point_gradient(cvar_now, &self.u, d, self.delta)?
        };
        let grad_norm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();

        let moved: Vec<f64> = self.x.iter().zip(&gradient).map(|(x, g)| x - self.eta * g).collect();
        self.x = project_shrunk(&moved, &self.set, self.delta)?;
        self.cvar_prev = Some(cvar_now);
        self.dist_prev = Some(estimate);
        self.u = sample_unit_sphere(d, rng)?;
        Ok(StepOutcome {
            gradient,
            cvar_estimate: cvar_now,
            grad_norm,
            clamps,
        })
    }
}

/// Free-function form of [`LearnerState::step`].
pub fn learner_step(
    state: &mut LearnerState,
    samples: &[f64],
    variant: Variant,
    support: CostSupport,
    rng: &mut dyn RngCore,
) -> Result<StepOutcome, LearnerError> {
    state.step(samples, variant, support, rng)
}

/// Step size, perturbation radius and momentum from the regret analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOutput {
    pub eta: f64,
    pub delta: f64,
    pub beta: f64,
    /// Set when `T < ceil((8 N^{2/3})^{1/a})`, where the guarantee does not apply.
    pub below_horizon_threshold: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Inputs {
    pub horizon: usize,
    pub a: f64,
    pub diameter: f64,
    pub bound_u: f64,
    pub agents: usize,
    pub dim: usize,
    /// Stand-in for the unobservable Lipschitz constant of the costs.
    pub l0_scale: f64,
}

/// Minimum horizon for the regret guarantee, `ceil((8 N^{2/3})^{1/a})`.
pub fn theorem1_min_horizon(agents: usize, a: f64) -> f64 {
    (8.0 * (agents as f64).powf(2.0 / 3.0)).powf(1.0 / a).ceil()
}

/// `eta = D / (d L N) T^{-3a/4}`, `delta = D / N^{1/6} T^{-a/4}`,
/// `beta = min(1 / (U^2 T^{a/4}), 1 - 1e-6)`.
pub fn theorem1_schedule(inputs: Theorem1Inputs) -> Result<ScheduleOutput, LearnerError> {
    let Theorem1Inputs {
        horizon,
        a,
        diameter,
        bound_u,
        agents,
        dim,
        l0_scale,
    } = inputs;
    if horizon == 0 || agents == 0 || dim == 0 {
        return Err(LearnerError::InvalidSchedule(
            "horizon, agent count and dimension must be positive".into(),
        ));
    }
    for (name, v) in [("a", a), ("diameter", diameter), ("U", bound_u), ("l0_scale", l0_scale)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(LearnerError::InvalidSchedule(format!("{name} must be positive, got {v}")));
        }
    }
    let t = horizon as f64;
    let n = agents as f64;
    let eta = diameter / (dim as f64 * l0_scale * n) * t.powf(-0.75 * a);
    let delta = diameter / n.powf(1.0 / 6.0) * t.powf(-0.25 * a);
    let beta = (1.0 / (bound_u * bound_u * t.powf(0.25 * a))).min(MAX_BETA);
    Ok(ScheduleOutput {
        eta,
        delta,
        beta,
        below_horizon_threshold: t < theorem1_min_horizon(agents, a),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::BoxActionSet;
    use crate::scenarios::QuadraticTestGame;
    use crate::game::{sample_costs, ActionProfile, GameOracle};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sample_count_examples() {
        let s = SamplingSchedule::new(0.5, 0.5, 2.0, 100).unwrap();
        assert_eq!(s.sample_count(1).unwrap(), 20);
        assert_eq!(s.sample_count(100).unwrap(), 2);
        assert!(s.sample_count(0).is_err());
        assert!(s.sample_count(101).is_err());
        let tiny = SamplingSchedule::new(0.7, 0.2, 1.0, 50).unwrap();
        assert_eq!(tiny.sample_count(50).unwrap(), 1);
    }

    #[test]
    fn schedule_rejects_bad_parameters() {
        assert!(SamplingSchedule::new(1.0, 0.5, 1.0, 10).is_err());
        assert!(SamplingSchedule::new(0.5, 0.0, 1.0, 10).is_err());
        assert!(SamplingSchedule::new(0.5, 0.5, -1.0, 10).is_err());
        assert!(SamplingSchedule::new(0.5, 0.5, 1.0, 0).is_err());
    }

    #[test]
    fn sphere_in_one_dimension_is_a_fair_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 20_000;
        let mut plus = 0;
        for _ in 0..n {
            let u = sample_unit_sphere(1, &mut rng).unwrap();
            assert!(u[0] == 1.0 || u[0] == -1.0);
            plus += usize::from(u[0] > 0.0);
        }
        assert!((plus as f64 / n as f64 - 0.5).abs() < 0.02);
        assert_eq!(sample_unit_sphere(0, &mut rng).unwrap_err(), LearnerError::ZeroDimension);
    }

    #[test]
    fn sphere_draws_are_isotropic() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 100_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            let u = sample_unit_sphere(3, &mut rng).unwrap();
            assert!((u.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-9);
            for k in 0..3 {
                mean[k] += u[k] / n as f64;
            }
        }
        assert!(mean.iter().all(|m| m.abs() < 0.01), "{mean:?}");
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(gradient_estimate(0.3, 0.3, &[0.6, 0.8], 2, 0.1).unwrap(), vec![0.0, 0.0]);
        let g = gradient_estimate(0.15, 0.1, &[1.0, 0.0], 2, 0.1).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12 && g[1] == 0.0);
        assert_eq!(one_point_gradient(0.0, &[1.0], 1, 0.5).unwrap(), vec![0.0]);
        assert_eq!(one_point_gradient(1.0, &[1.0], 1, 0.5).unwrap(), vec![2.0]);
        assert!(gradient_estimate(1.0, 0.0, &[1.0], 1, 0.0).is_err());
        assert!(one_point_gradient(1.0, &[1.0], 1, -0.1).is_err());
    }

    #[test]
    fn theorem1_examples() {
        let base = Theorem1Inputs {
            horizon: 10_000,
            a: 1.0,
            diameter: 1.0,
            bound_u: 1.0,
            agents: 1,
            dim: 1,
            l0_scale: 1.0,
        };
        let s = theorem1_schedule(base).unwrap();
        assert!((s.eta - 1e-3).abs() < 1e-15);
        assert!((s.delta - 0.1).abs() < 1e-15);
        assert!((s.beta - 0.1).abs() < 1e-15);
        assert!(!s.below_horizon_threshold);

        let half = theorem1_schedule(Theorem1Inputs { a: 0.6, ..base }).unwrap();
        assert!((half.delta - 10_000f64.powf(-0.15)).abs() < 1e-15);

        let doubled = theorem1_schedule(Theorem1Inputs { l0_scale: 2.0, ..base }).unwrap();
        assert!((doubled.eta - s.eta / 2.0).abs() < 1e-18);
        assert_eq!((doubled.delta, doubled.beta), (s.delta, s.beta));

        let short = theorem1_schedule(Theorem1Inputs { horizon: 5, ..base }).unwrap();
        assert!(short.below_horizon_threshold);
        let clipped = theorem1_schedule(Theorem1Inputs { bound_u: 1e-6, ..base }).unwrap();
        assert_eq!(clipped.beta, MAX_BETA);
    }

    #[test]
    fn variant_labels_and_validation() {
        assert_eq!(Variant::momentum(0.5).unwrap().label(), "momentum(0.5)");
        assert!(Variant::momentum(1.0).is_err());
        let v: Variant = serde_json::from_str(r#"{"kind":"momentum","beta":0.25}"#).unwrap();
        assert_eq!(v, Variant::Momentum { beta: 0.25 });
    }

    fn run_quadratic(variant: Variant, eta: f64, seed: u64, episodes: usize) -> Vec<Vec<f64>> {
        let game = QuadraticTestGame::new(vec![vec![0.3]], 0.0, 0.0, 1.0).unwrap();
        let support = CostSupport::new(-1.0, 1.0, 400).unwrap();
        let mut dir = ChaCha8Rng::seed_from_u64(seed);
        let mut noise = ChaCha8Rng::seed_from_u64(seed + 1);
        let alpha = RiskLevel::new(0.5).unwrap();
        let mut st = LearnerState::new(&[0.8], game.action_set(0).clone(), alpha, eta, 0.05, &mut dir).unwrap();
        let mut path = Vec::new();
        for _ in 0..episodes {
            path.push(st.action().to_vec());
            let played = ActionProfile::new(vec![st.played_action()]).unwrap();
            let c = sample_costs(&game, &played, &mut noise).unwrap();
            st.step(&c, variant, support, &mut dir).unwrap();
        }
        path
    }

    #[test]
    fn momentum_zero_matches_residual_feedback() {
        let a = run_quadratic(Variant::Momentum { beta: 0.0 }, 0.05, 4, 200);
        let b = run_quadratic(Variant::ResidualFeedback, 0.05, 4, 200);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_step_size_freezes_the_learner() {
        for v in [Variant::OnePoint, Variant::SampleReuse, Variant::ResidualFeedback, Variant::Momentum { beta: 0.5 }] {
            let path = run_quadratic(v, 0.0, 7, 50);
            assert!(path.iter().all(|x| x == &path[0]));
        }
    }

    #[test]
    fn one_point_drifts_to_the_minimizer() {
        let seeds = 16;
        let mean: f64 = (0..seeds)
            .map(|s| run_quadratic(Variant::OnePoint, 0.0005, 100 + s, 3000).last().unwrap()[0])
            .sum::<f64>()
            / seeds as f64;
        assert!((mean - 0.3).abs() < 0.05, "mean terminal action {mean}");
    }

    #[test]
    fn first_residual_step_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let set = BoxActionSet::cube(0.0, 1.0, 2).unwrap();
        let support = CostSupport::new(0.0, 2.0, 20).unwrap();
        let mut st = LearnerState::new(&[0.4, 0.6], set, RiskLevel::new(1.0).unwrap(), 0.1, 0.05, &mut rng).unwrap();
        let out = st.step(&[0.7, 1.1], Variant::Momentum { beta: 0.5 }, support, &mut rng).unwrap();
        assert_eq!(out.grad_norm, 0.0);
        assert_eq!(st.action(), &[0.4, 0.6]);
        assert!(st.previous_distribution().is_some());
    }

    proptest! {
        #[test]
        fn residual_gradient_bound(
            c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, seed in 0u64..1000, d in 1usize..5, delta in 0.01f64..1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = sample_unit_sphere(d, &mut rng).unwrap();
            let g = gradient_estimate(c1, c2, &u, d, delta).unwrap();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(norm <= d as f64 * 2.0 * 2.0 / delta + 1e-9);
            let g1 = one_point_gradient(c1, &u, d, delta).unwrap();
            let n1 = g1.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(n1 <= d as f64 * 2.0 / delta + 1e-9);
        }

        #[test]
        fn sample_count_non_increasing(a in 0.05f64..0.95, b in 0.01f64..0.99, u in 0.1f64..5.0, horizon in 1usize..300) {
            let s = SamplingSchedule::new(a, b, u, horizon).unwrap();
            let counts = s.counts();
            prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(counts.iter().all(|n| *n >= 1));
        }
    }
}
