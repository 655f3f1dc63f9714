//! Risk-averse zeroth-order learning in repeated games with bandit feedback.
//!
//! Agents repeatedly choose actions in a box, observe only sampled costs,
//! and minimize the CVaR of their own cost. Each agent keeps a histogram
//! estimate of its cost distribution, optionally mixed with the previous
//! estimate (momentum), and takes projected one-point gradient steps.
//!
//! * [`distribution`]: fixed-bin cost histograms, CVaR, momentum mixing.
//! * [`game`]: action boxes, the game oracle trait, projection.
//! * [`scenarios`]: the Cournot duopoly and a quadratic test game.
//! * [`learner`]: sampling schedule, gradient estimators, learner state.
//! * [`evaluation`]: traces, true CVaR, regret, aggregation.
//! * [`experiment`]: config-driven runs writing CSV and JSON outputs.

// Negated comparisons are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distribution;
pub mod evaluation;
pub mod experiment;
pub mod game;
pub mod learner;
pub mod scenarios;
pub mod seeds;

pub use distribution::{
    cvar, cvar_exact_oracle, edf_from_samples, kolmogorov_distance, momentum_mix, CostSupport, DiscreteDistribution,
    DistributionError, RiskLevel,
};
pub use evaluation::{aggregate, dkw_radius, regret, true_cvar, AggregateSeries, CvarMethod, Metric, TrialTrace};
pub use experiment::{ExperimentConfig, ExperimentError, RunManifest, RunOptions};
pub use game::{ActionProfile, BoxActionSet, GameError, GameOracle};
pub use learner::{
    sample_count, theorem1_schedule, LearnerError, LearnerState, SamplingSchedule, ScheduleOutput, Theorem1Inputs,
    Variant,
};
pub use scenarios::{cournot_equilibrium, cournot_true_cvar, CournotGame, QuadraticTestGame};
