//! Repeated-game plumbing: box action sets, joint action profiles and the
//! stochastic cost oracle agents query with bandit feedback.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::RiskLevel;

/// Slack allowed when checking that a played action lies in its box.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid action set: {0}")]
    InvalidActionSet(String),
    #[error("delta too large for action set (delta={delta}, smallest half-width={half_width})")]
    DeltaTooLarge { delta: f64, half_width: f64 },
    #[error("delta must be non-negative, got {0}")]
    NegativeDelta(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("infeasible action for agent {agent}, dimension {dim}: {value} not in [{lo}, {hi}]")]
    Infeasible {
        agent: usize,
        dim: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("perturbation direction is not a unit vector (norm {0})")]
    NotUnit(f64),
    #[error("agent {agent} cost {value} exceeds declared bound {bound}")]
    CostBoundExceeded { agent: usize, value: f64, bound: f64 },
    #[error("action profile has {got} agents but the game has {expected}")]
    AgentCountMismatch { expected: usize, got: usize },
}

/// Axis-aligned box `[lo, hi]` in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxActionSet {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxActionSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GameError> {
        if lo.is_empty() {
            return Err(GameError::InvalidActionSet("zero-dimensional box".into()));
        }
        if lo.len() != hi.len() {
            return Err(GameError::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (k, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite()) || l >= h {
                return Err(GameError::InvalidActionSet(format!(
                    "dimension {k}: lo={l} must be below hi={h}"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self, GameError> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// Euclidean norm of `hi - lo`.
    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l) * (h - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn min_half_width(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l) / 2.0)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }

    fn check_member(&self, agent: usize, x: &[f64]) -> Result<(), GameError> {
        if x.len() != self.dim() {
            return Err(GameError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        for (dim, (v, (l, h))) in x.iter().zip(self.lo.iter().zip(&self.hi)).enumerate() {
            if !(*v >= l - FEASIBILITY_TOLERANCE && *v <= h + FEASIBILITY_TOLERANCE) {
                return Err(GameError::Infeasible {
                    agent,
                    dim,
                    value: *v,
                    lo: *l,
                    hi: *h,
                });
            }
        }
        Ok(())
    }
}

/// Joint action `(x_1, ..., x_N)`, one vector per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionProfile {
    actions: Vec<Vec<f64>>,
}

impl ActionProfile {
    pub fn new(actions: Vec<Vec<f64>>) -> Result<Self, GameError> {
        if actions.is_empty() {
            return Err(GameError::AgentCountMismatch { expected: 1, got: 0 });
        }
        if let Some(i) = actions.iter().position(|a| a.is_empty()) {
            return Err(GameError::InvalidActionSet(format!("agent {i} has an empty action")));
        }
        Ok(Self { actions })
    }

    /// Profile of scalar actions.
    pub fn scalars(values: &[f64]) -> Result<Self, GameError> {
        Self::new(values.iter().map(|v| vec![*v]).collect())
    }

    pub fn num_agents(&self) -> usize {
        self.actions.len()
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.actions[i]
    }

    pub fn agents(&self) -> &[Vec<f64>] {
        &self.actions
    }

    /// Copy of the profile with agent `i`'s action replaced.
    pub fn with_agent(&self, i: usize, action: Vec<f64>) -> Self {
        let mut actions = self.actions.clone();
        actions[i] = action;
        Self { actions }
    }

    /// Sum of every coordinate of every agent.
    pub fn total(&self) -> f64 {
        self.actions.iter().flatten().sum()
    }
}

/// A repeated game whose agent costs can only be observed by sampling.
pub trait GameOracle: Send + Sync {
    fn num_agents(&self) -> usize;

    fn action_set(&self, agent: usize) -> &BoxActionSet;

    /// Declared bound `U` with `|J_i| <= U` for every reachable action and noise.
    fn cost_bound(&self) -> f64;

    /// One realization of every agent's cost, written into `out`.
    ///
    /// Implementations may assume `x` is feasible; [`sample_costs`] checks it.
    fn draw_costs(&self, x: &ActionProfile, rng: &mut dyn RngCore, out: &mut [f64]);

    /// Closed-form CVaR of every agent's cost, if the game has one.
    fn true_cvar(&self, _x: &ActionProfile, _levels: &[RiskLevel]) -> Option<Vec<f64>> {
        None
    }

    /// True when costs do not depend on the random stream.
    fn is_deterministic(&self) -> bool {
        false
    }

    fn name(&self) -> &str;
}

/// Checks that `x` matches the game's agents and every action is in its box.
pub fn check_profile(game: &dyn GameOracle, x: &ActionProfile) -> Result<(), GameError> {
    if x.num_agents() != game.num_agents() {
        return Err(GameError::AgentCountMismatch {
            expected: game.num_agents(),
            got: x.num_agents(),
        });
    }
    for i in 0..game.num_agents() {
        game.action_set(i).check_member(i, x.agent(i))?;
    }
    Ok(())
}

/// One cost draw per agent, checked against feasibility and the cost bound.
pub fn sample_costs(game: &dyn GameOracle, x: &ActionProfile, rng: &mut dyn RngCore) -> Result<Vec<f64>, GameError> {
    check_profile(game, x)?;
    let mut out = vec![0.0; game.num_agents()];
    game.draw_costs(x, rng, &mut out);
    check_cost_bound(game, &out)?;
    Ok(out)
}

/// Checks every drawn cost against the declared bound.
pub fn check_cost_bound(game: &dyn GameOracle, costs: &[f64]) -> Result<(), GameError> {
    let bound = game.cost_bound();
    for (agent, value) in costs.iter().enumerate() {
        if !(value.abs() <= bound) {
            return Err(GameError::CostBoundExceeded {
                agent,
                value: *value,
                bound,
            });
        }
    }
    Ok(())
}

/// Euclidean projection onto the shrunk box `[lo + delta, hi - delta]`.
pub fn project_shrunk(x: &[f64], set: &BoxActionSet, delta: f64) -> Result<Vec<f64>, GameError> {
    if delta < 0.0 || delta.is_nan() {
        return Err(GameError::NegativeDelta(delta));
    }
    let half_width = set.min_half_width();
    if delta >= half_width {
        return Err(GameError::DeltaTooLarge { delta, half_width });
    }
    if x.len() != set.dim() {
        return Err(GameError::DimensionMismatch {
            expected: set.dim(),
            got: x.len(),
        });
    }
    Ok(x.iter()
        .zip(set.lo().iter().zip(set.hi()))
        .map(|(v, (l, h))| v.clamp(l + delta, h - delta))
        .collect())
}

/// `x + delta * u` for a unit direction `u`.
pub fn perturb(x: &[f64], u: &[f64], delta: f64) -> Result<Vec<f64>, GameError> {
    if x.len() != u.len() {
        return Err(GameError::DimensionMismatch {
            expected: x.len(),
            got: u.len(),
        });
    }
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(GameError::NotUnit(norm));
    }
    Ok(x.iter().zip(u).map(|(a, b)| a + delta * b).collect())
}
