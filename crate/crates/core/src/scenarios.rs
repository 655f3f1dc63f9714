//! Concrete games.
//!
//! * [`CournotGame`]: two producers with cost
//!   `J_i = 1 - (2 - x_1 - x_2) x_i + 0.2 x_i + xi_i x_i`, `xi_i ~ U(0, 1)`.
//!   The cost is affine and increasing in `xi_i` whenever `x_i >= 0`, so its
//!   CVaR has the closed form obtained by replacing `xi_i` with its upper-tail
//!   mean `1 - alpha / 2`.
//! * [`QuadraticTestGame`]: noiseless `C_i(x) = |x_i - c_i|^2 + k (sum x)^2`,
//!   used to calibrate gradient estimators against exact derivatives.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::distribution::RiskLevel;
use crate::game::{ActionProfile, BoxActionSet, GameError, GameOracle};

/// Declared cost bound for the Cournot duopoly on `[0, 1]^2`.
pub const COURNOT_COST_BOUND: f64 = 2.5;
pub const COURNOT_SUPPORT: (f64, f64) = (-0.5, 2.5);
pub const COURNOT_DEFAULT_INITIAL_ACTION: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct CournotGame {
    sets: [BoxActionSet; 2],
}

impl Default for CournotGame {
    fn default() -> Self {
        let set = BoxActionSet::cube(0.0, 1.0, 1).expect("unit interval");
        Self {
            sets: [set.clone(), set],
        }
    }
}

impl CournotGame {
    pub fn new() -> Self {
        Self::default()
    }
}

fn cournot_single(x_own: f64, total: f64, xi: f64) -> f64 {
    1.0 - (2.0 - total) * x_own + 0.2 * x_own + xi * x_own
}

/// Exact cost of both producers for given production levels and noise.
pub fn cournot_cost(x: [f64; 2], xi: [f64; 2]) -> [f64; 2] {
    let total = x[0] + x[1];
    [cournot_single(x[0], total, xi[0]), cournot_single(x[1], total, xi[1])]
}

/// Closed-form CVaR of both producers' costs.
pub fn cournot_true_cvar(x: [f64; 2], alpha: [RiskLevel; 2]) -> [f64; 2] {
    let total = x[0] + x[1];
    let tail = |a: RiskLevel| 1.0 - a.value() / 2.0;
    [
        cournot_single(x[0], total, tail(alpha[0])),
        cournot_single(x[1], total, tail(alpha[1])),
    ]
}

/// Closed-form value at risk, the `(1 - alpha)`-quantile of each cost.
pub fn cournot_true_var(x: [f64; 2], alpha: [RiskLevel; 2]) -> [f64; 2] {
    let total = x[0] + x[1];
    [
        cournot_single(x[0], total, 1.0 - alpha[0].value()),
        cournot_single(x[1], total, 1.0 - alpha[1].value()),
    ]
}

/// Symmetric stationary point of the CVaR costs: `3 x* = 0.8 + alpha / 2`.
pub fn cournot_equilibrium(alpha: RiskLevel) -> f64 {
    (0.8 + alpha.value() / 2.0) / 3.0
}

/// Stationary point for distinct risk levels, solving
/// `2 x_1 + x_2 = 0.8 + a_1 / 2` and `x_1 + 2 x_2 = 0.8 + a_2 / 2`.
pub fn cournot_equilibrium_profile(alpha: [RiskLevel; 2]) -> [f64; 2] {
    let r1 = 0.8 + alpha[0].value() / 2.0;
    let r2 = 0.8 + alpha[1].value() / 2.0;
    [(2.0 * r1 - r2) / 3.0, (2.0 * r2 - r1) / 3.0]
}

fn scalar_pair(x: &ActionProfile) -> [f64; 2] {
    [x.agent(0)[0], x.agent(1)[0]]
}

impl GameOracle for CournotGame {
    fn num_agents(&self) -> usize {
        2
    }

    fn action_set(&self, agent: usize) -> &BoxActionSet {
        &self.sets[agent]
    }

    fn cost_bound(&self) -> f64 {
        COURNOT_COST_BOUND
    }

    fn draw_costs(&self, x: &ActionProfile, rng: &mut dyn RngCore, out: &mut [f64]) {
        let xi = [rng.random::<f64>(), rng.random::<f64>()];
        out.copy_from_slice(&cournot_cost(scalar_pair(x), xi));
    }

    fn true_cvar(&self, x: &ActionProfile, levels: &[RiskLevel]) -> Option<Vec<f64>> {
        Some(cournot_true_cvar(scalar_pair(x), [levels[0], levels[1]]).to_vec())
    }

    fn name(&self) -> &str {
        "cournot"
    }
}

/// Noiseless quadratic game with a shared coupling term.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticTestGame {
    centers: Vec<Vec<f64>>,
    coupling: f64,
    sets: Vec<BoxActionSet>,
    bound: f64,
}

impl QuadraticTestGame {
    pub fn new(centers: Vec<Vec<f64>>, coupling: f64, lo: f64, hi: f64) -> Result<Self, GameError> {
        if centers.is_empty() {
            return Err(GameError::AgentCountMismatch { expected: 1, got: 0 });
        }
        if !coupling.is_finite() || coupling < 0.0 {
            return Err(GameError::InvalidActionSet(format!(
                "coupling must be finite and non-negative, got {coupling}"
            )));
        }
        let sets = centers
            .iter()
            .map(|c| BoxActionSet::cube(lo, hi, c.len()))
            .collect::<Result<Vec<_>, _>>()?;
        let own_max = centers
            .iter()
            .map(|c| {
                c.iter()
                    .map(|ck| (lo - ck).powi(2).max((hi - ck).powi(2)))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        let dims: usize = centers.iter().map(Vec::len).sum();
        let total_max = (dims as f64 * lo.abs().max(hi.abs())).powi(2);
        let bound = own_max + coupling * total_max;
        Ok(Self {
            centers,
            coupling,
            sets,
            bound: bound.max(f64::MIN_POSITIVE),
        })
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// `C_i(x)` for every agent.
    pub fn costs(&self, x: &ActionProfile) -> Vec<f64> {
        let total = x.total();
        self.centers
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let own: f64 = x.agent(i).iter().zip(c).map(|(v, ck)| (v - ck).powi(2)).sum();
                own + self.coupling * total * total
            })
            .collect()
    }

    /// `grad_{x_i} C_i(x)`.
    pub fn own_gradient(&self, x: &ActionProfile, agent: usize) -> Vec<f64> {
        let total = x.total();
        x.agent(agent)
            .iter()
            .zip(&self.centers[agent])
            .map(|(v, c)| 2.0 * (v - c) + 2.0 * self.coupling * total)
            .collect()
    }

    /// Interior Nash point `x_i = c_i - k S`, where `S = sum c / (1 + k D)`
    /// and `D` is the total action dimension.
    pub fn equilibrium(&self) -> ActionProfile {
        let dims: usize = self.centers.iter().map(Vec::len).sum();
        let center_total: f64 = self.centers.iter().flatten().sum();
        let total = center_total / (1.0 + self.coupling * dims as f64);
        let actions = self
            .centers
            .iter()
            .map(|c| c.iter().map(|ck| ck - self.coupling * total).collect())
            .collect();
        ActionProfile::new(actions).expect("non-empty centers")
    }
}

impl GameOracle for QuadraticTestGame {
    fn num_agents(&self) -> usize {
        self.centers.len()
    }

    fn action_set(&self, agent: usize) -> &BoxActionSet {
        &self.sets[agent]
    }

    fn cost_bound(&self) -> f64 {
        self.bound
    }

    fn draw_costs(&self, x: &ActionProfile, _rng: &mut dyn RngCore, out: &mut [f64]) {
        out.copy_from_slice(&self.costs(x));
    }

    fn true_cvar(&self, x: &ActionProfile, _levels: &[RiskLevel]) -> Option<Vec<f64>> {
        Some(self.costs(x))
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn name(&self) -> &str {
        "quadratic"
    }
}
