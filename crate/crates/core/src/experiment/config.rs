//! Experiment configuration, validation and resolution.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distribution::{CostSupport, RiskLevel};
use crate::evaluation::CvarMethod;
use crate::game::GameOracle;
use crate::learner::{theorem1_schedule, SamplingSchedule, Theorem1Inputs, Variant};
use crate::scenarios::{
    CournotGame, QuadraticTestGame, COURNOT_DEFAULT_INITIAL_ACTION, COURNOT_SUPPORT,
};

pub const DEFAULT_GAMMA: f64 = 0.05;
pub const DEFAULT_BINS: usize = 200;
pub const DEFAULT_CONVERGENCE_EPS: f64 = 0.05;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioConfig {
    Cournot,
    Quadratic {
        centers: Vec<Vec<f64>>,
        #[serde(default)]
        coupling: f64,
        #[serde(default)]
        lo: Option<f64>,
        #[serde(default)]
        hi: Option<f64>,
    },
}

impl ScenarioConfig {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Cournot => "cournot",
            Self::Quadratic { .. } => "quadratic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Explicit per-episode sample counts; replaces the `(a, b)` rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_counts: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    OnePoint,
    SampleReuse,
    ResidualFeedback,
    Momentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem1Config {
    /// Stand-in for the cost Lipschitz constant in the step size.
    pub l0_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub kind: VariantKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Derive any missing `eta`, `delta` and `beta` from the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem1: Option<Theorem1Config>,
}

impl VariantConfig {
    pub fn new(kind: VariantKind, eta: f64, delta: f64) -> Self {
        Self {
            kind,
            name: None,
            eta: Some(eta),
            delta: Some(delta),
            beta: None,
            theorem1: None,
        }
    }

    pub fn momentum(beta: f64, eta: f64, delta: f64) -> Self {
        Self {
            beta: Some(beta),
            ..Self::new(VariantKind::Momentum, eta, delta)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub episodes: usize,
    pub schedule: ScheduleConfig,
    pub variants: Vec<VariantConfig>,
    /// Risk level per agent; a single entry applies to every agent.
    pub alpha: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Histogram range `[lo, hi]`; defaults to the scenario's cost range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<[f64; 2]>,
    /// Cost bound `U` in the sampling rule; defaults to the scenario's bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_u: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Initial mean action per agent; defaults to the scenario's choice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_action: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_true_cvar")]
    pub true_cvar: CvarMethod,
    /// Grid points per dimension for the regret comparator; no regret when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regret_grid: Option<usize>,
    #[serde(default = "default_eps")]
    pub convergence_eps: f64,
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_betas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_true_cvar() -> CvarMethod {
    CvarMethod::Analytic
}
fn default_eps() -> f64 {
    DEFAULT_CONVERGENCE_EPS
}
fn default_tail() -> f64 {
    DEFAULT_TAIL_FRACTION
}

impl ExperimentConfig {
    /// Cournot duopoly, 2000 episodes, 20 trials, alpha 0.9, with the four
    /// variants at their tuned step sizes.
    pub fn cournot_default() -> Self {
        Self {
            scenario: ScenarioConfig::Cournot,
            episodes: 2000,
            schedule: ScheduleConfig {
                a: Some(0.6),
                b: Some(0.05),
                sample_counts: None,
            },
            variants: vec![
                VariantConfig::momentum(0.5, 0.006, 0.05),
                VariantConfig::new(VariantKind::ResidualFeedback, 0.0025, 0.05),
                VariantConfig::new(VariantKind::OnePoint, 0.0008, 0.25),
                VariantConfig::new(VariantKind::SampleReuse, 0.0014, 0.25),
            ],
            alpha: vec![0.9],
            trials: 20,
            seed: 2024,
            bins: DEFAULT_BINS,
            support: None,
            bound_u: None,
            gamma: DEFAULT_GAMMA,
            initial_action: None,
            true_cvar: CvarMethod::Analytic,
            regret_grid: None,
            convergence_eps: DEFAULT_CONVERGENCE_EPS,
            tail_fraction: DEFAULT_TAIL_FRACTION,
            sweep_betas: None,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ValidationReport> {
        serde_json::from_str(text).map_err(|e| ValidationReport::single(format!("config: {e}")))
    }

    /// Checks every field and expands defaults; reports all violations at once.
    pub fn resolve(&self) -> Result<ResolvedConfig, ValidationReport> {
        let mut errs = Vec::new();
        let game = match build_game(&self.scenario) {
            Ok(g) => Some(g),
            Err(e) => {
                errs.push(e);
                None
            }
        };

        if self.episodes == 0 {
            errs.push("episodes must be at least 1".into());
        }
        if self.trials == 0 {
            errs.push("trials must be at least 1".into());
        }
        if self.bins == 0 {
            errs.push("bins must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            errs.push(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.convergence_eps > 0.0 && self.convergence_eps.is_finite()) {
            errs.push(format!("convergence_eps must be positive, got {}", self.convergence_eps));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            errs.push(format!("tail_fraction must lie in (0, 1], got {}", self.tail_fraction));
        }
        if let CvarMethod::MonteCarlo { samples } = self.true_cvar {
            if samples == 0 {
                errs.push("true_cvar monte_carlo samples must be at least 1".into());
            }
        }
        if let Some(m) = self.regret_grid {
            if m < 2 {
                errs.push(format!("regret_grid must be at least 2, got {m}"));
            }
        }
        if let Some(betas) = &self.sweep_betas {
            check_betas(betas, &mut errs);
        }

        let agents = game.as_ref().map(|g| g.num_agents());
        let alpha = self.resolve_alpha(agents, &mut errs);
        let bound_u = match self.bound_u {
            Some(u) if !(u > 0.0 && u.is_finite()) => {
                errs.push(format!("bound_u must be positive, got {u}"));
                None
            }
            Some(u) => Some(u),
            None => game.as_ref().map(|g| g.cost_bound()),
        };
        let support = self.resolve_support(game.as_deref(), &mut errs);
        let schedule = self.resolve_schedule(bound_u, &mut errs);
        let initial = game.as_deref().and_then(|g| self.resolve_initial(g, &mut errs));

        if self.variants.is_empty() {
            errs.push("variants must list at least one variant".into());
        }
        let mut variants = Vec::new();
        for (k, v) in self.variants.iter().enumerate() {
            if let Some(r) = self.resolve_variant(k, v, game.as_deref(), bound_u, &mut errs) {
                variants.push(r);
            }
        }
        let mut labels: Vec<&str> = variants.iter().map(|v| v.label.as_str()).collect();
        labels.sort_unstable();
        for w in labels.windows(2) {
            if w[0] == w[1] {
                errs.push(format!("duplicate variant label '{}'; set distinct names", w[0]));
            }
        }

        if !errs.is_empty() {
            return Err(ValidationReport { violations: errs });
        }
        let (counts, radii) = schedule.expect("checked above");
        Ok(ResolvedConfig {
            scenario: self.scenario.clone(),
            episodes: self.episodes,
            sample_counts: counts,
            dkw_radii: radii,
            schedule: self.schedule.clone(),
            variants,
            alpha: alpha.expect("checked"),
            trials: self.trials,
            seed: self.seed,
            support: support.expect("checked"),
            bound_u: bound_u.expect("checked"),
            gamma: self.gamma,
            initial_action: initial.expect("checked"),
            true_cvar: self.true_cvar,
            regret_grid: self.regret_grid,
            convergence_eps: self.convergence_eps,
            tail_fraction: self.tail_fraction,
            sweep_betas: self.sweep_betas.clone(),
            game: game.expect("checked"),
        })
    }

    fn resolve_alpha(&self, agents: Option<usize>, errs: &mut Vec<String>) -> Option<Vec<RiskLevel>> {
        let mut levels = Vec::new();
        let mut ok = true;
        for a in &self.alpha {
            match RiskLevel::new(*a) {
                Ok(l) => levels.push(l),
                Err(e) => {
                    errs.push(format!("alpha: {e}"));
                    ok = false;
                }
            }
        }
        let n = agents?;
        if levels.len() == 1 {
            levels = vec![levels[0]; n];
        }
        if self.alpha.len() != 1 && self.alpha.len() != n {
            errs.push(format!("alpha must list 1 or {n} risk levels, got {}", self.alpha.len()));
            ok = false;
        }
        ok.then_some(levels)
    }

    fn resolve_support(&self, game: Option<&dyn GameOracle>, errs: &mut Vec<String>) -> Option<CostSupport> {
        let range = match (self.support, &self.scenario) {
            (Some(s), _) => s,
            (None, ScenarioConfig::Cournot) => [COURNOT_SUPPORT.0, COURNOT_SUPPORT.1],
            (None, ScenarioConfig::Quadratic { .. }) => [0.0, game?.cost_bound()],
        };
        match CostSupport::new(range[0], range[1], self.bins.max(1)) {
            Ok(s) => Some(s),
            Err(e) => {
                errs.push(format!("support: {e}"));
                None
            }
        }
    }

    fn resolve_schedule(&self, bound_u: Option<f64>, errs: &mut Vec<String>) -> Option<(Vec<usize>, Vec<f64>)> {
        let horizon = self.episodes;
        let ln_term = (2.0 * horizon as f64 / self.gamma).ln();
        if let Some(counts) = &self.schedule.sample_counts {
            let mut ok = true;
            if counts.len() != horizon {
                errs.push(format!(
                    "schedule.sample_counts has {} entries, expected one per episode ({horizon})",
                    counts.len()
                ));
                ok = false;
            }
            if counts.contains(&0) {
                errs.push("schedule.sample_counts entries must be at least 1".into());
                ok = false;
            }
            if self.schedule.b.is_some() {
                errs.push("schedule.b cannot be combined with schedule.sample_counts".into());
                ok = false;
            }
            if !ok {
                return None;
            }
            let radii = counts.iter().map(|n| (ln_term / (2.0 * *n as f64)).sqrt()).collect();
            return Some((counts.clone(), radii));
        }
        let (Some(a), Some(b)) = (self.schedule.a, self.schedule.b) else {
            errs.push("schedule needs both a and b, or sample_counts".into());
            return None;
        };
        let u = bound_u?;
        match SamplingSchedule::new(a, b, u, horizon) {
            Ok(s) if horizon > 0 => {
                let radii = (1..=horizon).map(|t| (ln_term / (2.0 * s.raw(t))).sqrt()).collect();
                Some((s.counts(), radii))
            }
            Ok(_) => None,
            Err(e) => {
                errs.push(format!("schedule: {e}"));
                None
            }
        }
    }

    fn resolve_initial(&self, game: &dyn GameOracle, errs: &mut Vec<String>) -> Option<Vec<Vec<f64>>> {
        let n = game.num_agents();
        let Some(init) = &self.initial_action else {
            return Some(match self.scenario {
                ScenarioConfig::Cournot => vec![vec![COURNOT_DEFAULT_INITIAL_ACTION]; n],
                ScenarioConfig::Quadratic { .. } => (0..n).map(|i| game.action_set(i).center()).collect(),
            });
        };
        let init = if init.len() == 1 && n > 1 { vec![init[0].clone(); n] } else { init.clone() };
        if init.len() != n {
            errs.push(format!("initial_action must list 1 or {n} actions, got {}", init.len()));
            return None;
        }
        let mut ok = true;
        for (i, x) in init.iter().enumerate() {
            let set = game.action_set(i);
            if x.len() != set.dim() {
                errs.push(format!("initial_action[{i}] has dimension {}, expected {}", x.len(), set.dim()));
                ok = false;
            } else if !set.contains(x, 0.0) {
                errs.push(format!("initial_action[{i}] lies outside the action set"));
                ok = false;
            }
        }
        ok.then_some(init)
    }

    fn resolve_variant(
        &self,
        k: usize,
        v: &VariantConfig,
        game: Option<&dyn GameOracle>,
        bound_u: Option<f64>,
        errs: &mut Vec<String>,
    ) -> Option<ResolvedVariant> {
        let before = errs.len();
        let at = |field: &str| format!("variants[{k}].{field}");
        let derived = match (v.theorem1, game, bound_u) {
            (Some(t1), Some(g), Some(u)) => {
                let dim = (0..g.num_agents()).map(|i| g.action_set(i).dim()).max().unwrap_or(1);
                let diameter = (0..g.num_agents()).map(|i| g.action_set(i).diameter()).fold(0.0, f64::max);
                let a = match self.schedule.a {
                    Some(a) => a,
                    None => {
                        errs.push(format!("{}: needs schedule.a", at("theorem1")));
                        return None;
                    }
                };
                match theorem1_schedule(Theorem1Inputs {
                    horizon: self.episodes.max(1),
                    a,
                    diameter,
                    bound_u: u,
                    agents: g.num_agents(),
                    dim,
                    l0_scale: t1.l0_scale,
                }) {
                    Ok(s) => Some(s),
                    Err(e) => {
                        errs.push(format!("{}: {e}", at("theorem1")));
                        return None;
                    }
                }
            }
            (Some(_), _, _) => return None,
            (None, _, _) => None,
        };
        let eta = v.eta.or(derived.map(|d| d.eta));
        let delta = v.delta.or(derived.map(|d| d.delta));
        let (Some(eta), Some(delta)) = (eta, delta) else {
            errs.push(format!("{}: eta and delta are required unless theorem1 is set", at("")));
            return None;
        };
        if !(eta >= 0.0 && eta.is_finite()) {
            errs.push(format!("{} must be non-negative, got {eta}", at("eta")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            errs.push(format!("{} must be positive, got {delta}", at("delta")));
        } else if let Some(g) = game {
            for i in 0..g.num_agents() {
                let half = g.action_set(i).min_half_width();
                if delta >= half {
                    errs.push(format!(
                        "{}: {delta} leaves an empty shrunk set for agent {i} (half width {half})",
                        at("delta")
                    ));
                }
            }
        }
        let variant = match v.kind {
            VariantKind::OnePoint => Variant::OnePoint,
            VariantKind::SampleReuse => Variant::SampleReuse,
            VariantKind::ResidualFeedback => Variant::ResidualFeedback,
            VariantKind::Momentum => {
                let beta = v.beta.or(derived.map(|d| d.beta));
                match beta.map(Variant::momentum) {
                    Some(Ok(m)) => m,
                    Some(Err(_)) => {
                        errs.push(format!("{} must lie in [0, 1), got {}", at("beta"), beta.unwrap_or(f64::NAN)));
                        return None;
                    }
                    None => {
                        errs.push(format!("{}: momentum needs beta or theorem1", at("")));
                        return None;
                    }
                }
            }
        };
        if v.beta.is_some() && v.kind != VariantKind::Momentum {
            errs.push(format!("{}: only momentum variants take beta", at("beta")));
        }
        if let Some(name) = &v.name {
            if name.is_empty() || name.contains([',', '"', '\n', '\r']) {
                errs.push(format!("{}: must be non-empty without commas, quotes or newlines", at("name")));
            }
        }
        if errs.len() != before {
            return None;
        }
        Some(ResolvedVariant {
            label: v.name.clone().unwrap_or_else(|| variant.label()),
            variant,
            eta,
            delta,
            below_horizon_threshold: derived.map(|d| d.below_horizon_threshold),
        })
    }
}

fn check_betas(betas: &[f64], errs: &mut Vec<String>) {
    if betas.is_empty() {
        errs.push("beta list must not be empty".into());
    }
    for b in betas {
        if !(0.0..1.0).contains(b) {
            errs.push(format!("beta {b} must lie in [0, 1)"));
        }
    }
}

/// Validates a beta list for a sweep.
pub fn validate_betas(betas: &[f64]) -> Result<(), ValidationReport> {
    let mut errs = Vec::new();
    check_betas(betas, &mut errs);
    if errs.is_empty() {
        Ok(())
    } else {
        Err(ValidationReport { violations: errs })
    }
}

fn build_game(s: &ScenarioConfig) -> Result<Arc<dyn GameOracle>, String> {
    match s {
        ScenarioConfig::Cournot => Ok(Arc::new(CournotGame::new())),
        ScenarioConfig::Quadratic { centers, coupling, lo, hi } => {
            QuadraticTestGame::new(centers.clone(), *coupling, lo.unwrap_or(0.0), hi.unwrap_or(1.0))
                .map(|g| Arc::new(g) as Arc<dyn GameOracle>)
                .map_err(|e| format!("scenario: {e}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedVariant {
    pub label: String,
    pub variant: Variant,
    pub eta: f64,
    pub delta: f64,
    /// Present for parameter-schedule variants.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub below_horizon_threshold: Option<bool>,
}

/// Configuration with every default expanded; echoed into the manifest.
#[derive(Clone, Serialize)]
pub struct ResolvedConfig {
    pub scenario: ScenarioConfig,
    pub episodes: usize,
    pub schedule: ScheduleConfig,
    pub sample_counts: Vec<usize>,
    #[serde(skip)]
    pub dkw_radii: Vec<f64>,
    pub variants: Vec<ResolvedVariant>,
    pub alpha: Vec<RiskLevel>,
    pub trials: usize,
    pub seed: u64,
    pub support: CostSupport,
    pub bound_u: f64,
    pub gamma: f64,
    pub initial_action: Vec<Vec<f64>>,
    pub true_cvar: CvarMethod,
    pub regret_grid: Option<usize>,
    pub convergence_eps: f64,
    pub tail_fraction: f64,
    pub sweep_betas: Option<Vec<f64>>,
    #[serde(skip)]
    pub game: Arc<dyn GameOracle>,
}

impl fmt::Debug for ResolvedConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResolvedConfig")
            .field("scenario", &self.scenario)
            .field("episodes", &self.episodes)
            .field("variants", &self.variants)
            .field("trials", &self.trials)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

impl ResolvedConfig {
    pub fn num_agents(&self) -> usize {
        self.game.num_agents()
    }

    pub fn dims(&self) -> Vec<usize> {
        (0..self.num_agents()).map(|i| self.game.action_set(i).dim()).collect()
    }

    pub fn total_samples_per_trial(&self) -> usize {
        self.sample_counts.iter().sum()
    }
}

/// Every violation found while validating a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn single(msg: impl Into<String>) -> Self {
        Self { violations: vec![msg.into()] }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} config violation(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}
