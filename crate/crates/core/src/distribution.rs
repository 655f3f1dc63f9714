//! Fixed-bin histograms over a bounded cost interval.
//!
//! Every empirical distribution in the learner lives on a [`CostSupport`]:
//! `bins` equal-width cells covering `[lo, hi]`. A bin is represented by its
//! midpoint when computing tail expectations. The same support is shared by
//! the fresh per-episode histogram and the running momentum estimate, so all
//! pairwise operations (mixing, Kolmogorov distance) require matching supports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when validating that weights form a probability vector.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("no samples")]
    NoSamples,
    #[error("invalid support: lo={lo}, hi={hi}, bins={bins}")]
    InvalidSupport { lo: f64, hi: f64, bins: usize },
    #[error("risk level must lie in (0, 1], got {0}")]
    InvalidRiskLevel(f64),
    #[error("momentum parameter must lie in [0, 1), got {0}")]
    InvalidBeta(f64),
    #[error("distributions live on different supports")]
    SupportMismatch,
    #[error("weight vector has {got} entries but support has {expected} bins")]
    WrongLength { expected: usize, got: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}

/// Equal-width binning of the cost interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSupport {
    lo: f64,
    hi: f64,
    bins: usize,
}

impl CostSupport {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self, DistributionError> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi || bins == 0 {
            return Err(DistributionError::InvalidSupport { lo, hi, bins });
        }
        Ok(Self { lo, hi, bins })
    }

    /// Symmetric support `[-bound, bound]`.
    pub fn symmetric(bound: f64, bins: usize) -> Result<Self, DistributionError> {
        Self::new(-bound, bound, bins)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        self.lo + self.bin_width() * (k as f64 + 0.5)
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.bins).map(move |k| self.midpoint(k))
    }

    /// Largest absolute midpoint value; the cost bound the binned law obeys.
    pub fn magnitude_bound(&self) -> f64 {
        self.midpoint(0).abs().max(self.midpoint(self.bins - 1).abs())
    }

    /// Bin index for a value, and whether the value had to be clamped.
    ///
    /// Interior edges belong to the higher bin; `hi` itself belongs to the top bin.
    pub fn locate(&self, value: f64) -> (usize, bool) {
        if value.is_nan() || value < self.lo {
            return (0, true);
        }
        if value > self.hi {
            return (self.bins - 1, true);
        }
        let scaled = (value - self.lo) * self.bins as f64 / (self.hi - self.lo);
        let k = (scaled.floor() as usize).min(self.bins - 1);
        (k, false)
    }
}

/// Risk level `alpha` in `(0, 1]`: the fraction of worst outcomes averaged.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(alpha: f64) -> Result<Self, DistributionError> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            Err(DistributionError::InvalidRiskLevel(alpha))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for RiskLevel {
    type Error = DistributionError;

    fn try_from(alpha: f64) -> Result<Self, Self::Error> {
        Self::new(alpha)
    }
}

impl From<RiskLevel> for f64 {
    fn from(level: RiskLevel) -> f64 {
        level.0
    }
}

/// Probability weights over the bins of a [`CostSupport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    support: CostSupport,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    /// Builds a distribution from non-negative weights, renormalizing to sum 1.
    pub fn from_weights(support: CostSupport, weights: Vec<f64>) -> Result<Self, DistributionError> {
        if weights.len() != support.bins() {
            return Err(DistributionError::WrongLength {
                expected: support.bins(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DistributionError::InvalidWeights(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(DistributionError::InvalidWeights("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { support, weights })
    }

    /// All mass on bin `k`.
    pub fn point_mass(support: CostSupport, k: usize) -> Result<Self, DistributionError> {
        let mut weights = vec![0.0; support.bins()];
        *weights.get_mut(k).ok_or(DistributionError::WrongLength {
            expected: support.bins(),
            got: k + 1,
        })? = 1.0;
        Ok(Self { support, weights })
    }

    /// Empirical distribution of equally weighted samples.
    ///
    /// Returns the histogram and the number of samples that fell outside the
    /// support and were clamped into a boundary bin.
    pub fn from_samples(samples: &[f64], support: CostSupport) -> Result<(Self, usize), DistributionError> {
        if samples.is_empty() {
            return Err(DistributionError::NoSamples);
        }
        let mut counts = vec![0usize; support.bins()];
        let mut clamped = 0;
        for &s in samples {
            let (k, was_clamped) = support.locate(s);
            counts[k] += 1;
            clamped += usize::from(was_clamped);
        }
        let n = samples.len() as f64;
        let weights = counts.into_iter().map(|c| c as f64 / n).collect();
        Ok((Self { support, weights }, clamped))
    }

    /// Histogram of a weighted sample set; weights are renormalized.
    pub fn from_weighted_samples(
        samples: &[(f64, f64)],
        support: CostSupport,
    ) -> Result<(Self, usize), DistributionError> {
        if samples.is_empty() {
            return Err(DistributionError::NoSamples);
        }
        let mut weights = vec![0.0; support.bins()];
        let mut clamped = 0;
        for &(value, weight) in samples {
            if !weight.is_finite() || weight < 0.0 {
                return Err(DistributionError::InvalidWeights(format!("sample weight {weight}")));
            }
            let (k, was_clamped) = support.locate(value);
            weights[k] += weight;
            clamped += usize::from(was_clamped);
        }
        Ok((Self::from_weights(support, weights)?, clamped))
    }

    pub fn support(&self) -> &CostSupport {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Expected value under the midpoint representation.
    pub fn mean(&self) -> f64 {
        self.support
            .midpoints()
            .zip(&self.weights)
            .map(|(y, p)| y * p)
            .sum()
    }

    /// Cumulative weights `F(y_k)` for every bin.
    pub fn cdf(&self) -> Vec<f64> {
        self.weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect()
    }

    pub fn is_valid(&self) -> bool {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().all(|w| *w >= 0.0) && (total - 1.0).abs() <= WEIGHT_SUM_TOLERANCE
    }

    /// Conditional value at risk: mean of the worst `alpha` probability mass.
    ///
    /// Mass is taken from the top bin downward. The lowest bin touched is the
    /// value-at-risk bin (the smallest index with `F(y_k) >= 1 - alpha`), and
    /// only the part of its weight needed to reach exactly `alpha` is used.
    pub fn cvar(&self, level: RiskLevel) -> f64 {
        let alpha = level.value();
        let mut remaining = alpha;
        let mut acc = 0.0;
        for k in (0..self.weights.len()).rev() {
            if remaining <= 0.0 {
                break;
            }
            let take = self.weights[k].min(remaining);
            acc += take * self.support.midpoint(k);
            remaining -= take;
        }
        acc / (alpha - remaining.max(0.0))
    }

    /// `beta * self + (1 - beta) * current`, elementwise.
    pub fn mix(&self, current: &Self, beta: f64) -> Result<Self, DistributionError> {
        if !(0.0..1.0).contains(&beta) {
            return Err(DistributionError::InvalidBeta(beta));
        }
        if self.support != current.support {
            return Err(DistributionError::SupportMismatch);
        }
        let weights = self
            .weights
            .iter()
            .zip(&current.weights)
            .map(|(p, c)| beta * p + (1.0 - beta) * c)
            .collect();
        Ok(Self {
            support: self.support,
            weights,
        })
    }

    /// `sup_y |F(y) - G(y)|` over the shared bin edges.
    pub fn kolmogorov_distance(&self, other: &Self) -> Result<f64, DistributionError> {
        if self.support != other.support {
            return Err(DistributionError::SupportMismatch);
        }
        let mut f = 0.0;
        let mut g = 0.0;
        let mut sup: f64 = 0.0;
        for (p, q) in self.weights.iter().zip(&other.weights) {
            f += p;
            g += q;
            sup = sup.max((f - g).abs());
        }
        Ok(sup.min(1.0))
    }
}

/// Fresh histogram of one episode's samples.
pub fn edf_from_samples(
    samples: &[f64],
    support: CostSupport,
) -> Result<(DiscreteDistribution, usize), DistributionError> {
    DiscreteDistribution::from_samples(samples, support)
}

/// Momentum update of the running distribution estimate.
pub fn momentum_mix(
    prev: &DiscreteDistribution,
    current: &DiscreteDistribution,
    beta: f64,
) -> Result<DiscreteDistribution, DistributionError> {
    prev.mix(current, beta)
}

pub fn cvar(dist: &DiscreteDistribution, level: RiskLevel) -> f64 {
    dist.cvar(level)
}

pub fn kolmogorov_distance(
    f: &DiscreteDistribution,
    g: &DiscreteDistribution,
) -> Result<f64, DistributionError> {
    f.kolmogorov_distance(g)
}

/// CVaR of an un-binned weighted sample set, computed by sorting.
///
/// Weights are normalized by their total, so unnormalized inputs are accepted.
pub fn cvar_exact_oracle(weighted_samples: &[(f64, f64)], level: RiskLevel) -> Result<f64, DistributionError> {
    if weighted_samples.is_empty() {
        return Err(DistributionError::NoSamples);
    }
    if weighted_samples.iter().any(|(v, w)| !v.is_finite() || !w.is_finite() || *w < 0.0) {
        return Err(DistributionError::InvalidWeights(
            "sample values must be finite and weights non-negative".into(),
        ));
    }
    let total: f64 = weighted_samples.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(DistributionError::InvalidWeights("weights sum to zero".into()));
    }
    let mut sorted = weighted_samples.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let alpha = level.value();
    let mut remaining = alpha;
    let mut acc = 0.0;
    for (value, weight) in sorted {
        if remaining <= 0.0 {
            break;
        }
        let take = (weight / total).min(remaining);
        acc += take * value;
        remaining -= take;
    }
    Ok(acc / (alpha - remaining.max(0.0)))
}
