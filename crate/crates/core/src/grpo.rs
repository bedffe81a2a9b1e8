//! Group-relative policy optimization arithmetic.
//!
//! Each prompt gets `g` sampled responses. Their rewards are normalized within
//! the group,
//!
//! ```text
//! A_k = (r_k - mean(r)) / (std(r) + delta)
//! ```
//!
//! and the policy maximizes the clipped importance-ratio surrogate
//! `min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)`, length-normalized per
//! response and averaged over the group. Groups whose rewards are all equal
//! have every `A_k = 0` and therefore contribute no gradient at all, which is
//! what makes the objective an implicit filter on easy and hard prompts.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which standard deviation normalizes the advantages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdMode {
    /// Divide by `g`.
    #[default]
    Population,
    /// Divide by `g - 1`.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub g: usize,
    pub epsilon: f64,
    pub beta: f64,
    pub delta: f64,
    pub std_mode: StdMode,
}

impl GrpoConfig {
    pub const DEFAULT_EPSILON: f64 = 0.2;
    pub const DEFAULT_BETA: f64 = 0.04;
    pub const DEFAULT_DELTA: f64 = 1e-4;

    pub fn validate(&self) -> Result<()> {
        if self.g < 2 {
            return Err(Error::invalid(format!("group size must be >= 2, got {}", self.g)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!(
                "clip width must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("KL weight must be >= 0, got {}", self.beta)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(format!("delta must be > 0, got {}", self.delta)));
        }
        Ok(())
    }
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            g: 8,
            epsilon: Self::DEFAULT_EPSILON,
            beta: Self::DEFAULT_BETA,
            delta: Self::DEFAULT_DELTA,
            std_mode: StdMode::Population,
        }
    }
}

/// Rewards of one prompt's group together with their normalized advantages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardGroup {
    pub rewards: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub advantages: Vec<f64>,
}

impl RewardGroup {
    pub fn new(rewards: Vec<f64>, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::invalid(format!("delta must be > 0, got {delta}")));
        }
        Self::with_mode(rewards, delta, StdMode::Population)
    }

    /// Like [`RewardGroup::new`] but with a selectable standard deviation.
    /// `delta = 0` is accepted; a zero-spread group then yields zeros instead
    /// of dividing by zero.
    pub fn with_mode(rewards: Vec<f64>, delta: f64, mode: StdMode) -> Result<Self> {
        let g = rewards.len();
        if g < 2 {
            return Err(Error::invalid(format!("group needs at least 2 rewards, got {g}")));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("delta must be >= 0, got {delta}")));
        }
        if let Some(bad) = rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::invalid(format!("rewards must be finite, got {bad}")));
        }
        // Work relative to the first reward so an all-equal group produces
        // exactly zero deviations regardless of rounding in the mean.
        let pivot = rewards[0];
        let shifted: Vec<f64> = rewards.iter().map(|r| r - pivot).collect();
        let shifted_mean = shifted.iter().sum::<f64>() / g as f64;
        let deviations: Vec<f64> = shifted.iter().map(|s| s - shifted_mean).collect();
        let ss: f64 = deviations.iter().map(|d| d * d).sum();
        let denom = match mode {
            StdMode::Population => g as f64,
            StdMode::Sample => (g - 1) as f64,
        };
        let std = (ss / denom).sqrt();
        let scale = std + delta;
        let advantages = if scale == 0.0 {
            vec![0.0; g]
        } else {
            deviations.iter().map(|d| d / scale).collect()
        };
        Ok(Self {
            mean: pivot + shifted_mean,
            std,
            rewards,
            advantages,
        })
    }

    pub fn is_zero_update(&self) -> bool {
        self.rewards.iter().all(|r| *r == self.rewards[0])
    }
}

/// Group-normalized advantages with population standard deviation.
pub fn group_advantages(rewards: &[f64], delta: f64) -> Result<Vec<f64>> {
    Ok(RewardGroup::new(rewards.to_vec(), delta)?.advantages)
}

/// `min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)`.
pub fn clipped_term(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Derivative of [`clipped_term`] with respect to the ratio: `A` while the
/// unclipped branch is the active minimum, zero once clipping takes over.
pub fn clipped_term_grad(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    if ratio * advantage <= clipped * advantage {
        advantage
    } else {
        0.0
    }
}

/// One prompt's contribution to the surrogate: per-response advantages and
/// per-token probability ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptGroup {
    pub advantages: Vec<f64>,
    pub token_ratios: Vec<Vec<f64>>,
}

impl PromptGroup {
    /// Responses made of a single token each.
    pub fn single_token(advantages: Vec<f64>, ratios: Vec<f64>) -> Self {
        Self {
            advantages,
            token_ratios: ratios.into_iter().map(|r| vec![r]).collect(),
        }
    }

    /// `(1/G) sum_k (1/|y_k|) sum_t clipped_term(ratio_kt, A_k)`.
    pub fn objective(&self, epsilon: f64) -> Result<f64> {
        let g = self.advantages.len();
        if g == 0 {
            return Err(Error::invalid("empty response group"));
        }
        if self.token_ratios.len() != g {
            return Err(Error::invalid(format!(
                "group has {g} advantages but {} responses",
                self.token_ratios.len()
            )));
        }
        let mut total = 0.0;
        for (adv, ratios) in self.advantages.iter().zip(&self.token_ratios) {
            if ratios.is_empty() {
                return Err(Error::invalid("response with no tokens"));
            }
            if let Some(bad) = ratios.iter().find(|r| !(**r > 0.0)) {
                return Err(Error::invalid(format!("ratios must be > 0, got {bad}")));
            }
            let per_token: f64 = ratios.iter().map(|r| clipped_term(*r, *adv, epsilon)).sum();
            total += per_token / ratios.len() as f64;
        }
        Ok(total / g as f64)
    }
}

/// Surrogate objective averaged over prompts.
pub fn grpo_objective(groups: &[PromptGroup], config: &GrpoConfig) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::invalid("no prompt groups"));
    }
    let mut sum = 0.0;
    for g in groups {
        sum += g.objective(config.epsilon)?;
    }
    Ok(sum / groups.len() as f64)
}

/// `KL(p || q) = sum p log(p / q)` over a shared categorical support.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "support mismatch: {} vs {} outcomes",
            p.len(),
            q.len()
        )));
    }
    if p.is_empty() {
        return Err(Error::invalid("empty distribution"));
    }
    for dist in [p, q] {
        if dist.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let total: f64 = dist.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
    }
    let mut kl = 0.0;
    for (pi, qi) in p.iter().zip(q) {
        if *pi == 0.0 {
            continue;
        }
        if *qi == 0.0 {
            return Err(Error::invalid("q must be positive wherever p is"));
        }
        kl += pi * (pi / qi).ln();
    }
    // Rounding can leave a tiny negative total for p == q.
    Ok(kl.max(0.0))
}

/// True iff every reward in the group is identical, i.e. every advantage is
/// exactly zero and the surrogate has zero gradient for any ratios.
pub fn is_zero_update_group(rewards: &[f64]) -> Result<bool> {
    if rewards.len() < 2 {
        return Err(Error::invalid(format!(
            "group needs at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    Ok(rewards.iter().all(|r| *r == rewards[0]))
}
