//! SFT and GRPO updates with analytic gradients.
//!
//! Both trainers work on logits `z = W [x; 1] / tau`, so every per-example
//! gradient has the form `(dL/dz) [x; 1]^T / tau`.

use dcsft_core::grpo::{clipped_term, clipped_term_grad, kl_categorical, GrpoConfig, RewardGroup};
use dcsft_core::rng::SeededRng;
use dcsft_core::{classify_difficulty, reward_of, DifficultyLabel};
use serde::{Deserialize, Serialize};

use crate::policy::{frobenius_norm, SoftmaxPolicy};
use crate::task::LabEpisode;
use crate::{LabError, Result};

/// One draw from a categorical distribution.
pub fn draw_class(probs: &[f64], rng: &mut SeededRng) -> usize {
    let u = rng.unit_f64();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// `g` independent class draws from the policy at its sampling temperature.
pub fn sample_responses_lab(policy: &SoftmaxPolicy, x: &[f64], g: usize, rng: &mut SeededRng) -> Result<Vec<usize>> {
    if g < 2 {
        return Err(LabError::invalid(format!("group size must be >= 2, got {g}")));
    }
    let probs = policy.probs(x)?;
    Ok((0..g).map(|_| draw_class(&probs, rng)).collect())
}

/// Binary rewards of `draws` against `gold`.
pub fn rewards_for(draws: &[usize], gold: usize) -> Vec<f64> {
    draws.iter().map(|d| reward_of(*d == gold)).collect()
}

fn accumulate(grad: &mut [f64], policy: &SoftmaxPolicy, x: &[f64], dz: &[f64], scale: f64) {
    let cols = policy.cols();
    let d = policy.dim();
    for (row, dzc) in grad.chunks_exact_mut(cols).zip(dz) {
        let f = dzc * scale;
        if f == 0.0 {
            continue;
        }
        for (g, xi) in row[..d].iter_mut().zip(x) {
            *g += f * xi;
        }
        row[d] += f;
    }
}

fn check_batch(policy: &SoftmaxPolicy, batch: &[&LabEpisode]) -> Result<()> {
    if batch.is_empty() {
        return Err(LabError::invalid("empty batch"));
    }
    for ep in batch {
        if ep.x.len() != policy.dim() {
            return Err(LabError::invalid(format!(
                "episode has {} features, policy expects {}",
                ep.x.len(),
                policy.dim()
            )));
        }
        if ep.gold_class >= policy.classes() {
            return Err(LabError::invalid(format!(
                "gold class {} out of range for {} classes",
                ep.gold_class,
                policy.classes()
            )));
        }
    }
    Ok(())
}

/// Mean negative log-likelihood of the gold classes.
pub fn sft_loss(policy: &SoftmaxPolicy, batch: &[&LabEpisode]) -> Result<f64> {
    check_batch(policy, batch)?;
    let mut total = 0.0;
    for ep in batch {
        total -= policy.log_probs(&ep.x)?[ep.gold_class];
    }
    Ok(total / batch.len() as f64)
}

/// Gradient of [`sft_loss`]: the batch mean of `(p - onehot(gold)) [x; 1]^T / tau`.
pub fn sft_gradient(policy: &SoftmaxPolicy, batch: &[&LabEpisode]) -> Result<Vec<f64>> {
    check_batch(policy, batch)?;
    let mut grad = vec![0.0; policy.weights().len()];
    let scale = 1.0 / (batch.len() as f64 * policy.temperature());
    for ep in batch {
        let mut dz = policy.probs_unchecked(&ep.x);
        dz[ep.gold_class] -= 1.0;
        accumulate(&mut grad, policy, &ep.x, &dz, scale);
    }
    Ok(grad)
}

/// One gradient-descent step on the mean NLL. Returns the Frobenius norm of
/// the gradient that was applied.
pub fn sft_step(policy: &mut SoftmaxPolicy, batch: &[&LabEpisode], lr: f64) -> Result<f64> {
    let grad = sft_gradient(policy, batch)?;
    policy.apply_gradient(&grad, lr)?;
    Ok(frobenius_norm(&grad))
}

/// The policy being trained, the policy that generated the current samples
/// and the frozen KL reference.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshots {
    pub current: SoftmaxPolicy,
    pub old: SoftmaxPolicy,
    pub reference: SoftmaxPolicy,
}

impl PolicySnapshots {
    /// Starts all three snapshots at `policy`.
    pub fn new(policy: SoftmaxPolicy) -> Self {
        Self {
            old: policy.clone(),
            reference: policy.clone(),
            current: policy,
        }
    }

    fn check(&self) -> Result<()> {
        let shape = |p: &SoftmaxPolicy| (p.classes(), p.dim());
        if shape(&self.current) != shape(&self.old) || shape(&self.current) != shape(&self.reference) {
            return Err(LabError::invalid("snapshots disagree on shape"));
        }
        Ok(())
    }
}

/// A prompt with `g` single-token responses drawn from the old policy.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawnGroup<'a> {
    pub episode: &'a LabEpisode,
    pub draws: Vec<usize>,
    pub advantages: Vec<f64>,
    pub difficulty: DifficultyLabel,
}

impl<'a> DrawnGroup<'a> {
    pub fn new(episode: &'a LabEpisode, draws: Vec<usize>, config: &GrpoConfig) -> Result<Self> {
        let rewards = rewards_for(&draws, episode.gold_class);
        let difficulty = classify_difficulty(&rewards)?;
        let group = RewardGroup::with_mode(rewards, config.delta, config.std_mode)?;
        Ok(Self {
            episode,
            draws,
            advantages: group.advantages,
            difficulty,
        })
    }

    pub fn is_zero_update(&self) -> bool {
        self.difficulty != DifficultyLabel::Medium
    }
}

/// Counts of groups in one GRPO batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStats {
    pub groups: usize,
    /// All responses correct: zero advantage everywhere.
    pub zero_update_easy: usize,
    /// All responses wrong: zero advantage everywhere.
    pub zero_update_hard: usize,
}

impl GroupStats {
    pub fn of(groups: &[DrawnGroup<'_>]) -> Self {
        let mut s = Self {
            groups: groups.len(),
            ..Self::default()
        };
        for g in groups {
            match g.difficulty {
                DifficultyLabel::Easy => s.zero_update_easy += 1,
                DifficultyLabel::Hard => s.zero_update_hard += 1,
                DifficultyLabel::Medium => {}
            }
        }
        s
    }

    pub fn zero_update(&self) -> usize {
        self.zero_update_easy + self.zero_update_hard
    }

    pub fn add(&mut self, other: &GroupStats) {
        self.groups += other.groups;
        self.zero_update_easy += other.zero_update_easy;
        self.zero_update_hard += other.zero_update_hard;
    }
}

/// Draws `config.g` responses per episode from `old`.
pub fn draw_groups<'a>(
    old: &SoftmaxPolicy,
    batch: &[&'a LabEpisode],
    config: &GrpoConfig,
    rng: &mut SeededRng,
) -> Result<Vec<DrawnGroup<'a>>> {
    check_batch(old, batch)?;
    batch
        .iter()
        .map(|ep| {
            let draws = sample_responses_lab(old, &ep.x, config.g, rng)?;
            DrawnGroup::new(ep, draws, config)
        })
        .collect()
}

/// `-objective + beta * mean KL(current || reference)` for fixed draws.
pub fn grpo_loss(snapshots: &PolicySnapshots, groups: &[DrawnGroup<'_>], config: &GrpoConfig) -> Result<f64> {
    snapshots.check()?;
    if groups.is_empty() {
        return Err(LabError::invalid("empty batch"));
    }
    let mut objective = 0.0;
    let mut kl = 0.0;
    for group in groups {
        let x = &group.episode.x;
        let lp = snapshots.current.log_probs(x)?;
        let lp_old = snapshots.old.log_probs(x)?;
        let mut inner = 0.0;
        for (y, adv) in group.draws.iter().zip(&group.advantages) {
            let ratio = (lp[*y] - lp_old[*y]).exp();
            inner += clipped_term(ratio, *adv, config.epsilon);
        }
        objective += inner / group.draws.len() as f64;
        if config.beta != 0.0 {
            kl += kl_categorical(&snapshots.current.probs(x)?, &snapshots.reference.probs(x)?)?;
        }
    }
    let n = groups.len() as f64;
    Ok(-objective / n + config.beta * kl / n)
}

/// Analytic gradient of [`grpo_loss`] with respect to the current weights.
///
/// With `r = pi(y|x) / pi_old(y|x)`, `dr/dz = r (onehot(y) - p)`; the clipped
/// term passes `A` through only while its unclipped branch is active. The KL
/// term contributes `p * (log p - log q - KL)` per logit.
pub fn grpo_gradient(
    snapshots: &PolicySnapshots,
    groups: &[DrawnGroup<'_>],
    config: &GrpoConfig,
) -> Result<Vec<f64>> {
    snapshots.check()?;
    if groups.is_empty() {
        return Err(LabError::invalid("empty batch"));
    }
    let current = &snapshots.current;
    let classes = current.classes();
    let mut grad = vec![0.0; current.weights().len()];
    let scale = 1.0 / (groups.len() as f64 * current.temperature());
    let mut dz = vec![0.0; classes];
    for group in groups {
        let x = &group.episode.x;
        dz.iter_mut().for_each(|v| *v = 0.0);
        let mut touched = false;
        if !group.is_zero_update() {
            let lp = current.log_probs(x)?;
            let lp_old = snapshots.old.log_probs(x)?;
            let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
            let g = group.draws.len() as f64;
            for (y, adv) in group.draws.iter().zip(&group.advantages) {
                let ratio = (lp[*y] - lp_old[*y]).exp();
                let d_obj = clipped_term_grad(ratio, *adv, config.epsilon) * ratio / g;
                if d_obj == 0.0 {
                    continue;
                }
                // loss = -objective
                for (c, v) in dz.iter_mut().enumerate() {
                    *v += d_obj * p[c];
                }
                dz[*y] -= d_obj;
                touched = true;
            }
        }
        if config.beta != 0.0 {
            let lp = current.log_probs(x)?;
            let lq = snapshots.reference.log_probs(x)?;
            let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
            let kl: f64 = p.iter().zip(lp.iter().zip(&lq)).map(|(pi, (a, b))| pi * (a - b)).sum();
            for c in 0..classes {
                dz[c] += config.beta * p[c] * (lp[c] - lq[c] - kl);
            }
            touched = true;
        }
        if touched {
            accumulate(&mut grad, current, x, &dz, scale);
        }
    }
    Ok(grad)
}

/// One GRPO step: draw groups from the old policy with `seed`, descend the
/// loss, then refresh the old policy to the updated weights. Returns the
/// gradient norm and the batch's group counts.
pub fn grpo_step(
    snapshots: &mut PolicySnapshots,
    batch: &[&LabEpisode],
    config: &GrpoConfig,
    lr: f64,
    seed: u64,
) -> Result<(f64, GroupStats)> {
    config.validate()?;
    snapshots.check()?;
    let mut rng = SeededRng::new(seed);
    let groups = draw_groups(&snapshots.old, batch, config, &mut rng)?;
    let stats = GroupStats::of(&groups);
    let grad = grpo_gradient(snapshots, &groups, config)?;
    snapshots.current.apply_gradient(&grad, lr)?;
    snapshots.old = snapshots.current.clone();
    Ok((frobenius_norm(&grad), stats))
}
