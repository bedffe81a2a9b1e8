//! Seeded experiments: warm-up, difficulty bucketing, curation, training.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use dcsft_core::curator::{build_curated_set, Balance, BucketCounts, CurationPlan, Variant};
use dcsft_core::grpo::GrpoConfig;
use dcsft_core::rng::{derive_seed, SeededRng};
use dcsft_core::{DifficultyLabel, SamplingParams, VerifiedResponseSet};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::evaluate;
use crate::policy::{frobenius_norm, SoftmaxPolicy};
use crate::stats::{mean, std_dev};
use crate::task::{gen_task, LabEpisode, LabTask, SyntheticTaskSpec};
use crate::train::{grpo_step, rewards_for, sample_responses_lab, sft_gradient, GroupStats, PolicySnapshots};
use crate::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trainer {
    #[default]
    Sft,
    Grpo,
}

/// Brief full-batch SFT on a held-out slice of the train data that yields
/// the policy used for difficulty assessment and as the starting point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmupConfig {
    pub steps: usize,
    pub lr: f64,
    /// Fraction of the generated train episodes held out for warm-up and
    /// excluded from everything after it.
    pub split: f64,
}

impl Default for WarmupConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            lr: 1.0,
            split: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub variant: Variant,
    pub balance: Balance,
    pub target_size: Option<usize>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Full,
            balance: Balance::None,
            target_size: None,
        }
    }
}

/// One trainer plus curation plan evaluated across all seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub trainer: Trainer,
    pub plan: PlanConfig,
}

impl Arm {
    pub fn sft(name: impl Into<String>, variant: Variant) -> Self {
        Self {
            name: name.into(),
            trainer: Trainer::Sft,
            plan: PlanConfig {
                variant,
                ..PlanConfig::default()
            },
        }
    }

    pub fn grpo(name: impl Into<String>, variant: Variant) -> Self {
        Self {
            trainer: Trainer::Grpo,
            ..Self::sft(name, variant)
        }
    }

    pub fn balanced(mut self) -> Self {
        self.plan.balance = Balance::MinSubset;
        self
    }

    pub fn with_target(mut self, target: usize) -> Self {
        self.plan.target_size = Some(target);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    /// Root seed; run `i` uses `seed + i` and every draw inside a run is
    /// derived from that. The task spec's own seed is ignored.
    pub seed: u64,
    pub n_seeds: usize,
    pub name: String,
    pub task: SyntheticTaskSpec,
    pub warmup: WarmupConfig,
    /// Responses drawn per train episode to label its difficulty.
    pub assessment_g: usize,
    /// Softmax temperature used for sampling and training alike.
    pub sampling_temperature: f64,
    pub trainer: Trainer,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub plan: PlanConfig,
    pub grpo: GrpoConfig,
    /// Leading steps averaged for the gradient-norm summary.
    pub norm_window: usize,
    /// Trailing window of the smoothed gradient-norm series.
    pub smoothing_window: usize,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_seeds: 20,
            name: "run".to_string(),
            task: SyntheticTaskSpec::default(),
            warmup: WarmupConfig::default(),
            assessment_g: SamplingParams::DEFAULT_G,
            sampling_temperature: SamplingParams::DEFAULT_TEMPERATURE,
            trainer: Trainer::Sft,
            lr: 0.1,
            steps: 200,
            batch_size: 16,
            plan: PlanConfig::default(),
            grpo: GrpoConfig::default(),
            norm_window: 50,
            smoothing_window: 10,
        }
    }
}

impl LabConfig {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.grpo.validate()?;
        CurationPlan {
            variant: self.plan.variant,
            balance: self.plan.balance,
            seed: 0,
            target_size: self.plan.target_size,
        }
        .validate()?;
        if self.n_seeds == 0 {
            return Err(LabError::invalid("n_seeds must be >= 1"));
        }
        if self.steps == 0 || self.batch_size == 0 {
            return Err(LabError::invalid("steps and batch_size must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.warmup.lr > 0.0 && self.warmup.lr.is_finite()) {
            return Err(LabError::invalid("learning rates must be finite and > 0"));
        }
        if self.assessment_g < 2 {
            return Err(LabError::invalid(format!(
                "assessment_g must be >= 2, got {}",
                self.assessment_g
            )));
        }
        if !(self.sampling_temperature > 0.0 && self.sampling_temperature.is_finite()) {
            return Err(LabError::invalid("sampling temperature must be > 0"));
        }
        let held = self.warmup_size();
        if held == 0 || held >= self.task.n_train {
            return Err(LabError::invalid(format!(
                "warm-up split {} of {} train episodes leaves no warm-up or no training data",
                self.warmup.split, self.task.n_train
            )));
        }
        if self.norm_window == 0 || self.smoothing_window == 0 {
            return Err(LabError::invalid("norm_window and smoothing_window must be >= 1"));
        }
        Ok(())
    }

    pub fn warmup_size(&self) -> usize {
        (self.warmup.split * self.task.n_train as f64).round() as usize
    }

    /// The arm described by the config's own trainer and plan.
    pub fn arm(&self) -> Arm {
        Arm {
            name: self.name.clone(),
            trainer: self.trainer,
            plan: self.plan,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::invalid(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let cfg: LabConfig = toml::from_str(&text).map_err(|e| LabError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|e| LabError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }
}

/// Everything about one seed that every arm shares.
#[derive(Debug, Clone)]
pub struct PreparedSeed {
    pub run_seed: u64,
    pub task: LabTask,
    /// Train episodes left after the warm-up slice; verified set `i` belongs
    /// to `pool[i]`.
    pub pool: Vec<LabEpisode>,
    pub warm: SoftmaxPolicy,
    pub verified: Vec<VerifiedResponseSet>,
}

impl PreparedSeed {
    pub fn bucket_counts(&self) -> BucketCounts {
        dcsft_core::curator::bucket(&self.verified).counts()
    }
}

/// Full-batch gradient descent on the mean NLL.
pub fn warm_up(policy: &mut SoftmaxPolicy, episodes: &[LabEpisode], steps: usize, lr: f64) -> Result<()> {
    let batch: Vec<&LabEpisode> = episodes.iter().collect();
    for _ in 0..steps {
        let grad = sft_gradient(policy, &batch)?;
        policy.apply_gradient(&grad, lr)?;
    }
    Ok(())
}

/// Generates the task, warms up and labels every remaining train episode.
pub fn prepare_seed(cfg: &LabConfig, run_seed: u64) -> Result<PreparedSeed> {
    cfg.validate()?;
    let spec = SyntheticTaskSpec {
        seed: derive_seed(run_seed, "task"),
        ..cfg.task.clone()
    };
    let mut task = gen_task(&spec)?;
    let held = cfg.warmup_size();
    let pool = task.train.split_off(held);
    let warm_set = std::mem::take(&mut task.train);

    let mut warm = SoftmaxPolicy::new(spec.classes, spec.dim, cfg.sampling_temperature)?;
    warm_up(&mut warm, &warm_set, cfg.warmup.steps, cfg.warmup.lr)?;
    task.train = warm_set;

    let params = SamplingParams {
        g: cfg.assessment_g,
        temperature: cfg.sampling_temperature,
        top_p: 1.0,
        seed: Some(run_seed),
        model_id: "warm-up".to_string(),
    };
    let mut rng = SeededRng::stream(run_seed, "assess");
    let mut verified = Vec::with_capacity(pool.len());
    for (i, ep) in pool.iter().enumerate() {
        let draws = sample_responses_lab(&warm, &ep.x, cfg.assessment_g, &mut rng)?;
        let rewards = rewards_for(&draws, ep.gold_class);
        let responses = draws.iter().map(|d| d.to_string()).collect();
        verified.push(VerifiedResponseSet::new(i.to_string(), responses, rewards, params.clone())?);
    }
    Ok(PreparedSeed {
        run_seed,
        task,
        pool,
        warm,
        verified,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub id_acc: f64,
    pub ood_acc: f64,
    pub grad_norm: f64,
    /// Norm of the gradient restricted to the batch members of each bucket;
    /// absent when the batch has none or the trainer is GRPO.
    pub grad_norm_easy: Option<f64>,
    pub grad_norm_medium: Option<f64>,
    pub grad_norm_hard: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub arm: Arm,
    pub seed: u64,
    /// Difficulty counts over the whole post-warm-up pool.
    pub bucket_counts: BucketCounts,
    /// Difficulty counts of the curated training set.
    pub train_counts: BucketCounts,
    pub achieved_hard_ratio: Option<f64>,
    pub initial_id_acc: f64,
    pub initial_ood_acc: f64,
    pub steps: Vec<StepRecord>,
    /// Group counts summed over all GRPO steps.
    pub grpo_groups: Option<GroupStats>,
}

impl TrainReport {
    pub fn final_step(&self) -> &StepRecord {
        self.steps.last().expect("reports have at least one step")
    }

    pub fn train_size(&self) -> usize {
        self.train_counts.total()
    }

    /// Mean gradient norm over the first `window` steps.
    pub fn leading_norm(&self, window: usize) -> f64 {
        let n: Vec<f64> = self.steps.iter().take(window).map(|s| s.grad_norm).collect();
        mean(&n)
    }
}

fn bucket_norm(
    policy: &SoftmaxPolicy,
    batch: &[&LabEpisode],
    labels: &[DifficultyLabel],
    want: DifficultyLabel,
) -> Result<Option<f64>> {
    let sub: Vec<&LabEpisode> = batch
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l == want)
        .map(|(e, _)| *e)
        .collect();
    if sub.is_empty() {
        return Ok(None);
    }
    Ok(Some(frobenius_norm(&sft_gradient(policy, &sub)?)))
}

/// Curates the prepared pool for `arm` and trains from the warm-up policy.
pub fn train_arm(cfg: &LabConfig, prep: &PreparedSeed, arm: &Arm) -> Result<TrainReport> {
    let run_seed = prep.run_seed;
    let plan = CurationPlan {
        variant: arm.plan.variant,
        balance: arm.plan.balance,
        seed: derive_seed(run_seed, "curate"),
        target_size: arm.plan.target_size,
    };
    let curated = build_curated_set(&prep.verified, &plan)?;
    if curated.ids.is_empty() {
        return Err(LabError::InfeasiblePlan(format!(
            "arm `{}` selects no training data (bucket counts {:?})",
            arm.name,
            prep.bucket_counts()
        )));
    }
    let index: HashMap<&str, usize> = prep
        .verified
        .iter()
        .enumerate()
        .map(|(i, v)| (v.sample_id(), i))
        .collect();
    let rows: Vec<usize> = curated.ids.iter().map(|id| index[id.as_str()]).collect();
    let episodes: Vec<&LabEpisode> = rows.iter().map(|i| &prep.pool[*i]).collect();
    let labels: Vec<DifficultyLabel> = rows.iter().map(|i| prep.verified[*i].difficulty()).collect();
    let d = &curated.manifest.draws;
    let train_counts = BucketCounts {
        easy: d.easy.len(),
        medium: d.medium.len(),
        hard: d.hard.len(),
    };

    let mut batch_rng = SeededRng::stream(run_seed, "train/batch");
    let mut grpo_rng = SeededRng::stream(run_seed, "train/grpo");
    let mut snapshots = PolicySnapshots::new(prep.warm.clone());
    let mut group_totals = GroupStats::default();
    let mut steps = Vec::with_capacity(cfg.steps);
    let n = episodes.len();
    for step in 0..cfg.steps {
        let picks: Vec<usize> = if n <= cfg.batch_size {
            (0..n).collect()
        } else {
            batch_rng.sample_indices(n, cfg.batch_size)
        };
        let batch: Vec<&LabEpisode> = picks.iter().map(|i| episodes[*i]).collect();
        let mut record = StepRecord {
            step,
            id_acc: 0.0,
            ood_acc: 0.0,
            grad_norm: 0.0,
            grad_norm_easy: None,
            grad_norm_medium: None,
            grad_norm_hard: None,
        };
        match arm.trainer {
            Trainer::Sft => {
                let policy = &mut snapshots.current;
                let batch_labels: Vec<DifficultyLabel> = picks.iter().map(|i| labels[*i]).collect();
                record.grad_norm_easy = bucket_norm(policy, &batch, &batch_labels, DifficultyLabel::Easy)?;
                record.grad_norm_medium = bucket_norm(policy, &batch, &batch_labels, DifficultyLabel::Medium)?;
                record.grad_norm_hard = bucket_norm(policy, &batch, &batch_labels, DifficultyLabel::Hard)?;
                let grad = sft_gradient(policy, &batch)?;
                policy.apply_gradient(&grad, cfg.lr)?;
                record.grad_norm = frobenius_norm(&grad);
            }
            Trainer::Grpo => {
                let (norm, stats) = grpo_step(&mut snapshots, &batch, &cfg.grpo, cfg.lr, grpo_rng.next_u64())?;
                group_totals.add(&stats);
                record.grad_norm = norm;
            }
        }
        record.id_acc = evaluate(&snapshots.current, &prep.task.id_test)?.accuracy;
        record.ood_acc = evaluate(&snapshots.current, &prep.task.ood_test)?.accuracy;
        steps.push(record);
    }

    Ok(TrainReport {
        arm: arm.clone(),
        seed: run_seed,
        bucket_counts: prep.bucket_counts(),
        train_counts,
        achieved_hard_ratio: curated.manifest.achieved_hard_ratio,
        initial_id_acc: evaluate(&prep.warm, &prep.task.id_test)?.accuracy,
        initial_ood_acc: evaluate(&prep.warm, &prep.task.ood_test)?.accuracy,
        steps,
        grpo_groups: (arm.trainer == Trainer::Grpo).then_some(group_totals),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub arm: Arm,
    pub n_seeds: usize,
    pub final_id_mean: f64,
    pub final_id_std: f64,
    pub final_ood_mean: f64,
    pub final_ood_std: f64,
    pub initial_id_mean: f64,
    pub initial_ood_mean: f64,
    pub mean_train_size: f64,
    pub norm_window: usize,
    /// Mean over seeds of each run's mean gradient norm in the first
    /// `norm_window` steps.
    pub leading_grad_norm_mean: f64,
    /// Per-step gradient norm averaged over seeds.
    pub grad_norm_raw: Vec<f64>,
    /// Trailing moving average of `grad_norm_raw`.
    pub grad_norm_smoothed: Vec<f64>,
    pub smoothing_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub runs: Vec<TrainReport>,
    pub summary: ExperimentSummary,
}

impl ExperimentReport {
    pub fn final_ood(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.final_step().ood_acc).collect()
    }

    pub fn final_id(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.final_step().id_acc).collect()
    }

    pub fn leading_norms(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.leading_norm(self.summary.norm_window)).collect()
    }
}

/// Trailing moving average with the window shortened at the start.
pub fn smooth(series: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..series.len())
        .map(|i| mean(&series[i.saturating_sub(w - 1)..=i]))
        .collect()
}

fn summarize(cfg: &LabConfig, arm: &Arm, runs: Vec<TrainReport>) -> ExperimentReport {
    let final_id: Vec<f64> = runs.iter().map(|r| r.final_step().id_acc).collect();
    let final_ood: Vec<f64> = runs.iter().map(|r| r.final_step().ood_acc).collect();
    let steps = runs.first().map_or(0, |r| r.steps.len());
    let raw: Vec<f64> = (0..steps)
        .map(|t| mean(&runs.iter().map(|r| r.steps[t].grad_norm).collect::<Vec<_>>()))
        .collect();
    let leading: Vec<f64> = runs.iter().map(|r| r.leading_norm(cfg.norm_window)).collect();
    let summary = ExperimentSummary {
        arm: arm.clone(),
        n_seeds: runs.len(),
        final_id_mean: mean(&final_id),
        final_id_std: std_dev(&final_id),
        final_ood_mean: mean(&final_ood),
        final_ood_std: std_dev(&final_ood),
        initial_id_mean: mean(&runs.iter().map(|r| r.initial_id_acc).collect::<Vec<_>>()),
        initial_ood_mean: mean(&runs.iter().map(|r| r.initial_ood_acc).collect::<Vec<_>>()),
        mean_train_size: mean(&runs.iter().map(|r| r.train_size() as f64).collect::<Vec<_>>()),
        norm_window: cfg.norm_window,
        leading_grad_norm_mean: mean(&leading),
        grad_norm_smoothed: smooth(&raw, cfg.smoothing_window),
        grad_norm_raw: raw,
        smoothing_window: cfg.smoothing_window,
    };
    ExperimentReport { runs, summary }
}

/// Runs every arm on every seed. Seeds run in parallel and share their task,
/// warm-up and difficulty labels across arms; reports come back in arm
/// order with runs in seed order.
pub fn run_arms(cfg: &LabConfig, arms: &[Arm]) -> Result<Vec<ExperimentReport>> {
    cfg.validate()?;
    if arms.is_empty() {
        return Err(LabError::invalid("no arms to run"));
    }
    let per_seed: Vec<Vec<TrainReport>> = (0..cfg.n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let prep = prepare_seed(cfg, cfg.seed.wrapping_add(i))?;
            arms.iter().map(|arm| train_arm(cfg, &prep, arm)).collect()
        })
        .collect::<Result<_>>()?;
    let mut by_arm: Vec<Vec<TrainReport>> = vec![Vec::with_capacity(cfg.n_seeds); arms.len()];
    for runs in per_seed {
        for (slot, run) in by_arm.iter_mut().zip(runs) {
            slot.push(run);
        }
    }
    Ok(arms
        .iter()
        .zip(by_arm)
        .map(|(arm, runs)| summarize(cfg, arm, runs))
        .collect())
}

pub fn run_experiment(cfg: &LabConfig) -> Result<ExperimentReport> {
    Ok(run_arms(cfg, &[cfg.arm()])?.remove(0))
}

/// The config's arm rerun with a hard-ratio plan at each `rho`. Balance and
/// target size carry over from the config.
pub fn sweep_arms(cfg: &LabConfig, rhos: &[f64]) -> Vec<Arm> {
    rhos.iter()
        .map(|rho| Arm {
            name: format!("{}-{rho}", cfg.name),
            trainer: cfg.trainer,
            plan: PlanConfig {
                variant: Variant::HardRatio { rho: *rho },
                ..cfg.plan
            },
        })
        .collect()
}

pub fn run_sweep(cfg: &LabConfig, rhos: &[f64]) -> Result<Vec<ExperimentReport>> {
    run_arms(cfg, &sweep_arms(cfg, rhos))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per seed and step.
pub fn write_report_csv(report: &ExperimentReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "seed",
        "step",
        "id_acc",
        "ood_acc",
        "grad_norm",
        "grad_norm_easy",
        "grad_norm_medium",
        "grad_norm_hard",
    ])?;
    for run in &report.runs {
        for s in &run.steps {
            w.write_record([
                run.seed.to_string(),
                s.step.to_string(),
                s.id_acc.to_string(),
                s.ood_acc.to_string(),
                s.grad_norm.to_string(),
                opt(s.grad_norm_easy),
                opt(s.grad_norm_medium),
                opt(s.grad_norm_hard),
            ])?;
        }
    }
    w.flush().map_err(|e| LabError::io(path, e))?;
    Ok(())
}

pub fn write_summary_json(report: &ExperimentReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(&report.summary)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

/// Writes `<arm>.csv` and `<arm>.summary.json` for each report into `dir`
/// and returns the paths written.
pub fn write_outputs(reports: &[ExperimentReport], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let mut paths = Vec::new();
    for r in reports {
        let csv_path = dir.join(format!("{}.csv", r.summary.arm.name));
        let json_path = dir.join(format!("{}.summary.json", r.summary.arm.name));
        write_report_csv(r, &csv_path)?;
        write_summary_json(r, &json_path)?;
        paths.push(csv_path);
        paths.push(json_path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LabConfig {
        LabConfig {
            n_seeds: 2,
            steps: 5,
            task: SyntheticTaskSpec {
                n_train: 200,
                n_id_test: 50,
                n_ood_test: 50,
                ..SyntheticTaskSpec::default()
            },
            warmup: WarmupConfig {
                steps: 50,
                ..WarmupConfig::default()
            },
            ..LabConfig::default()
        }
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            seed = 3
            n_seeds = 4
            trainer = "grpo"
            [task]
            classes = 5
            [plan]
            variant = { kind = "bucket_only", bucket = "medium" }
            balance = "min_subset"
            [grpo]
            beta = 0.0
        "#;
        let cfg = LabConfig::from_toml(text).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.trainer, Trainer::Grpo);
        assert_eq!(cfg.task.classes, 5);
        assert_eq!(cfg.task.dim, 16);
        assert_eq!(cfg.plan.variant, Variant::BucketOnly { bucket: DifficultyLabel::Medium });
        assert_eq!(cfg.grpo.beta, 0.0);
        assert_eq!(cfg.grpo.epsilon, 0.2);
        assert!(LabConfig::from_toml("stepz = 3").is_err());
    }

    #[test]
    fn reports_have_one_record_per_step() {
        let cfg = small();
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.runs.len(), 2);
        for run in &r.runs {
            assert_eq!(run.steps.len(), cfg.steps);
            assert_eq!(run.bucket_counts.total(), 190);
        }
        assert_eq!(r.summary.grad_norm_raw.len(), cfg.steps);
        assert_eq!(r.summary.grad_norm_smoothed.len(), cfg.steps);
    }

    #[test]
    fn seeds_are_deterministic() {
        let cfg = small();
        assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
    }

    #[test]
    fn smoothing_window() {
        assert_eq!(smooth(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn bad_warmup_split_rejected() {
        let mut cfg = small();
        cfg.warmup.split = 0.0;
        assert!(cfg.validate().is_err());
        cfg.warmup.split = 1.0;
        assert!(cfg.validate().is_err());
    }
}
