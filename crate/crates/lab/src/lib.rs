//! Desk-scale lab for difficulty-curated training.
//!
//! A linear softmax policy classifies points drawn around class prototypes.
//! Test points come in an in-distribution split and an out-of-distribution
//! split whose prototypes are rotated. The policy is warmed up on a held-out
//! slice, every remaining train episode is labeled easy, medium or hard from
//! a group of sampled answers, and SFT or GRPO then trains on a curated
//! subset while accuracy and gradient norms are logged per step.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod policy;
pub mod stats;
pub mod task;
pub mod train;

pub use error::{LabError, Result};
pub use eval::{evaluate, Evaluation};
pub use experiment::{
    prepare_seed, run_arms, run_experiment, run_sweep, train_arm, Arm, ExperimentReport, ExperimentSummary,
    LabConfig, PlanConfig, PreparedSeed, StepRecord, TrainReport, Trainer, WarmupConfig,
};
pub use policy::{policy_probs, SoftmaxPolicy};
pub use task::{gen_task, LabEpisode, LabTask, SyntheticTaskSpec};
pub use train::{grpo_step, sample_responses_lab, sft_step, GroupStats, PolicySnapshots};
