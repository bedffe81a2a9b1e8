//! Core building blocks for difficulty-curated fine-tuning.
//!
//! The crate groups everything that is pure and synchronous:
//!
//! - [`model`]: samples, gold answers, response sets and the easy/medium/hard
//!   taxonomy derived from a group of binary rewards.
//! - [`verifiers`]: exact-match and IoU judges that turn response text into
//!   rewards, plus box parsing and pixel-budget rescaling.
//! - [`grpo`]: group-normalized advantages, the clipped surrogate, KL penalty
//!   and the zero-update predicate.
//! - [`curator`]: bucketing, min-subset balancing and curated dataset emission.
//! - [`dataset`]: the JSONL sample format.
//! - [`rng`]: the seeded generator every reproducible draw goes through.

pub mod curator;
pub mod dataset;
pub mod error;
pub mod grpo;
pub mod model;
pub mod rng;
pub mod verifiers;

pub use error::{Error, Result};
pub use model::{
    classify_difficulty, reward_of, BBox, DifficultyLabel, GoldAnswer, Sample, SamplingParams,
    TaskKind, VerifiedResponseSet,
};

/// Version string stamped into manifests and run records.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
