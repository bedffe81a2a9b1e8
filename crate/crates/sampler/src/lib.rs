//! Response collection for difficulty assessment.
//!
//! [`collect_responses`] asks an OpenAI-compatible chat-completions endpoint
//! for `g` responses per sample, bounded by a global in-flight limit, with
//! retries on transient failures and an append-only JSONL cache so reruns do
//! not touch the network. [`verify_batch`] then scores every response and
//! attaches a difficulty label. [`mock`] is a scripted endpoint for tests and
//! offline dry runs.

pub mod cache;
pub mod client;
pub mod collect;
pub mod config;
pub mod error;
pub mod mock;
pub mod verify;

pub use cache::{CacheKey, ResponseCache, ResponseSet};
pub use collect::{collect_responses, CollectReport, SampleFailure};
pub use config::EndpointConfig;
pub use dcsft_core::dataset::load_dataset;
pub use error::SamplerError;
pub use verify::verify_batch;
