use serde::{Deserialize, Serialize};

use crate::policy::SoftmaxPolicy;
use crate::task::LabEpisode;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub count: usize,
    /// The set was empty; accuracy is reported as 0 by convention.
    pub empty: bool,
}

/// Greedy accuracy: the fraction of episodes whose highest-scoring class
/// (lowest index on ties) equals the gold class.
pub fn evaluate(policy: &SoftmaxPolicy, episodes: &[LabEpisode]) -> Result<Evaluation> {
    if episodes.is_empty() {
        log::warn!("evaluating on an empty episode set; reporting accuracy 0");
        return Ok(Evaluation {
            accuracy: 0.0,
            count: 0,
            empty: true,
        });
    }
    let mut correct = 0usize;
    for ep in episodes {
        if policy.greedy(&ep.x)? == ep.gold_class {
            correct += 1;
        }
    }
    Ok(Evaluation {
        accuracy: correct as f64 / episodes.len() as f64,
        count: episodes.len(),
        empty: false,
    })
}
