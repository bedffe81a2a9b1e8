use std::collections::HashMap;

use dcsft_core::verifiers::{verify_response, VerifyOptions};
use dcsft_core::{Error, Sample, VerifiedResponseSet};

use crate::ResponseSet;

/// Scores every response with the judge for its sample's task and attaches
/// the resulting difficulty label. Output follows `response_sets` order.
pub fn verify_batch(
    response_sets: &[ResponseSet],
    samples: &[Sample],
    opts: &VerifyOptions,
) -> Result<Vec<VerifiedResponseSet>, Error> {
    opts.validate()?;
    let by_id: HashMap<&str, &Sample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    response_sets
        .iter()
        .map(|set| {
            let sample = by_id
                .get(set.sample_id.as_str())
                .ok_or_else(|| Error::UnknownId(set.sample_id.clone()))?;
            let rewards = set
                .responses
                .iter()
                .map(|r| verify_response(sample, r, opts))
                .collect::<Result<Vec<f64>, Error>>()?;
            VerifiedResponseSet::new(&set.sample_id, set.responses.clone(), rewards, set.params.clone())
        })
        .collect()
}
