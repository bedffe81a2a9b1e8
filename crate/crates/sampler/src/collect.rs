use std::sync::atomic::{AtomicBool, AtomicU16, AtomicUsize, Ordering};
use std::sync::Arc;

use dcsft_core::{Sample, SamplingParams};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::cache::{CacheKey, ResponseCache, ResponseSet};
use crate::client::{build_request, user_message, ChatClient, ChatRequest};
use crate::{EndpointConfig, SamplerError};

/// A sample whose responses could not be collected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub sample_id: String,
    pub error: String,
}

#[derive(Debug)]
pub struct CollectReport {
    /// One entry per input sample, in input order.
    pub outcomes: Vec<Result<ResponseSet, SampleFailure>>,
    /// HTTP requests issued, retries included.
    pub requests_sent: usize,
    pub cache_hits: usize,
}

impl CollectReport {
    pub fn successes(&self) -> impl Iterator<Item = &ResponseSet> {
        self.outcomes.iter().filter_map(|o| o.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = &SampleFailure> {
        self.outcomes.iter().filter_map(|o| o.as_ref().err())
    }
}

struct Shared {
    client: ChatClient,
    endpoint: EndpointConfig,
    permits: Semaphore,
    abort: AtomicBool,
    auth_status: AtomicU16,
    requests: AtomicUsize,
}

impl Shared {
    async fn request(&self, req: &ChatRequest) -> Result<Vec<String>, SamplerError> {
        let mut attempt = 0;
        loop {
            if self.abort.load(Ordering::SeqCst) {
                return Err(SamplerError::Aborted);
            }
            let result = {
                let _permit = self.permits.acquire().await.expect("semaphore open");
                if self.abort.load(Ordering::SeqCst) {
                    return Err(SamplerError::Aborted);
                }
                self.requests.fetch_add(1, Ordering::SeqCst);
                self.client.send(req).await
            };
            match result {
                Ok(texts) => return Ok(texts),
                Err(SamplerError::Auth { status }) => {
                    self.auth_status.store(status, Ordering::SeqCst);
                    self.abort.store(true, Ordering::SeqCst);
                    return Err(SamplerError::Auth { status });
                }
                Err(e) if e.is_retryable() && attempt < self.endpoint.max_retries => {
                    let wait = self.endpoint.backoff(attempt, rand::random::<f64>());
                    log::debug!("retrying after {e} (attempt {}) in {wait:?}", attempt + 1);
                    tokio::time::sleep(wait).await;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    async fn sample_responses(&self, sample: &Sample, params: &SamplingParams) -> Result<Vec<String>, SamplerError> {
        let message = user_message(sample)?;
        let g = params.g;
        let seed_for = |k: usize| params.seed.map(|s| s.wrapping_add(k as u64));
        let mut texts = Vec::with_capacity(g);
        if self.endpoint.use_n {
            let req = build_request(message.clone(), params, g, params.seed);
            texts = self.request(&req).await?;
            texts.truncate(g);
        }
        if texts.len() < g {
            // Top up (or, without `n`, fill) with one request per response.
            let singles = (texts.len()..g).map(|k| {
                let req = build_request(message.clone(), params, 1, seed_for(k));
                async move { self.request(&req).await }
            });
            for result in futures::future::join_all(singles).await {
                let mut got = result?;
                if got.is_empty() {
                    return Err(SamplerError::Malformed("response carried no choices".into()));
                }
                texts.push(got.swap_remove(0));
            }
        }
        Ok(texts)
    }
}

/// Collects `params.g` responses for every sample.
///
/// Cached samples never touch the network. Transient failures are retried
/// with exponential backoff; a sample that still fails becomes a
/// [`SampleFailure`] without affecting the others. An authentication failure
/// aborts the whole batch.
pub async fn collect_responses(
    samples: &[Sample],
    params: &SamplingParams,
    endpoint: &EndpointConfig,
    cache: &ResponseCache,
) -> Result<CollectReport, SamplerError> {
    params.validate()?;
    let shared = Arc::new(Shared {
        client: ChatClient::new(endpoint)?,
        endpoint: endpoint.clone(),
        permits: Semaphore::new(endpoint.max_in_flight),
        abort: AtomicBool::new(false),
        auth_status: AtomicU16::new(0),
        requests: AtomicUsize::new(0),
    });
    let hits = AtomicUsize::new(0);

    // Sample-level futures are polled a few at a time; the semaphore is what
    // bounds concurrent HTTP requests.
    let window = endpoint.max_in_flight.saturating_mul(2).max(2);
    let outcomes: Vec<Result<ResponseSet, SampleFailure>> = stream::iter(samples)
        .map(|sample| {
            let shared = Arc::clone(&shared);
            let hits = &hits;
            async move {
                let key = CacheKey::new(sample, params);
                if let Some(hit) = cache.get(&key) {
                    if hit.responses.len() == params.g {
                        hits.fetch_add(1, Ordering::SeqCst);
                        return Ok(hit);
                    }
                }
                let failure = |e: SamplerError| SampleFailure {
                    sample_id: sample.id.clone(),
                    error: e.to_string(),
                };
                let responses = shared.sample_responses(sample, params).await.map_err(failure)?;
                let set = ResponseSet {
                    key,
                    sample_id: sample.id.clone(),
                    model: params.model_id.clone(),
                    params: params.clone(),
                    responses,
                };
                cache.insert(set.clone()).map_err(failure)?;
                Ok(set)
            }
        })
        .buffered(window)
        .collect()
        .await;

    if shared.abort.load(Ordering::SeqCst) {
        return Err(SamplerError::Auth {
            status: shared.auth_status.load(Ordering::SeqCst),
        });
    }
    Ok(CollectReport {
        outcomes,
        requests_sent: shared.requests.load(Ordering::SeqCst),
        cache_hits: hits.load(Ordering::SeqCst),
    })
}
