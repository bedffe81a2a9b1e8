use std::time::Duration;

use serde::{Deserialize, Serialize};
use url::Url;

use crate::SamplerError;

/// Environment variable read for the endpoint secret when none is given.
pub const API_KEY_ENV: &str = "DCSFT_API_KEY";

#[derive(Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub max_in_flight: usize,
    /// Seconds.
    pub request_timeout: f64,
    pub max_retries: u32,
    /// Seconds; attempt `i` waits `backoff_base * 2^i` plus up to 100% jitter.
    pub backoff_base: f64,
    /// Ask for all `g` completions in one request via `n`. Missing choices
    /// are topped up with single-completion requests.
    pub use_n: bool,
}

impl std::fmt::Debug for EndpointConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EndpointConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("max_in_flight", &self.max_in_flight)
            .field("request_timeout", &self.request_timeout)
            .field("max_retries", &self.max_retries)
            .field("backoff_base", &self.backoff_base)
            .field("use_n", &self.use_n)
            .finish()
    }
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            max_in_flight: 16,
            request_timeout: 120.0,
            max_retries: 3,
            backoff_base: 0.5,
            use_n: true,
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.max_in_flight < 1 {
            return Err(SamplerError::Config("max_in_flight must be >= 1".into()));
        }
        if !(self.request_timeout > 0.0 && self.request_timeout.is_finite()) {
            return Err(SamplerError::Config("request timeout must be > 0".into()));
        }
        if !(self.backoff_base >= 0.0 && self.backoff_base.is_finite()) {
            return Err(SamplerError::Config("backoff base must be >= 0".into()));
        }
        self.completions_url()?;
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout)
    }

    /// `<base>/v1/chat/completions`, tolerating a base that already ends in
    /// `/v1`.
    pub fn completions_url(&self) -> Result<Url, SamplerError> {
        let trimmed = self.base_url.trim_end_matches('/');
        let full = if trimmed.ends_with("/v1") {
            format!("{trimmed}/chat/completions")
        } else {
            format!("{trimmed}/v1/chat/completions")
        };
        Url::parse(&full).map_err(|e| SamplerError::Config(format!("bad base url `{}`: {e}", self.base_url)))
    }

    pub fn backoff(&self, attempt: u32, jitter: f64) -> Duration {
        let base = self.backoff_base * 2f64.powi(attempt.min(16) as i32);
        Duration::from_secs_f64(base * (1.0 + jitter.clamp(0.0, 1.0)))
    }
}
