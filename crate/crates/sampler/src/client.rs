//! OpenAI-compatible chat-completions wire format and a retrying client.

use std::path::Path;

use base64::Engine;
use dcsft_core::{Sample, SamplingParams};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{EndpointConfig, SamplerError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct ChatResponse {
    #[serde(default)]
    pub choices: Vec<Choice>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct Choice {
    #[serde(default)]
    pub index: usize,
    pub message: ChoiceMessage,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct ChoiceMessage {
    #[serde(default)]
    pub content: Option<String>,
}

fn mime_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "image/jpeg",
    }
}

/// `image_url` value for an image reference: URLs pass through, local files
/// are embedded as base64 data URLs.
pub fn image_url_for(image_ref: &str) -> Result<String, SamplerError> {
    let lower = image_ref.to_ascii_lowercase();
    if lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("data:") {
        return Ok(image_ref.to_string());
    }
    let path = Path::new(image_ref);
    let bytes = std::fs::read(path).map_err(|source| SamplerError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(format!("data:{};base64,{encoded}", mime_for(path)))
}

/// Single user turn; text-only prompts are sent as a plain string.
pub fn user_message(sample: &Sample) -> Result<ChatMessage, SamplerError> {
    let content = match &sample.image_ref {
        None => Value::String(sample.prompt.clone()),
        Some(image) => json!([
            {"type": "image_url", "image_url": {"url": image_url_for(image)?}},
            {"type": "text", "text": sample.prompt},
        ]),
    };
    Ok(ChatMessage {
        role: "user".into(),
        content,
    })
}

pub fn build_request(message: ChatMessage, params: &SamplingParams, n: usize, seed: Option<u64>) -> ChatRequest {
    ChatRequest {
        model: params.model_id.clone(),
        messages: vec![message],
        temperature: params.temperature,
        top_p: params.top_p,
        n,
        seed,
    }
}

/// Thin wrapper over a shared HTTP client.
#[derive(Debug, Clone)]
pub struct ChatClient {
    http: reqwest::Client,
    url: url::Url,
    api_key: Option<String>,
}

impl ChatClient {
    pub fn new(endpoint: &EndpointConfig) -> Result<Self, SamplerError> {
        endpoint.validate()?;
        let http = reqwest::Client::builder()
            .timeout(endpoint.timeout())
            .build()
            .map_err(|e| SamplerError::Config(e.to_string()))?;
        Ok(Self {
            http,
            url: endpoint.completions_url()?,
            api_key: endpoint.api_key.clone(),
        })
    }

    /// One attempt; returns the choice texts in index order.
    pub async fn send(&self, request: &ChatRequest) -> Result<Vec<String>, SamplerError> {
        let mut builder = self.http.post(self.url.clone()).json(request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder
            .send()
            .await
            .map_err(|e| SamplerError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 401 || status == 403 {
            return Err(SamplerError::Auth { status });
        }
        if !(200..300).contains(&status) {
            let body = resp.text().await.unwrap_or_default();
            let body: String = body.chars().take(500).collect();
            return Err(SamplerError::Http { status, body });
        }
        let parsed: ChatResponse = resp
            .json()
            .await
            .map_err(|e| SamplerError::Malformed(e.to_string()))?;
        let mut choices = parsed.choices;
        choices.sort_by_key(|c| c.index);
        Ok(choices
            .into_iter()
            .map(|c| c.message.content.unwrap_or_default())
            .collect())
    }
}
