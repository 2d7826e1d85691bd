//! Client side of the embedding sidecar's JSON-over-HTTP protocol.
//!
//! `POST /embed {model_id, texts}` returns `{dim, vectors}`;
//! `POST /keywords {text, max_words}` returns `{keywords}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedRequest, EmbedResponse, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::text::KeywordProvider;

pub const ENDPOINT_ENV: &str = "HARMONY_EMBED_ENDPOINT";

/// The sidecar URL from the environment, if set.
pub fn endpoint_from_env() -> Option<String> {
    std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.trim().is_empty())
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into()
}

fn post_json<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    agent: &ureq::Agent,
    base: &str,
    path: &str,
    body: &Req,
) -> Result<Resp> {
    let url = format!("{}/{}", base.trim_end_matches('/'), path);
    let unavailable = |reason: String| Error::ProviderUnavailable { endpoint: base.to_string(), reason };
    let mut resp = agent.post(&url).send_json(body).map_err(|e| unavailable(e.to_string()))?;
    resp.body_mut().read_json::<Resp>().map_err(|e| unavailable(format!("bad response body: {e}")))
}

pub struct HttpEmbeddingProvider {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpEmbeddingProvider {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpEmbeddingProvider { base_url: base_url.into(), agent: agent(Duration::from_secs(120)) }
    }

    /// Uses `HARMONY_EMBED_ENDPOINT` when set, otherwise `configured`.
    pub fn from_env_or(configured: &str) -> Self {
        Self::new(endpoint_from_env().unwrap_or_else(|| configured.to_string()))
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn endpoint(&self) -> String {
        self.base_url.clone()
    }

    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse> {
        post_json(&self.agent, &self.base_url, "embed", request)
    }
}

#[derive(Serialize)]
struct KeywordRequest<'a> {
    text: &'a str,
    max_words: usize,
}

#[derive(Deserialize)]
struct KeywordResponse {
    keywords: String,
}

pub struct HttpKeywordProvider {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpKeywordProvider {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpKeywordProvider { base_url: base_url.into(), agent: agent(Duration::from_secs(60)) }
    }
}

impl KeywordProvider for HttpKeywordProvider {
    fn extract(&self, text: &str, max_words: usize) -> Result<String> {
        let resp: KeywordResponse = post_json(&self.agent, &self.base_url, "keywords", &KeywordRequest { text, max_words })?;
        Ok(resp.keywords)
    }
}
