//! HTTP client for an external text-generation service.
//!
//! Request body: `{"prompt": str, "max_tokens": int}`.
//! Response body: `{"text": str, "token_logprobs": [float]?}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::data::{tokenize, Tokens};
use crate::error::{Error, Result};

/// Environment variable holding an optional bearer token.
pub const TOKEN_ENV: &str = "LATENTQA_SERVICE_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub max_tokens: usize,
    /// Upper bound on in-flight requests in [`ServiceClient::generate_all`].
    pub max_concurrency: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            endpoint: String::new(),
            timeout_ms: 30_000,
            max_tokens: 32,
            max_concurrency: 4,
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    prompt: &'a str,
    max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Generation {
    pub text: String,
    #[serde(default)]
    pub token_logprobs: Option<Vec<f64>>,
}

impl Generation {
    pub fn tokens(&self) -> Tokens {
        tokenize(&self.text)
    }

    /// Only generations carrying log-probs can be scored; the rest are
    /// usable for inference alone.
    pub fn is_scored(&self) -> bool {
        self.token_logprobs.is_some()
    }
}

pub struct ServiceClient {
    agent: ureq::Agent,
    config: ServiceConfig,
    token: Option<String>,
}

impl ServiceClient {
    pub fn new(config: ServiceConfig) -> Result<Self> {
        if config.endpoint.is_empty() {
            return Err(Error::InvalidArgument("generation service endpoint is empty".into()));
        }
        if config.max_concurrency == 0 {
            return Err(Error::InvalidArgument("max_concurrency must be at least 1".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Ok(ServiceClient { agent, config, token })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn generate(&self, prompt: &str) -> Result<Generation> {
        let body = serde_json::to_string(&Request {
            prompt,
            max_tokens: self.config.max_tokens,
        })?;
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req.send(body).map_err(map_transport)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(map_transport)?;
        if !(200..300).contains(&status) {
            return Err(Error::ServiceStatus { status, body: text });
        }
        let generation: Generation =
            serde_json::from_str(&text).map_err(|e| Error::ServiceBody(e.to_string()))?;
        if let Some(lps) = &generation.token_logprobs {
            if lps.iter().any(|x| !x.is_finite()) {
                return Err(Error::ServiceBody("non-finite token log-prob".into()));
            }
        }
        Ok(generation)
    }

    /// Generates for every prompt, at most `max_concurrency` requests at a
    /// time. Results keep prompt order.
    pub fn generate_all(&self, prompts: &[String]) -> Vec<Result<Generation>> {
        let mut out = Vec::with_capacity(prompts.len());
        for chunk in prompts.chunks(self.config.max_concurrency) {
            let results: Vec<Result<Generation>> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|p| s.spawn(move || self.generate(p))).collect();
                handles
                    .into_iter()
                    .map(|h| {
                        h.join()
                            .unwrap_or_else(|_| Err(Error::ServiceTransport("worker panicked".into())))
                    })
                    .collect()
            });
            out.extend(results);
        }
        out
    }
}

fn map_transport(e: ureq::Error) -> Error {
    match e {
        ureq::Error::Timeout(_) => Error::ServiceTimeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => Error::ServiceTimeout,
        other => Error::ServiceTransport(other.to_string()),
    }
}

/// One-shot helper: `POST` a prompt to `endpoint` with default settings.
pub fn external_generate(endpoint: &str, prompt: &str, timeout: Duration) -> Result<Generation> {
    ServiceClient::new(ServiceConfig {
        endpoint: endpoint.to_string(),
        timeout_ms: timeout.as_millis() as u64,
        ..ServiceConfig::default()
    })?
    .generate(prompt)
}
