//! HTTP clients for the annotation and embedding services.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::Deserialize;
use spcc_core::annotate::{ClientError, VlmClient, VlmRequest, VlmResponse};
use spcc_core::synth::EmbeddingClient;

pub const VLM_URL_VAR: &str = "SPCC_VLM_URL";
pub const VLM_KEY_VAR: &str = "SPCC_VLM_KEY";
pub const EMBED_URL_VAR: &str = "SPCC_EMBED_URL";
pub const EMBED_KEY_VAR: &str = "SPCC_EMBED_KEY";

struct Endpoint {
    url: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl Endpoint {
    fn from_env(url_var: &str, key_var: &str, timeout: Duration) -> Result<Self, ClientError> {
        let url = std::env::var(url_var)
            .ok()
            .filter(|u| !u.trim().is_empty())
            .ok_or_else(|| ClientError::NotConfigured(format!("set {url_var}")))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            url,
            key: std::env::var(key_var).ok().filter(|k| !k.is_empty()),
            agent,
        })
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, body: &impl serde::Serialize) -> Result<T, ClientError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(transport)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ClientError::Http { status, body });
        }
        resp.body_mut()
            .read_json()
            .map_err(|e| ClientError::Protocol(e.to_string()))
    }
}

fn transport(e: ureq::Error) -> ClientError {
    match e {
        ureq::Error::Timeout(_) => ClientError::Timeout,
        ureq::Error::StatusCode(status) => ClientError::Http {
            status,
            body: String::new(),
        },
        other => ClientError::Transport(other.to_string()),
    }
}

/// Chat-with-images endpoint taking a `VlmRequest` and answering `{text}`.
pub struct HttpVlmClient(Endpoint);

impl HttpVlmClient {
    pub fn from_env(timeout: Duration) -> Result<Self, ClientError> {
        Endpoint::from_env(VLM_URL_VAR, VLM_KEY_VAR, timeout).map(Self)
    }
}

impl VlmClient for HttpVlmClient {
    fn complete(&self, request: &VlmRequest) -> Result<String, ClientError> {
        self.0.post::<VlmResponse>(request).map(|r| r.text)
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    embedding: Vec<f64>,
}

/// Image embedding endpoint taking `{image: base64-png}` and answering
/// `{embedding: [..]}`.
pub struct HttpEmbeddingClient(Endpoint);

impl HttpEmbeddingClient {
    pub fn from_env(timeout: Duration) -> Result<Self, ClientError> {
        Endpoint::from_env(EMBED_URL_VAR, EMBED_KEY_VAR, timeout).map(Self)
    }
}

impl EmbeddingClient for HttpEmbeddingClient {
    fn embed(&self, png: &[u8]) -> Result<Vec<f64>, ClientError> {
        let body = serde_json::json!({ "image": STANDARD.encode(png) });
        self.0.post::<EmbeddingResponse>(&body).map(|r| r.embedding)
    }
}
