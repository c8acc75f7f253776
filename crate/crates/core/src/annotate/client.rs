//! Chat-with-images service contract, retry wrapper and offline clients.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::{JUDGE_MARKER, STAGE2_MARKER};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ContentPart {
    Text { text: String },
    /// Base64-encoded PNG.
    Image { data: String },
}

impl ContentPart {
    pub fn text(text: impl Into<String>) -> Self {
        ContentPart::Text { text: text.into() }
    }

    pub fn png(bytes: &[u8]) -> Self {
        ContentPart::Image {
            data: STANDARD.encode(bytes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: Vec<ContentPart>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlmRequest {
    pub model: String,
    pub messages: Vec<Message>,
}

impl VlmRequest {
    pub fn user(model: &str, content: Vec<ContentPart>) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![Message {
                role: "user".into(),
                content,
            }],
        }
    }

    /// All text parts, joined by blank lines.
    pub fn text(&self) -> String {
        self.parts()
            .filter_map(|p| match p {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn images(&self) -> Vec<&str> {
        self.parts()
            .filter_map(|p| match p {
                ContentPart::Image { data } => Some(data.as_str()),
                ContentPart::Text { .. } => None,
            })
            .collect()
    }

    fn parts(&self) -> impl Iterator<Item = &ContentPart> {
        self.messages.iter().flat_map(|m| &m.content)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlmResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("bad response: {0}")]
    Protocol(String),
    #[error("no service configured: {0}")]
    NotConfigured(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) | ClientError::Timeout => true,
            ClientError::Http { status, .. } => *status == 429 || *status >= 500,
            ClientError::Protocol(_) | ClientError::NotConfigured(_) => false,
        }
    }
}

pub trait VlmClient: Send + Sync {
    fn complete(&self, request: &VlmRequest) -> Result<String, ClientError>;
}

impl<C: VlmClient + ?Sized> VlmClient for &C {
    fn complete(&self, request: &VlmRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }
}

impl<C: VlmClient + ?Sized> VlmClient for Box<C> {
    fn complete(&self, request: &VlmRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Self::default()
        }
    }

    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay
            .saturating_mul(1 << retry.min(16))
            .min(self.max_delay)
    }
}

/// Retries retryable failures with exponential backoff.
pub struct Retrying<C> {
    inner: C,
    policy: RetryPolicy,
}

impl<C: VlmClient> Retrying<C> {
    pub fn new(inner: C, policy: RetryPolicy) -> Self {
        Self { inner, policy }
    }
}

impl<C: VlmClient> VlmClient for Retrying<C> {
    fn complete(&self, request: &VlmRequest) -> Result<String, ClientError> {
        let mut retry = 0;
        loop {
            match self.inner.complete(request) {
                Err(e) if e.is_retryable() && retry < self.policy.max_retries => {
                    let wait = self.policy.delay(retry);
                    log::warn!("VLM call failed ({e}); retry {} in {wait:?}", retry + 1);
                    thread::sleep(wait);
                    retry += 1;
                }
                other => return other,
            }
        }
    }
}

/// Per-kind call counters shared by the offline clients.
#[derive(Debug, Default)]
pub struct CallCounts {
    pub stage1: AtomicUsize,
    pub stage2: AtomicUsize,
    pub judge: AtomicUsize,
}

impl CallCounts {
    fn record(&self, request: &VlmRequest) {
        let counter = match RequestKind::of(request) {
            RequestKind::Stage1 => &self.stage1,
            RequestKind::Stage2 => &self.stage2,
            RequestKind::Judge => &self.judge,
        };
        counter.fetch_add(1, Ordering::SeqCst);
    }

    pub fn snapshot(&self) -> (usize, usize, usize) {
        (
            self.stage1.load(Ordering::SeqCst),
            self.stage2.load(Ordering::SeqCst),
            self.judge.load(Ordering::SeqCst),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RequestKind {
    Stage1,
    Stage2,
    Judge,
}

impl RequestKind {
    fn of(request: &VlmRequest) -> Self {
        let text = request.text();
        if text.contains(JUDGE_MARKER) {
            RequestKind::Judge
        } else if text.contains(STAGE2_MARKER) {
            RequestKind::Stage2
        } else {
            RequestKind::Stage1
        }
    }
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    Some(rest[..rest.find(end).unwrap_or(rest.len())].trim())
}

fn module_count(text: &str) -> usize {
    between(text, "consisting of ", " modules")
        .and_then(|n| n.parse().ok())
        .unwrap_or(1)
}

/// Deterministic stand-in for the annotation service. Replies are built
/// from the prompt text alone, so identical requests get identical replies.
#[derive(Debug, Default)]
pub struct OfflineVlmClient {
    pub calls: CallCounts,
}

impl OfflineVlmClient {
    pub fn new() -> Self {
        Self::default()
    }

    fn reply(request: &VlmRequest) -> String {
        let text = request.text();
        match RequestKind::of(request) {
            RequestKind::Stage1 => {
                let info = between(&text, "Additional information:", "Examples:").unwrap_or("");
                let info = info.trim_end_matches('.').to_lowercase();
                if info.is_empty() {
                    "A closed sketch profile extruded into a solid".into()
                } else {
                    format!("A closed sketch profile, {info}")
                }
            }
            RequestKind::Stage2 => {
                let n = module_count(&text);
                let names: Vec<String> = (1..=n).map(|i| format!("Module {i}")).collect();
                format!(
                    "A CAD model made of {n} modules.\n\
                     The model assembles {n} modules in order, each described above, into one part.\n{}",
                    names.join("; ")
                )
            }
            RequestKind::Judge => {
                let n = module_count(&text);
                format!(
                    "{n}\nThe last module is a separate feature whose removal leaves a valid model.\n\
                     Remove module {n} from the CAD model.\nAdd module {n} back to the CAD model."
                )
            }
        }
    }
}

impl VlmClient for OfflineVlmClient {
    fn complete(&self, request: &VlmRequest) -> Result<String, ClientError> {
        self.calls.record(request);
        Ok(Self::reply(request))
    }
}

/// Replays queued replies in order, then falls back to the offline client.
#[derive(Debug, Default)]
pub struct ScriptedVlmClient {
    script: Mutex<VecDeque<Result<String, ClientError>>>,
    pub calls: CallCounts,
}

impl ScriptedVlmClient {
    pub fn new(script: impl IntoIterator<Item = Result<String, ClientError>>) -> Self {
        Self {
            script: Mutex::new(script.into_iter().collect()),
            calls: CallCounts::default(),
        }
    }
}

impl VlmClient for ScriptedVlmClient {
    fn complete(&self, request: &VlmRequest) -> Result<String, ClientError> {
        self.calls.record(request);
        let next = self.script.lock().expect("script lock").pop_front();
        next.unwrap_or_else(|| Ok(OfflineVlmClient::reply(request)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(text: &str) -> VlmRequest {
        VlmRequest::user("m", vec![ContentPart::text(text), ContentPart::png(&[1, 2, 3])])
    }

    #[test]
    fn wire_format() {
        let json = serde_json::to_value(req("hi")).unwrap();
        assert_eq!(json["messages"][0]["content"][0], serde_json::json!({"type": "text", "text": "hi"}));
        assert_eq!(json["messages"][0]["content"][1], serde_json::json!({"type": "image", "data": "AQID"}));
    }

    #[test]
    fn retries_transient_errors_up_to_the_limit() {
        let policy = RetryPolicy {
            base_delay: Duration::ZERO,
            ..RetryPolicy::default()
        };
        let flaky = ScriptedVlmClient::new([Err(ClientError::Timeout), Err(ClientError::Transport("reset".into()))]);
        assert!(Retrying::new(&flaky, policy).complete(&req("x")).is_ok());
        assert_eq!(flaky.calls.snapshot().0, 3);

        let down = ScriptedVlmClient::new((0..10).map(|_| {
            Err(ClientError::Http {
                status: 503,
                body: String::new(),
            })
        }));
        assert!(Retrying::new(&down, policy).complete(&req("x")).is_err());
        assert_eq!(down.calls.snapshot().0, 4);

        let bad = ScriptedVlmClient::new([Err(ClientError::Http {
            status: 400,
            body: String::new(),
        })]);
        assert!(Retrying::new(&bad, policy).complete(&req("x")).is_err());
        assert_eq!(bad.calls.snapshot().0, 1);
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(0), Duration::from_millis(500));
        assert_eq!(p.delay(2), Duration::from_secs(2));
        assert_eq!(p.delay(10), Duration::from_secs(8));
    }
}
