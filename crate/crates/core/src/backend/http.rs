use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, BackendError, Completion, CompletionRequest, Role, TokenBucket};

pub const ENV_API_BASE: &str = "GOALACT_API_BASE";
pub const ENV_API_KEY: &str = "GOALACT_API_KEY";
pub const ENV_MODEL: &str = "GOALACT_MODEL";

/// A raw HTTP response as seen by the retry loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub retry_after: Option<Duration>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Connect(String),
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Timeout => f.write_str("request timed out"),
            TransportError::Connect(e) => write!(f, "connection failed: {e}"),
        }
    }
}

/// Sends one POST. Swappable so the retry policy can be tested offline.
pub trait Transport: Send + Sync {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
    ) -> Result<HttpReply, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl Transport for UreqTransport {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
    ) -> Result<HttpReply, TransportError> {
        let mut req = self.agent.post(url);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Connect(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(Duration::from_secs_f64);
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => TransportError::Timeout,
                other => TransportError::Connect(other.to_string()),
            })?;
        Ok(HttpReply {
            status,
            retry_after,
            body,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub api_base: String,
    #[serde(skip_serializing)]
    pub api_key: String,
    pub model: String,
    pub timeout_secs: f64,
    /// Total attempts per call, including the first.
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    pub requests_per_minute: u32,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            api_base: "https://api.openai.com/v1".into(),
            api_key: String::new(),
            model: "gpt-4".into(),
            timeout_secs: 120.0,
            max_attempts: 4,
            backoff_base_ms: 500,
            backoff_cap_ms: 30_000,
            requests_per_minute: 60,
        }
    }
}

impl HttpConfig {
    /// Overlays the endpoint, key and model environment variables.
    pub fn with_env(mut self) -> Self {
        if let Ok(v) = std::env::var(ENV_API_BASE) {
            self.api_base = v;
        }
        if let Ok(v) = std::env::var(ENV_API_KEY) {
            self.api_key = v;
        }
        if let Ok(v) = std::env::var(ENV_MODEL) {
            self.model = v;
        }
        self
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.api_base.trim_end_matches('/'))
    }

    fn backoff(&self, retry: u32) -> Duration {
        let ms = self
            .backoff_base_ms
            .saturating_mul(1u64 << retry.min(20))
            .min(self.backoff_cap_ms);
        Duration::from_millis(ms)
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    transport: Box<dyn Transport>,
    bucket: TokenBucket,
    sleep: fn(Duration),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let transport = UreqTransport::new(Duration::from_secs_f64(config.timeout_secs.max(0.001)));
        Self::with_transport(config, Box::new(transport))
    }

    pub fn with_transport(
        config: HttpConfig,
        transport: Box<dyn Transport>,
    ) -> Result<Self, BackendError> {
        if config.api_key.trim().is_empty() {
            return Err(BackendError::AuthFailure {
                reason: format!("no API key configured (set {ENV_API_KEY})"),
            });
        }
        if config.max_attempts == 0 {
            return Err(BackendError::Protocol {
                reason: "max_attempts must be at least 1".into(),
            });
        }
        let bucket = TokenBucket::per_minute(config.requests_per_minute);
        Ok(Self {
            config,
            transport,
            bucket,
            sleep: std::thread::sleep,
        })
    }

    /// Replaces the sleep used between retries.
    pub fn with_sleep(mut self, sleep: fn(Duration)) -> Self {
        self.sleep = sleep;
        self
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn body(&self, request: &CompletionRequest) -> String {
        let messages: Vec<_> = request
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                json!({"role": role, "content": m.content})
            })
            .collect();
        let mut body = json!({
            "model": request.model,
            "messages": messages,
            "temperature": request.temperature,
        });
        if let Some(n) = request.max_tokens {
            body["max_tokens"] = json!(n);
        }
        body.to_string()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

fn parse_reply(body: &str) -> Result<String, BackendError> {
    let parsed: ChatResponse = serde_json::from_str(body).map_err(|e| BackendError::Protocol {
        reason: format!("malformed completion body: {e}"),
    })?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| BackendError::Protocol {
            reason: "completion has no message content".into(),
        })
}

impl Backend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let url = self.config.endpoint();
        let headers = vec![
            ("Content-Type".to_string(), "application/json".to_string()),
            (
                "Authorization".to_string(),
                format!("Bearer {}", self.config.api_key),
            ),
        ];
        let body = self.body(request);
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts {
            self.bucket.acquire();
            let wait = match self.transport.post(&url, &headers, &body) {
                Ok(reply) => match reply.status {
                    200..=299 => {
                        return parse_reply(&reply.body).map(|text| Completion {
                            text,
                            attempts: attempt,
                        })
                    }
                    401 | 403 => {
                        return Err(BackendError::AuthFailure {
                            reason: format!("HTTP {}", reply.status),
                        })
                    }
                    429 | 500..=599 => {
                        last = format!("HTTP {}", reply.status);
                        reply.retry_after
                    }
                    s => {
                        return Err(BackendError::Protocol {
                            reason: format!("HTTP {s}: {}", reply.body.chars().take(200).collect::<String>()),
                        })
                    }
                },
                Err(e) => {
                    last = e.to_string();
                    None
                }
            };
            if attempt < self.config.max_attempts {
                (self.sleep)(wait.unwrap_or_else(|| self.config.backoff(attempt - 1)));
            }
        }
        Err(BackendError::Unavailable {
            attempts: self.config.max_attempts,
            reason: last,
        })
    }

    fn identity(&self) -> String {
        format!("http:{}", self.config.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Message;
    use std::sync::Mutex;

    struct Canned(Mutex<Vec<Result<HttpReply, TransportError>>>);

    impl Transport for Canned {
        fn post(&self, _: &str, _: &[(String, String)], _: &str) -> Result<HttpReply, TransportError> {
            self.0.lock().unwrap().remove(0)
        }
    }

    fn reply(status: u16, body: &str) -> Result<HttpReply, TransportError> {
        Ok(HttpReply {
            status,
            retry_after: None,
            body: body.into(),
        })
    }

    fn backend(replies: Vec<Result<HttpReply, TransportError>>) -> HttpBackend {
        let config = HttpConfig {
            api_key: "k".into(),
            max_attempts: 3,
            ..HttpConfig::default()
        };
        HttpBackend::with_transport(config, Box::new(Canned(Mutex::new(replies))))
            .unwrap()
            .with_sleep(|_| {})
    }

    fn req() -> CompletionRequest {
        CompletionRequest {
            model: "m".into(),
            messages: vec![Message::user("hi")],
            temperature: 0.0,
            max_tokens: None,
        }
    }

    const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}]}"#;

    #[test]
    fn retries_then_succeeds() {
        let b = backend(vec![reply(429, ""), reply(200, OK)]);
        let c = b.complete(&req()).unwrap();
        assert_eq!(c.text, "hello");
        assert_eq!(c.attempts, 2);
    }

    #[test]
    fn budget_exhausted() {
        let b = backend(vec![
            Err(TransportError::Timeout),
            reply(503, ""),
            reply(500, ""),
            reply(200, OK),
        ]);
        assert_eq!(
            b.complete(&req()),
            Err(BackendError::Unavailable {
                attempts: 3,
                reason: "HTTP 500".into()
            })
        );
    }

    #[test]
    fn auth_is_not_retried() {
        let b = backend(vec![reply(401, ""), reply(200, OK)]);
        assert!(matches!(b.complete(&req()), Err(BackendError::AuthFailure { .. })));
    }

    #[test]
    fn missing_key_rejected() {
        let err = HttpBackend::with_transport(HttpConfig::default(), Box::new(Canned(Mutex::new(vec![]))));
        assert!(matches!(err, Err(BackendError::AuthFailure { .. })));
    }

    #[test]
    fn backoff_grows_and_caps() {
        let c = HttpConfig::default();
        assert_eq!(c.backoff(0), Duration::from_millis(500));
        assert_eq!(c.backoff(2), Duration::from_millis(2000));
        assert_eq!(c.backoff(30), Duration::from_millis(30_000));
    }
}
