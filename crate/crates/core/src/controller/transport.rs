//! How chat requests reach a model: HTTP for real endpoints, scripted
//! stubs for tests and replay.

use std::collections::VecDeque;
use std::sync::mpsc;
use std::time::Duration;

use parking_lot::Mutex;
use thiserror::Error;

use super::wire::{ChatRequest, ChatResponse};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("timed out")]
    Timeout,
    #[error("HTTP status {0}: {1}")]
    Status(u16, String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl TransportError {
    /// Failures worth one more attempt.
    pub fn is_transient(&self) -> bool {
        match self {
            TransportError::Unreachable(_) | TransportError::Timeout => true,
            TransportError::Status(code, _) => *code >= 500 || *code == 429,
            TransportError::Malformed(_) => false,
        }
    }
}

pub trait ChatTransport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;
}

/// `POST {base_url}/v1/chat/completions` with a bearer token.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    pub base_url: String,
    pub api_key: String,
    pub timeout: Duration,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: &str, timeout: Duration) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: api_key.to_string(),
            timeout,
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url)
    }
}

impl ChatTransport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let url = self.endpoint();
        let key = self.api_key.clone();
        let timeout = self.timeout;
        let body = request.clone();
        let (tx, rx) = mpsc::channel();
        // the blocking client must not be driven from an async runtime thread
        std::thread::spawn(move || {
            let result = (|| {
                let client = reqwest::blocking::Client::builder()
                    .timeout(timeout)
                    .build()
                    .map_err(|e| TransportError::Unreachable(e.to_string()))?;
                let mut req = client.post(&url).json(&body);
                if !key.is_empty() {
                    req = req.bearer_auth(&key);
                }
                let resp = req.send().map_err(|e| {
                    if e.is_timeout() {
                        TransportError::Timeout
                    } else {
                        TransportError::Unreachable(e.to_string())
                    }
                })?;
                let status = resp.status();
                let text = resp.text().map_err(|e| TransportError::Malformed(e.to_string()))?;
                if !status.is_success() {
                    return Err(TransportError::Status(status.as_u16(), text));
                }
                serde_json::from_str(&text).map_err(|e| TransportError::Malformed(e.to_string()))
            })();
            let _ = tx.send(result);
        });
        rx.recv_timeout(timeout + Duration::from_millis(500))
            .unwrap_or(Err(TransportError::Timeout))
    }
}

type Responder = Box<dyn Fn(&ChatRequest, usize) -> Result<ChatResponse, TransportError> + Send + Sync>;

/// Replies from a queue, then (optionally) from a fallback function.
/// Every request is recorded.
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Result<ChatResponse, TransportError>>>,
    fallback: Option<Responder>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl ScriptedTransport {
    pub fn new(script: Vec<Result<ChatResponse, TransportError>>) -> Self {
        Self {
            script: Mutex::new(script.into()),
            fallback: None,
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Answers every request with `f(request, call_index)`.
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&ChatRequest, usize) -> Result<ChatResponse, TransportError> + Send + Sync + 'static,
    {
        Self {
            script: Mutex::new(VecDeque::new()),
            fallback: Some(Box::new(f)),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Queues another scripted reply.
    pub fn push(&self, reply: Result<ChatResponse, TransportError>) {
        self.script.lock().push_back(reply);
    }

    /// Drops unused scripted replies and returns how many there were.
    pub fn clear_script(&self) -> usize {
        let mut script = self.script.lock();
        let n = script.len();
        script.clear();
        n
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().clone()
    }

    pub fn call_count(&self) -> usize {
        self.requests.lock().len()
    }
}

impl ChatTransport for ScriptedTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let index = {
            let mut r = self.requests.lock();
            r.push(request.clone());
            r.len() - 1
        };
        if let Some(next) = self.script.lock().pop_front() {
            return next;
        }
        match &self.fallback {
            Some(f) => f(request, index),
            None => Err(TransportError::Unreachable("script exhausted".into())),
        }
    }
}
