//! Reasoner backends: an OpenAI-compatible HTTP client, an on-disk response
//! cache, a per-instance call counter, and an offline mock built on the
//! reference interpreter.

mod cache;
mod live;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

pub use cache::CachedBackend;
pub use live::{LiveBackend, LiveConfig};
pub use mock::{FaultKind, FaultSpec, MockBackend, RealizedFault};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(messages: Vec<Message>) -> Self {
        ChatRequest { messages, model: String::new(), temperature: 0.0, max_tokens: 4096 }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("backend not configured: {0}")]
    Config(String),
}

/// Anything that answers chat requests.
pub trait Reasoner: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;

    /// Short name used in reports.
    fn name(&self) -> String;
}

impl<T: Reasoner + ?Sized> Reasoner for &T {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

impl<T: Reasoner + ?Sized> Reasoner for std::sync::Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

/// Counts calls made through it; wrap a backend once per instance.
pub struct Counting<'a> {
    inner: &'a dyn Reasoner,
    calls: AtomicUsize,
}

impl<'a> Counting<'a> {
    pub fn new(inner: &'a dyn Reasoner) -> Self {
        Counting { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Reasoner for Counting<'_> {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}
