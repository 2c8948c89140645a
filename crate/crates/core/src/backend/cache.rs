use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use super::{BackendError, ChatRequest, Reasoner};

/// Content-addressed response cache in a directory. The key covers the
/// endpoint, model, full message list and temperature.
pub struct CachedBackend<R> {
    inner: R,
    dir: PathBuf,
    endpoint: String,
    transport_calls: AtomicUsize,
}

impl<R: Reasoner> CachedBackend<R> {
    pub fn new(inner: R, dir: impl Into<PathBuf>, endpoint: impl Into<String>) -> Self {
        CachedBackend { inner, dir: dir.into(), endpoint: endpoint.into(), transport_calls: AtomicUsize::new(0) }
    }

    /// Requests that missed the cache and reached the inner backend.
    pub fn transport_calls(&self) -> usize {
        self.transport_calls.load(Ordering::SeqCst)
    }

    pub fn key(&self, request: &ChatRequest) -> String {
        let payload = serde_json::json!({
            "endpoint": self.endpoint,
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        hex::encode(Sha256::digest(payload.to_string().as_bytes()))
    }
}

impl<R: Reasoner> Reasoner for CachedBackend<R> {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let path = self.dir.join(format!("{}.txt", self.key(request)));
        if let Ok(text) = std::fs::read_to_string(&path) {
            return Ok(text);
        }
        self.transport_calls.fetch_add(1, Ordering::SeqCst);
        let text = self.inner.complete(request)?;
        std::fs::create_dir_all(&self.dir).map_err(|e| BackendError::Transport(format!("cache dir: {e}")))?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        if std::fs::write(&tmp, &text).is_ok() {
            let _ = std::fs::rename(&tmp, &path);
        }
        Ok(text)
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}
