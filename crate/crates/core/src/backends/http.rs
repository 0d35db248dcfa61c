//! Client for the inference sidecar.
//!
//! Protocol:
//!
//! ```text
//! POST /extract  {"text": "..."}        -> {"triplets": [{"subject","relation","object"}]}
//! POST /embed    {"texts": ["..."]}     -> {"vectors": [[f64; dim]]}
//! GET  /health                          -> {"status":"ok","extractor":"...","embedder":"...","dim":384}
//! ```

use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_embed_input, check_extract_input, EmbeddingBackend, EmbeddingVector, ExtractionBackend};
use crate::error::{Error, Result};
use crate::graph::{RelationalGraph, Triplet};
use crate::transport::Transport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthInfo {
    pub status: String,
    pub extractor: String,
    pub embedder: String,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub max_in_flight: usize,
}

impl HttpBackendConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpBackendConfig {
            endpoint: endpoint.into(),
            max_in_flight: 4,
        }
    }
}

#[derive(Deserialize)]
struct WireTriplet {
    subject: String,
    relation: String,
    object: String,
}

#[derive(Deserialize)]
struct ExtractResponse {
    triplets: Vec<WireTriplet>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Counting semaphore bounding concurrent requests.
struct Limiter {
    free: Mutex<usize>,
    cond: Condvar,
}

impl Limiter {
    fn new(permits: usize) -> Self {
        Limiter {
            free: Mutex::new(permits.max(1)),
            cond: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().expect("limiter poisoned");
            while *free == 0 {
                free = self.cond.wait(free).expect("limiter poisoned");
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().expect("limiter poisoned") += 1;
        self.cond.notify_one();
        out
    }
}

pub struct HttpBackend {
    transport: Arc<dyn Transport>,
    base: String,
    health: HealthInfo,
    limiter: Limiter,
}

impl HttpBackend {
    /// Query `/health` and check the service is ready.
    pub fn connect(transport: Arc<dyn Transport>, config: &HttpBackendConfig) -> Result<Self> {
        let base = config.endpoint.trim_end_matches('/').to_owned();
        let body = transport.get(&format!("{base}/health"), &[])?;
        let health: HealthInfo =
            serde_json::from_str(&body).map_err(|e| Error::Protocol(format!("/health: {e}")))?;
        if health.status != "ok" {
            return Err(Error::Protocol(format!("service status is {:?}", health.status)));
        }
        if health.dim == 0 {
            return Err(Error::Protocol("service reports a zero embedding dimension".into()));
        }
        Ok(HttpBackend {
            transport,
            base,
            health,
            limiter: Limiter::new(config.max_in_flight),
        })
    }

    pub fn health(&self) -> &HealthInfo {
        &self.health
    }

    fn post(&self, path: &str, body: serde_json::Value) -> Result<String> {
        let url = format!("{}{path}", self.base);
        self.limiter.run(|| self.transport.post_json(&url, &body))
    }
}

impl ExtractionBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.health.extractor
    }

    fn extract(&self, text: &str) -> Result<RelationalGraph> {
        check_extract_input(text)?;
        let body = self.post("/extract", json!({ "text": text }))?;
        let resp: ExtractResponse =
            serde_json::from_str(&body).map_err(|e| Error::Protocol(format!("/extract: {e}")))?;
        resp.triplets
            .into_iter()
            .map(|t| {
                Triplet::parse(&t.subject, &t.relation, &t.object)
                    .map_err(|e| Error::Protocol(format!("/extract returned {e}")))
            })
            .collect()
    }
}

impl EmbeddingBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.health.embedder
    }

    fn dim(&self) -> usize {
        self.health.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        check_embed_input(texts)?;
        let body = self.post("/embed", json!({ "texts": texts }))?;
        let resp: EmbedResponse =
            serde_json::from_str(&body).map_err(|e| Error::Protocol(format!("/embed: {e}")))?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "/embed returned {} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                EmbeddingVector::new(v, self.health.dim).map_err(|e| Error::Protocol(format!("/embed: {e}")))
            })
            .collect()
    }
}
