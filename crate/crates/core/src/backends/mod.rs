//! Relation extraction and sentence embedding backends.
//!
//! Both capabilities are traits so that the same engine runs against the
//! deterministic fixture implementation in tests and against the HTTP
//! inference service in real experiments.

pub mod cache;
pub mod fixture;
pub mod http;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RelationalGraph;

pub use cache::CachedExtractor;
pub use fixture::{FixtureEmbedder, FixtureExtractor, FixtureManifest};
pub use http::{HealthInfo, HttpBackend, HttpBackendConfig};

/// Embedding width of the default sentence encoder.
pub const DEFAULT_EMBEDDING_DIM: usize = 384;

/// Maps text to a set of semantic triplets.
pub trait ExtractionBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Size of the relation inventory, when the backend knows it.
    fn relation_types(&self) -> Option<usize> {
        None
    }

    fn extract(&self, text: &str) -> Result<RelationalGraph>;
}

/// Maps texts to fixed-width vectors.
pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;

    /// A scripted similarity for a pair of normalized labels, bypassing the vectors.
    fn similarity_override(&self, _a: &str, _b: &str) -> Option<f64> {
        None
    }
}

pub use EmbeddingBackend as Embedder;

impl<T: ExtractionBackend + ?Sized> ExtractionBackend for std::sync::Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn relation_types(&self) -> Option<usize> {
        (**self).relation_types()
    }

    fn extract(&self, text: &str) -> Result<RelationalGraph> {
        (**self).extract(text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, dim: usize) -> Result<Self> {
        if values.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("embedding contains a non-finite value".into()));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub(crate) fn check_embed_input(texts: &[String]) -> Result<()> {
    if texts.is_empty() {
        return Err(Error::Precondition("embed requires at least one text".into()));
    }
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(Error::Precondition("embed inputs must be non-empty".into()));
    }
    Ok(())
}

pub(crate) fn check_extract_input(text: &str) -> Result<()> {
    if text.trim().is_empty() {
        return Err(Error::Precondition("extract requires non-empty text".into()));
    }
    Ok(())
}
