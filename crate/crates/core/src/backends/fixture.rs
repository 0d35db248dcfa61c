//! Deterministic backends driven by a JSON manifest.
//!
//! Extraction is a strict lookup table: every text the engine asks about must
//! be listed, and a miss is an error. Embeddings are pseudo-random vectors
//! seeded from the manifest seed and the normalized text, with an explicit
//! table of pairwise similarities for scripted scenarios.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_embed_input, check_extract_input, EmbeddingBackend, EmbeddingVector, ExtractionBackend};
use super::DEFAULT_EMBEDDING_DIM;
use crate::error::{Error, Result};
use crate::graph::{normalize_text, RelationalGraph};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtractorInfo {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation_types: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbeddingInfo {
    #[serde(default = "default_embedder_name")]
    pub name: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_embedder_name() -> String {
    "fixture-hash".to_owned()
}

fn default_dim() -> usize {
    DEFAULT_EMBEDDING_DIM
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtractionEntry {
    pub text: String,
    pub triplets: RelationalGraph,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimilarityEntry {
    pub a: String,
    pub b: String,
    pub value: f64,
}

/// On-disk description of the fixture backends.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub extractor: ExtractorInfo,
    pub embedding: EmbeddingInfo,
    #[serde(default)]
    pub extractions: Vec<ExtractionEntry>,
    #[serde(default)]
    pub similarities: Vec<SimilarityEntry>,
}

impl FixtureManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn extractor(&self) -> Result<FixtureExtractor> {
        let mut table = HashMap::new();
        for entry in &self.extractions {
            let key = normalize_text(&entry.text);
            if key.is_empty() {
                return Err(Error::Precondition("fixture extraction with empty text".into()));
            }
            if table.insert(key, entry.triplets.clone()).is_some() {
                return Err(Error::Precondition(format!(
                    "duplicate fixture extraction for {:?}",
                    entry.text
                )));
            }
        }
        Ok(FixtureExtractor {
            name: self.extractor.name.clone(),
            relation_types: self.extractor.relation_types,
            table,
        })
    }

    pub fn embedder(&self) -> Result<FixtureEmbedder> {
        let mut embedder = FixtureEmbedder::named(&self.embedding.name, self.embedding.dim, self.embedding.seed);
        for s in &self.similarities {
            if !s.value.is_finite() || s.value.abs() > 1.0 {
                return Err(Error::Precondition(format!(
                    "fixture similarity {} for ({:?}, {:?}) is outside [-1, 1]",
                    s.value, s.a, s.b
                )));
            }
            embedder.set_similarity(&s.a, &s.b, s.value);
        }
        Ok(embedder)
    }
}

#[derive(Clone, Debug)]
pub struct FixtureExtractor {
    name: String,
    relation_types: Option<usize>,
    table: HashMap<String, RelationalGraph>,
}

impl FixtureExtractor {
    pub fn new(name: impl Into<String>) -> Self {
        FixtureExtractor {
            name: name.into(),
            relation_types: None,
            table: HashMap::new(),
        }
    }

    pub fn insert(&mut self, text: &str, graph: RelationalGraph) {
        self.table.insert(normalize_text(text), graph);
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl ExtractionBackend for FixtureExtractor {
    fn name(&self) -> &str {
        &self.name
    }

    fn relation_types(&self) -> Option<usize> {
        self.relation_types
    }

    fn extract(&self, text: &str) -> Result<RelationalGraph> {
        check_extract_input(text)?;
        self.table
            .get(&normalize_text(text))
            .cloned()
            .ok_or_else(|| Error::MissingFixture {
                kind: "extraction",
                key: text.to_owned(),
            })
    }
}

#[derive(Clone, Debug)]
pub struct FixtureEmbedder {
    name: String,
    dim: usize,
    seed: u64,
    overrides: HashMap<(String, String), f64>,
}

impl FixtureEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self::named(&default_embedder_name(), dim, seed)
    }

    pub fn named(name: &str, dim: usize, seed: u64) -> Self {
        FixtureEmbedder {
            name: name.to_owned(),
            dim,
            seed,
            overrides: HashMap::new(),
        }
    }

    /// Script the similarity of a label pair (symmetric).
    pub fn set_similarity(&mut self, a: &str, b: &str, value: f64) {
        let (a, b) = (normalize_text(a), normalize_text(b));
        self.overrides.insert((a.clone(), b.clone()), value);
        self.overrides.insert((b, a), value);
    }

    fn vector_for(&self, text: &str) -> EmbeddingVector {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(normalize_text(text).as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        let values = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        EmbeddingVector(values)
    }
}

impl EmbeddingBackend for FixtureEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        check_embed_input(texts)?;
        Ok(texts.iter().map(|t| self.vector_for(t)).collect())
    }

    fn similarity_override(&self, a: &str, b: &str) -> Option<f64> {
        self.overrides.get(&(a.to_owned(), b.to_owned())).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::cosine;
    use crate::graph::Triplet;

    #[test]
    fn extraction_is_a_strict_lookup() {
        let mut ex = FixtureExtractor::new("fx");
        let g: RelationalGraph = [Triplet::parse("Barack Obama", "born in", "Hawaii").unwrap()]
            .into_iter()
            .collect();
        ex.insert("Obama was born in Hawaii", g.clone());
        assert_eq!(ex.extract("  obama WAS born in Hawaii").unwrap(), g);
        assert!(matches!(ex.extract("unseen"), Err(Error::MissingFixture { .. })));
        assert!(matches!(ex.extract(""), Err(Error::Precondition(_))));
    }

    #[test]
    fn embeddings_are_deterministic_and_sized() {
        let emb = FixtureEmbedder::new(DEFAULT_EMBEDDING_DIM, 3);
        let out = emb.embed(&["hawaii".into(), "Hawaii".into(), "oahu".into()]).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|v| v.dim() == 384));
        assert_eq!(out[0], out[1]);
        assert_ne!(out[0], out[2]);
        assert!(cosine(&out[0], &out[2]).unwrap().abs() < 0.5);
        assert!(emb.embed(&[]).is_err());
        assert!(emb.embed(&[" ".into()]).is_err());
    }

    #[test]
    fn overrides_are_symmetric_and_normalized() {
        let mut emb = FixtureEmbedder::new(8, 0);
        emb.set_similarity("Attorney", "lawyer", 0.83);
        assert_eq!(emb.similarity_override("lawyer", "attorney"), Some(0.83));
        assert_eq!(emb.similarity_override("attorney", "lawyer"), Some(0.83));
        assert_eq!(emb.similarity_override("attorney", "judge"), None);
    }
}
