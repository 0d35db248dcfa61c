use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExtractionBackend;
use crate::error::Result;
use crate::graph::{normalize_text, RelationalGraph};
use crate::store::{atomic_write, content_path, sanitize};

#[derive(Serialize, Deserialize)]
struct CachedExtraction {
    backend: String,
    text: String,
    triplets: RelationalGraph,
}

/// Disk cache in front of an extractor, keyed by backend id and normalized text.
pub struct CachedExtractor<E> {
    inner: E,
    root: PathBuf,
}

impl<E: ExtractionBackend> CachedExtractor<E> {
    pub fn new(inner: E, cache_dir: &Path) -> Self {
        let root = cache_dir.join("extract").join(sanitize(inner.name()));
        CachedExtractor { inner, root }
    }

    fn path(&self, text: &str) -> PathBuf {
        content_path(&self.root, "v1", &normalize_text(text))
    }
}

impl<E: ExtractionBackend> ExtractionBackend for CachedExtractor<E> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn relation_types(&self) -> Option<usize> {
        self.inner.relation_types()
    }

    fn extract(&self, text: &str) -> Result<RelationalGraph> {
        let path = self.path(text);
        if let Ok(bytes) = fs::read(&path) {
            match serde_json::from_slice::<CachedExtraction>(&bytes) {
                Ok(hit) => return Ok(hit.triplets),
                Err(e) => log::warn!("ignoring corrupt cache entry {}: {e}", path.display()),
            }
        }
        let triplets = self.inner.extract(text)?;
        let entry = CachedExtraction {
            backend: self.inner.name().to_owned(),
            text: text.to_owned(),
            triplets,
        };
        atomic_write(&path, serde_json::to_string_pretty(&entry)?.as_bytes())?;
        Ok(entry.triplets)
    }
}
