//! Small filesystem helpers shared by the caches and the run writer.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::Result;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write through a temporary file in the same directory, then rename over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// `root/<namespace>/<first two hex chars>/<digest>.json`
pub fn content_path(root: &Path, namespace: &str, key: &str) -> PathBuf {
    let digest = sha256_hex(key.as_bytes());
    root.join(namespace)
        .join(&digest[..2])
        .join(format!("{digest}.json"))
}

/// Directory-safe rendering of a backend identifier.
pub fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.json");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn content_path_layout() {
        let p = content_path(Path::new("/c"), "search", "hawaii");
        let name = p.file_name().unwrap().to_str().unwrap();
        assert_eq!(name.len(), 64 + 5);
        assert_eq!(p.parent().unwrap().file_name().unwrap().to_str().unwrap(), &name[..2]);
        assert_eq!(sanitize("http://x:1/a"), "http___x_1_a");
    }
}
