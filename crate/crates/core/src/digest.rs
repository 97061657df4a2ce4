//! SHA-256 content digests for artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestManifest {
    /// Sorted by name.
    pub entries: Vec<DigestEntry>,
    pub combined: String,
}

/// Combined digest over `(name, digest)` pairs: the pairs are sorted by name
/// and hashed as `name\tdigest\n` lines, so input order does not matter.
pub fn combine(pairs: &[(String, String)]) -> String {
    let mut sorted: Vec<&(String, String)> = pairs.iter().collect();
    sorted.sort();
    let mut hasher = Sha256::new();
    for (name, digest) in sorted {
        hasher.update(name.as_bytes());
        hasher.update(b"\t");
        hasher.update(digest.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, thiserror::Error)]
#[error("cannot read {path}: {source}")]
pub struct DigestError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

pub fn file_digest(path: &Path) -> Result<String, DigestError> {
    fs::read(path).map(|b| sha256_hex(&b)).map_err(|source| DigestError {
        path: path.to_path_buf(),
        source,
    })
}

/// Digests each file (named by its path as given) plus a combined digest.
pub fn compute_digests<P: AsRef<Path>>(paths: &[P]) -> Result<DigestManifest, DigestError> {
    let mut entries = Vec::with_capacity(paths.len());
    for p in paths {
        let p = p.as_ref();
        entries.push(DigestEntry {
            name: p.display().to_string(),
            sha256: file_digest(p)?,
        });
    }
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    let pairs: Vec<(String, String)> = entries.iter().map(|e| (e.name.clone(), e.sha256.clone())).collect();
    Ok(DigestManifest {
        combined: combine(&pairs),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty");
        fs::write(&p, b"").unwrap();
        let m = compute_digests(&[&p]).unwrap();
        assert_eq!(
            m.entries[0].sha256,
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn order_independent_and_sensitive_to_content() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        let b = dir.path().join("b.txt");
        fs::write(&a, b"alpha").unwrap();
        fs::write(&b, b"beta").unwrap();
        let m1 = compute_digests(&[&a, &b]).unwrap();
        let m2 = compute_digests(&[&b, &a]).unwrap();
        assert_eq!(m1, m2);
        fs::write(&b, b"betb").unwrap();
        let m3 = compute_digests(&[&a, &b]).unwrap();
        assert_ne!(m1.combined, m3.combined);
    }

    #[test]
    fn unreadable_file() {
        assert!(compute_digests(&[Path::new("/no/such/file")]).is_err());
    }
}
