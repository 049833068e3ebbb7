//! On-disk index cache keyed by corpus fingerprint.
//!
//! Layout: 8-byte magic, little-endian `u32` version, then the bincode-encoded
//! [`Index`]. Any mismatch is treated as a miss and the index is rebuilt.

use std::fs;
use std::path::Path;

use super::Index;
use crate::corpus::Corpus;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SLPINDEX";
pub const CACHE_VERSION: u32 = 1;

fn decode(bytes: &[u8]) -> Option<Index> {
    let body = bytes.strip_prefix(MAGIC.as_slice())?;
    let (version, body) = body.split_at_checked(4)?;
    if u32::from_le_bytes(version.try_into().ok()?) != CACHE_VERSION {
        return None;
    }
    bincode::deserialize(body).ok()
}

fn encode(index: &Index) -> Result<Vec<u8>> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    let body = bincode::serialize(index).map_err(|e| Error::Format(e.to_string()))?;
    out.extend_from_slice(&body);
    Ok(out)
}

/// Returns the cached index when it matches the corpus, rebuilding (and
/// rewriting the cache) otherwise. The flag reports a cache hit.
pub fn load_or_build(path: &Path, corpus: &Corpus) -> Result<(Index, bool)> {
    if let Ok(bytes) = fs::read(path) {
        if let Some(index) = decode(&bytes) {
            if index.fingerprint() == corpus.fingerprint() {
                return Ok((index, true));
            }
        }
        log::info!("index cache {} is stale; rebuilding", path.display());
    }
    let index = Index::build(corpus);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode(&index)?).map_err(|e| Error::io(path, e))?;
    Ok((index, false))
}
