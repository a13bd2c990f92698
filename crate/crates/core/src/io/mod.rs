//! Persistence: embedding stores, binary weight files, splits and few-shot
//! sampling.

mod binary;
pub mod split;
pub mod store;

use std::io::Write;
use std::path::Path;

use crate::error::{AlbmError, Result};

pub use binary::{ByteReader, ByteWriter};
pub use split::{sample_fewshot, split_base_novel, SplitRule, SplitSpec};
pub use store::{load_store, write_store, EmbeddingStore, StoreKind, StoreManifest};

/// Writes `bytes` to a sibling temp file and renames it over `path`, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| AlbmError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| AlbmError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| AlbmError::io(path, e))?;
    tmp.persist(path).map_err(|e| AlbmError::io(path, e.error))?;
    Ok(())
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
