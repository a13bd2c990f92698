//! Embedding stores: a JSON manifest next to a raw float32 payload.
//!
//! For a manifest at `feats.json` the payload lives at `feats.f32` and the
//! optional labels at `feats.labels` (one integer per line). Rows are
//! row-major little-endian float32 regardless of platform.

use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{sha256_hex, write_atomic};
use crate::error::{AlbmError, Result};

pub const STORE_DTYPE: &str = "f32le";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreKind {
    Image,
    Concept,
    Name,
}

impl fmt::Display for StoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StoreKind::Image => "image",
            StoreKind::Concept => "concept",
            StoreKind::Name => "name",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub d: usize,
    pub count: usize,
    pub dtype: String,
    pub kind: StoreKind,
    pub template: String,
    pub checksum: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub manifest: StoreManifest,
    pub data: Array2<f64>,
    pub labels: Option<Vec<usize>>,
}

impl EmbeddingStore {
    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| AlbmError::Format("store has no labels file".into()))
    }
}

pub fn payload_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("f32")
}

pub fn labels_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("labels")
}

fn encode_payload(data: ArrayView2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() * 4);
    for &x in data.iter() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out
}

/// Writes manifest, payload and (optionally) labels atomically.
pub fn write_store(
    manifest_path: &Path,
    kind: StoreKind,
    template: &str,
    model: Option<&str>,
    data: ArrayView2<f64>,
    labels: Option<&[usize]>,
) -> Result<StoreManifest> {
    if let Some(l) = labels {
        if l.len() != data.nrows() {
            return Err(AlbmError::dim("labels", data.nrows(), l.len()));
        }
    }
    let payload = encode_payload(data);
    let manifest = StoreManifest {
        d: data.ncols(),
        count: data.nrows(),
        dtype: STORE_DTYPE.to_string(),
        kind,
        template: template.to_string(),
        checksum: sha256_hex(&payload),
        model: model.map(str::to_string),
    };
    write_atomic(&payload_path(manifest_path), &payload)?;
    if let Some(l) = labels {
        let text: String = l.iter().map(|y| format!("{y}\n")).collect();
        write_atomic(&labels_path(manifest_path), text.as_bytes())?;
    }
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_atomic(manifest_path, json.as_bytes())?;
    Ok(manifest)
}

/// Reads and validates a store: payload size first, then checksum.
pub fn load_store(manifest_path: &Path) -> Result<EmbeddingStore> {
    let text =
        std::fs::read_to_string(manifest_path).map_err(|e| AlbmError::io(manifest_path, e))?;
    let manifest: StoreManifest = serde_json::from_str(&text)
        .map_err(|e| AlbmError::Format(format!("{}: {e}", manifest_path.display())))?;
    if manifest.dtype != STORE_DTYPE {
        return Err(AlbmError::Format(format!(
            "unsupported dtype {:?}",
            manifest.dtype
        )));
    }
    let ppath = payload_path(manifest_path);
    let payload = std::fs::read(&ppath).map_err(|e| AlbmError::io(&ppath, e))?;
    let expected = manifest.count * manifest.d * 4;
    if payload.len() != expected {
        return Err(AlbmError::Format(format!(
            "{}: payload is {} bytes, manifest implies {expected}",
            ppath.display(),
            payload.len()
        )));
    }
    let actual = sha256_hex(&payload);
    if actual != manifest.checksum {
        return Err(AlbmError::Checksum {
            path: ppath,
            expected: manifest.checksum.clone(),
            actual,
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let data = Array2::from_shape_vec((manifest.count, manifest.d), values)
        .expect("payload size checked");

    let lpath = labels_path(manifest_path);
    let labels = if lpath.exists() {
        let text = std::fs::read_to_string(&lpath).map_err(|e| AlbmError::io(&lpath, e))?;
        let labels = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<usize>()
                    .map_err(|e| AlbmError::Format(format!("{}: {e}", lpath.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        if labels.len() != manifest.count {
            return Err(AlbmError::Format(format!(
                "{}: {} labels for {} rows",
                lpath.display(),
                labels.len(),
                manifest.count
            )));
        }
        Some(labels)
    } else {
        None
    };
    Ok(EmbeddingStore {
        manifest,
        data,
        labels,
    })
}
