//! Run manifests: a JSON record written after each run stage that pins the
//! config, the dataset content, and every output file by digest, plus the
//! counters needed to audit a run without replaying it. All digests are
//! recomputable from the artifacts themselves.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use weldeval_core::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounters {
    pub results: usize,
    pub failures: usize,
    pub fallbacks: usize,
    pub unparseable: usize,
    /// Completions answered by the backend.
    pub completions: usize,
    /// Completions served from the on-disk cache.
    pub cache_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub strategy: String,
    pub source_filter: Option<String>,
    pub config_sha256: String,
    pub dataset_sha256: String,
    pub runs: usize,
    pub k: usize,
    pub seed_base: u64,
    pub seeds: Vec<u64>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: BTreeMap<String, FileDigest>,
    pub counters: RunCounters,
}

impl RunManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)
    }
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_file(path: impl AsRef<Path>) -> std::io::Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Content digest of a loaded dataset: contexts, then per image its id,
/// content hash, and the label bit for every context, all length-prefixed.
/// Depends only on manifest content, not on file paths.
pub fn dataset_digest(dataset: &Dataset) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"weldeval-dataset-v1");
    hasher.update((dataset.contexts().len() as u64).to_le_bytes());
    for context in dataset.contexts() {
        let name = context.as_str().as_bytes();
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name);
    }
    hasher.update((dataset.len() as u64).to_le_bytes());
    for image in dataset.images() {
        let id = image.id.as_bytes();
        hasher.update((id.len() as u64).to_le_bytes());
        hasher.update(id);
        hasher.update(image.content_hash.as_bytes());
        for context in dataset.contexts() {
            let label = dataset
                .label(&image.id, context)
                .expect("loaded datasets have complete labels");
            hasher.update([u8::from(label.acceptable)]);
        }
    }
    hex::encode(hasher.finalize())
}
