//! Image embeddings and cosine-similarity retrieval.
//!
//! Embeddings come from a pluggable [`Embedder`] backend and live in an
//! exhaustive-scan [`EmbeddingIndex`]. Retrieval is exact top-k by cosine
//! similarity with an exclusion set, which is how the reference exemplars
//! for a query image are found (the query itself is always excluded).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{Dataset, ImageStore, WeldImage};
use crate::num::Real;
use crate::EmbedScalar;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("vector length mismatch: {left} vs {right}")]
    ShapeMismatch { left: usize, right: usize },
    #[error("cosine similarity undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("image {image_id:?}: expected dim {expected}, got {got}")]
    DimensionMismatch {
        image_id: String,
        expected: usize,
        got: usize,
    },
    #[error("image {image_id:?}: embedding contains a non-finite value")]
    NonFinite { image_id: String },
    #[error("image {image_id:?}: embedding has zero norm")]
    ZeroNormEntry { image_id: String },
    #[error("duplicate index entry for image {0:?}")]
    DuplicateId(String),
    #[error("no embedding stored for image {0:?}")]
    MissingEmbedding(String),
    #[error("no bytes loaded for image {0:?}")]
    MissingImageBytes(String),
    #[error("duplicate embedding record for content hash {0}")]
    DuplicateRecord(String),
    #[error("embedding endpoint transport failure: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("embedding endpoint returned HTTP {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("embedding endpoint reply malformed: {0}")]
    Protocol(String),
    #[error("embeddings file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("embeddings file {path}, line {line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Cosine similarity dot(a,b)/(‖a‖·‖b‖), clamped into [-1, 1] against
/// floating-point overshoot.
pub fn cosine_similarity<T: Real>(a: &[T], b: &[T]) -> Result<T, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::ShapeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut dot = T::zero();
    let mut na = T::zero();
    let mut nb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na.is_zero() || nb.is_zero() {
        return Err(EmbeddingError::ZeroNorm);
    }
    let cos = dot / (na.sqrt() * nb.sqrt());
    Ok(cos.min(T::one()).max(-T::one()))
}

/// One retrieval result: a candidate image and its similarity to the query.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityHit<T = EmbedScalar> {
    pub image_id: String,
    pub score: T,
}

/// Exhaustive-scan similarity index over one embedding space.
///
/// Entries are validated on insert (homogeneous dim, finite, nonzero norm),
/// so every query against the index has a defined similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex<T: Real = EmbedScalar> {
    dim: usize,
    entries: BTreeMap<String, Vec<T>>,
}

impl<T: Real> EmbeddingIndex<T> {
    pub fn new(dim: usize) -> Self {
        EmbeddingIndex {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.entries.contains_key(image_id)
    }

    pub fn get(&self, image_id: &str) -> Option<&[T]> {
        self.entries.get(image_id).map(Vec::as_slice)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn insert(&mut self, image_id: impl Into<String>, values: Vec<T>) -> Result<(), EmbeddingError> {
        let image_id = image_id.into();
        if values.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                image_id,
                expected: self.dim,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { image_id });
        }
        if values.iter().all(|v| v.is_zero()) {
            return Err(EmbeddingError::ZeroNormEntry { image_id });
        }
        if self.entries.contains_key(&image_id) {
            return Err(EmbeddingError::DuplicateId(image_id));
        }
        self.entries.insert(image_id, values);
        Ok(())
    }

    /// Top-k entries by similarity to `query`, skipping excluded ids.
    /// Sorted by score descending, ties broken by ascending image id;
    /// returns fewer than k hits when the candidate set is smaller.
    pub fn top_k(
        &self,
        query: &[T],
        k: usize,
        exclude: &BTreeSet<String>,
    ) -> Result<Vec<SimilarityHit<T>>, EmbeddingError> {
        let mut hits = Vec::with_capacity(self.entries.len());
        for (id, values) in &self.entries {
            if exclude.contains(id) {
                continue;
            }
            hits.push(SimilarityHit {
                image_id: id.clone(),
                score: cosine_similarity(query, values)?,
            });
        }
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("validated entries give finite scores")
                .then_with(|| a.image_id.cmp(&b.image_id))
        });
        hits.truncate(k);
        Ok(hits)
    }

    /// Leave-one-out neighbors of an indexed image: top-k over everything
    /// except the image itself.
    pub fn neighbors_of(&self, image_id: &str, k: usize) -> Result<Vec<SimilarityHit<T>>, EmbeddingError> {
        let query = self
            .entries
            .get(image_id)
            .ok_or_else(|| EmbeddingError::MissingEmbedding(image_id.to_string()))?;
        let exclude: BTreeSet<String> = [image_id.to_string()].into();
        self.top_k(query, k, &exclude)
    }
}

/// Something that can turn image bytes into a fixed-dimension vector.
pub trait Embedder {
    fn dim(&self) -> usize;
    fn embed(&self, image: &WeldImage, bytes: &[u8]) -> Result<Vec<EmbedScalar>, EmbeddingError>;
}

/// Content-addressed pseudo-embedder: expands the SHA-256 of the image bytes
/// into a deterministic unit vector. Carries no visual signal; it exists so
/// the full pipeline can run offline with a backend that still satisfies the
/// determinism and dimensionality contracts.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        HashEmbedder { dim }
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, _image: &WeldImage, bytes: &[u8]) -> Result<Vec<EmbedScalar>, EmbeddingError> {
        let state = Sha256::digest(bytes);
        let mut raw = Vec::with_capacity(self.dim);
        let mut counter: u32 = 0;
        while raw.len() < self.dim {
            let mut h = Sha256::new();
            h.update(state);
            h.update(counter.to_le_bytes());
            for chunk in h.finalize().chunks_exact(4) {
                if raw.len() == self.dim {
                    break;
                }
                let u = u32::from_le_bytes(chunk.try_into().unwrap());
                raw.push((u as f64 / 4294967296.0) * 2.0 - 1.0);
            }
            counter += 1;
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            raw[0] = 1.0;
            return Ok(raw.iter().map(|&v| v as EmbedScalar).collect());
        }
        Ok(raw.iter().map(|&v| (v / norm) as EmbedScalar).collect())
    }
}

/// Client for a remote embedding service.
///
/// Wire format: POST `{"image": "<base64 bytes>"}` to the endpoint, reply
/// `{"embedding": [..]}` with exactly `dim` finite numbers.
pub struct RemoteEmbedder {
    endpoint: String,
    dim: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, dim: usize, timeout: Duration) -> Result<Self, EmbeddingError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()?;
        Ok(RemoteEmbedder {
            endpoint: endpoint.into(),
            dim,
            client,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, image: &WeldImage, bytes: &[u8]) -> Result<Vec<EmbedScalar>, EmbeddingError> {
        let body = serde_json::json!({ "image": BASE64.encode(bytes) });
        let resp = self.client.post(&self.endpoint).json(&body).send()?;
        let status = resp.status();
        let text = resp.text()?;
        if !status.is_success() {
            return Err(EmbeddingError::Endpoint {
                status: status.as_u16(),
                body: text.chars().take(200).collect(),
            });
        }
        #[derive(Deserialize)]
        struct Reply {
            embedding: Vec<EmbedScalar>,
        }
        let reply: Reply = serde_json::from_str(&text)
            .map_err(|e| EmbeddingError::Protocol(e.to_string()))?;
        if reply.embedding.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                image_id: image.id.clone(),
                expected: self.dim,
                got: reply.embedding.len(),
            });
        }
        if reply.embedding.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite {
                image_id: image.id.clone(),
            });
        }
        Ok(reply.embedding)
    }
}

/// One line of a precomputed-embeddings file. Keyed by image content hash so
/// the file survives image renames and manifest reshuffles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub content_hash: String,
    pub dim: usize,
    pub values: Vec<EmbedScalar>,
}

/// Write records as JSON lines in the given order.
pub fn write_embeddings(path: impl AsRef<Path>, records: &[EmbeddingRecord]) -> Result<(), EmbeddingError> {
    let path = path.as_ref();
    let io_err = |source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    for record in records {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(file, "{line}").map_err(io_err)?;
    }
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRecord>, EmbeddingError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|source| EmbeddingError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Embedder backed by a precomputed-embeddings file.
pub struct PrecomputedEmbedder {
    dim: usize,
    by_hash: BTreeMap<String, Vec<EmbedScalar>>,
}

impl PrecomputedEmbedder {
    pub fn from_records(records: Vec<EmbeddingRecord>) -> Result<Self, EmbeddingError> {
        let mut by_hash = BTreeMap::new();
        let mut dim = None;
        for record in records {
            let expected = *dim.get_or_insert(record.dim);
            if record.dim != expected || record.values.len() != record.dim {
                return Err(EmbeddingError::DimensionMismatch {
                    image_id: record.content_hash.clone(),
                    expected,
                    got: record.values.len(),
                });
            }
            if by_hash.insert(record.content_hash.clone(), record.values).is_some() {
                return Err(EmbeddingError::DuplicateRecord(record.content_hash));
            }
        }
        Ok(PrecomputedEmbedder {
            dim: dim.unwrap_or(0),
            by_hash,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        Self::from_records(read_embeddings(path)?)
    }

    pub fn len(&self) -> usize {
        self.by_hash.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_hash.is_empty()
    }
}

impl Embedder for PrecomputedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, image: &WeldImage, _bytes: &[u8]) -> Result<Vec<EmbedScalar>, EmbeddingError> {
        self.by_hash
            .get(&image.content_hash)
            .cloned()
            .ok_or_else(|| EmbeddingError::MissingEmbedding(image.id.clone()))
    }
}

/// Embed every image of a dataset (in dataset order) and build the index.
pub fn build_index(
    dataset: &Dataset,
    store: &ImageStore,
    embedder: &dyn Embedder,
) -> Result<EmbeddingIndex, EmbeddingError> {
    let mut index = EmbeddingIndex::new(embedder.dim());
    for image in dataset.images() {
        let bytes = store
            .bytes(&image.id)
            .ok_or_else(|| EmbeddingError::MissingImageBytes(image.id.clone()))?;
        index.insert(&image.id, embedder.embed(image, bytes)?)?;
    }
    Ok(index)
}
