//! Expert-labeled weld image datasets: manifest loading, validation,
//! annotation filtering, and per-context class statistics.
//!
//! A dataset is described by a single JSON manifest listing every image with
//! its source, an annotation-overlay flag, and one binary acceptability label
//! per application context. The manifest format is documented in the README
//! and round-trips through [`load_manifest`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("manifest declares no contexts")]
    NoContexts,
    #[error("duplicate context {0:?} in manifest context list")]
    DuplicateContext(String),
    #[error("empty context name in manifest context list")]
    EmptyContextName,
    #[error("duplicate image id {0:?}")]
    DuplicateImage(String),
    #[error("image {id:?}: file {path} is not readable: {source}")]
    MissingImage {
        id: String,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image {id:?}: content hash mismatch (manifest {declared}, file {actual})")]
    HashMismatch {
        id: String,
        declared: String,
        actual: String,
    },
    #[error("image {id:?}: duplicate label for context {context:?}")]
    DuplicateLabel { id: String, context: String },
    #[error("image {id:?}: label references unknown context {context:?}")]
    UnknownContext { id: String, context: String },
    #[error("image {id:?}: missing label for context {context:?}")]
    MissingLabel { id: String, context: String },
    #[error("context {0:?} is not part of this dataset")]
    ContextNotInDataset(String),
}

/// An application context an expert judged welds against.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextId(String);

impl ContextId {
    pub fn new(name: impl Into<String>) -> Self {
        ContextId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ContextId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ContextId {
    fn from(s: &str) -> Self {
        ContextId::new(s)
    }
}

/// Where an image came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    RealWorld,
    Online,
}

impl ImageSource {
    pub const ALL: [ImageSource; 2] = [ImageSource::RealWorld, ImageSource::Online];

    pub fn label(self) -> &'static str {
        match self {
            ImageSource::RealWorld => "Real World",
            ImageSource::Online => "Online",
        }
    }
}

impl std::str::FromStr for ImageSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real_world" => Ok(ImageSource::RealWorld),
            "online" => Ok(ImageSource::Online),
            other => Err(format!(
                "unknown image source {other:?} (expected real_world or online)"
            )),
        }
    }
}

/// One weld photograph registered in a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeldImage {
    pub id: String,
    /// Absolute path, resolved against the manifest's directory at load time.
    pub path: PathBuf,
    pub source: ImageSource,
    /// Hex SHA-256 of the image bytes, computed at load time.
    pub content_hash: String,
    /// Text written on or over the weld (physically or digitally).
    pub has_annotation_overlay: bool,
}

/// One expert verdict for an image in a context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertLabel {
    pub image_id: String,
    pub context: ContextId,
    pub acceptable: bool,
    pub rationale: String,
}

/// Positive/negative label counts for one context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    pub pos: usize,
    pub neg: usize,
}

impl ClassStats {
    /// Imbalance ratio pos/neg, undefined when there are no negatives.
    pub fn imbalance<T: Real>(&self) -> Option<T> {
        if self.neg == 0 {
            None
        } else {
            Some(T::from_count(self.pos) / T::from_count(self.neg))
        }
    }
}

/// An immutable, fully validated dataset.
///
/// Invariants established by [`load_manifest`] and preserved by the filter
/// operations: image ids unique, every label's context declared, and exactly
/// one label per (image, context) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<WeldImage>,
    labels: Vec<ExpertLabel>,
    contexts: Vec<ContextId>,
}

impl Dataset {
    pub fn images(&self) -> &[WeldImage] {
        &self.images
    }

    pub fn labels(&self) -> &[ExpertLabel] {
        &self.labels
    }

    pub fn contexts(&self) -> &[ContextId] {
        &self.contexts
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, id: &str) -> Option<&WeldImage> {
        self.images.iter().find(|img| img.id == id)
    }

    /// The unique label for (image, context), if the image exists.
    pub fn label(&self, image_id: &str, context: &ContextId) -> Option<&ExpertLabel> {
        self.labels
            .iter()
            .find(|l| l.image_id == image_id && &l.context == context)
    }

    /// Acceptability truth for one context, keyed by image id.
    pub fn label_map(&self, context: &ContextId) -> BTreeMap<String, bool> {
        self.labels
            .iter()
            .filter(|l| &l.context == context)
            .map(|l| (l.image_id.clone(), l.acceptable))
            .collect()
    }

    /// Drop every image flagged with an annotation overlay, keeping labels of
    /// the retained images. The input is untouched; the operation is
    /// idempotent.
    pub fn filter_annotated(&self) -> Dataset {
        let images: Vec<WeldImage> = self
            .images
            .iter()
            .filter(|img| !img.has_annotation_overlay)
            .cloned()
            .collect();
        let kept: BTreeSet<&str> = images.iter().map(|img| img.id.as_str()).collect();
        let labels = self
            .labels
            .iter()
            .filter(|l| kept.contains(l.image_id.as_str()))
            .cloned()
            .collect();
        Dataset {
            images,
            labels,
            contexts: self.contexts.clone(),
        }
    }

    /// Restrict to images from one source, keeping their labels.
    pub fn filter_source(&self, source: ImageSource) -> Dataset {
        let images: Vec<WeldImage> = self
            .images
            .iter()
            .filter(|img| img.source == source)
            .cloned()
            .collect();
        let kept: BTreeSet<&str> = images.iter().map(|img| img.id.as_str()).collect();
        let labels = self
            .labels
            .iter()
            .filter(|l| kept.contains(l.image_id.as_str()))
            .cloned()
            .collect();
        Dataset {
            images,
            labels,
            contexts: self.contexts.clone(),
        }
    }

    /// Positive/negative counts for one context. `pos + neg` always equals
    /// the image count because label completeness is enforced at load.
    pub fn descriptive_stats(&self, context: &ContextId) -> Result<ClassStats, DatasetError> {
        if !self.contexts.contains(context) {
            return Err(DatasetError::ContextNotInDataset(context.as_str().into()));
        }
        let pos = self
            .labels
            .iter()
            .filter(|l| &l.context == context && l.acceptable)
            .count();
        let neg = self
            .labels
            .iter()
            .filter(|l| &l.context == context && !l.acceptable)
            .count();
        Ok(ClassStats { pos, neg })
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct ManifestDoc {
    contexts: Vec<String>,
    #[serde(default)]
    images: Vec<ManifestImage>,
}

#[derive(Debug, Deserialize, Serialize)]
struct ManifestImage {
    id: String,
    path: String,
    source: ImageSource,
    #[serde(default)]
    annotation_overlay: bool,
    /// Optional pinned content hash; verified against the file when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sha256: Option<String>,
    labels: Vec<ManifestLabel>,
}

#[derive(Debug, Deserialize, Serialize)]
struct ManifestLabel {
    context: String,
    acceptable: bool,
    #[serde(default)]
    rationale: String,
}

/// Load and validate a dataset manifest.
///
/// Image paths are resolved relative to the manifest's directory. Every
/// referenced file is read and hashed; a manifest-declared `sha256` that does
/// not match the bytes fails the load. Image order follows the manifest.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let doc: ManifestDoc = serde_json::from_str(&text).map_err(|source| DatasetError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    if doc.contexts.is_empty() {
        return Err(DatasetError::NoContexts);
    }
    let mut seen_contexts = BTreeSet::new();
    for name in &doc.contexts {
        if name.is_empty() {
            return Err(DatasetError::EmptyContextName);
        }
        if !seen_contexts.insert(name.as_str()) {
            return Err(DatasetError::DuplicateContext(name.clone()));
        }
    }
    let contexts: Vec<ContextId> = doc.contexts.iter().map(ContextId::new).collect();

    let mut images = Vec::with_capacity(doc.images.len());
    let mut labels = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for entry in &doc.images {
        if !seen_ids.insert(entry.id.clone()) {
            return Err(DatasetError::DuplicateImage(entry.id.clone()));
        }
        let resolved = base.join(&entry.path);
        let bytes = fs::read(&resolved).map_err(|source| DatasetError::MissingImage {
            id: entry.id.clone(),
            path: resolved.clone(),
            source,
        })?;
        let actual = hex::encode(Sha256::digest(&bytes));
        if let Some(declared) = &entry.sha256 {
            if !declared.eq_ignore_ascii_case(&actual) {
                return Err(DatasetError::HashMismatch {
                    id: entry.id.clone(),
                    declared: declared.clone(),
                    actual,
                });
            }
        }

        let mut labeled = BTreeSet::new();
        for label in &entry.labels {
            if !seen_contexts.contains(label.context.as_str()) {
                return Err(DatasetError::UnknownContext {
                    id: entry.id.clone(),
                    context: label.context.clone(),
                });
            }
            if !labeled.insert(label.context.as_str()) {
                return Err(DatasetError::DuplicateLabel {
                    id: entry.id.clone(),
                    context: label.context.clone(),
                });
            }
        }
        // Label completeness: the pipeline evaluates every image in every
        // context, so a gap is a curation bug, not a soft default.
        for ctx in &doc.contexts {
            if !labeled.contains(ctx.as_str()) {
                return Err(DatasetError::MissingLabel {
                    id: entry.id.clone(),
                    context: ctx.clone(),
                });
            }
        }
        for label in &entry.labels {
            labels.push(ExpertLabel {
                image_id: entry.id.clone(),
                context: ContextId::new(&label.context),
                acceptable: label.acceptable,
                rationale: label.rationale.clone(),
            });
        }
        images.push(WeldImage {
            id: entry.id.clone(),
            path: resolved,
            source: entry.source,
            content_hash: actual,
            has_annotation_overlay: entry.annotation_overlay,
        });
    }

    Ok(Dataset {
        images,
        labels,
        contexts,
    })
}

/// In-memory image bytes for a dataset, keyed by image id.
///
/// Loaded once per pipeline run so prompting can attach the same bytes to
/// many conversations without rereading files.
#[derive(Debug, Clone)]
pub struct ImageStore {
    bytes: BTreeMap<String, Arc<Vec<u8>>>,
}

impl ImageStore {
    pub fn load(dataset: &Dataset) -> std::io::Result<ImageStore> {
        let mut bytes = BTreeMap::new();
        for image in dataset.images() {
            let mut file = fs::File::open(&image.path)?;
            let mut buf = Vec::new();
            file.read_to_end(&mut buf)?;
            bytes.insert(image.id.clone(), Arc::new(buf));
        }
        Ok(ImageStore { bytes })
    }

    pub fn bytes(&self, image_id: &str) -> Option<&Arc<Vec<u8>>> {
        self.bytes.get(image_id)
    }
}


#[cfg(test)]
mod tests {
    use super::test_fixtures::*;
    use super::*;
    use tempfile::TempDir;

    const CTX: [&str; 3] = ["RV & Marine", "Aeronautical", "Farming"];

    fn simple_image(id: &str, flagged: bool) -> FixtureImage {
        FixtureImage {
            id: id.into(),
            source: ImageSource::RealWorld,
            flagged,
            labels: CTX.iter().map(|c| (c.to_string(), true)).collect(),
        }
    }

    #[test]
    fn empty_manifest_keeps_declared_contexts() {
        let dir = TempDir::new().unwrap();
        let path = write_fixture(dir.path(), &CTX, &[]);
        let ds = load_manifest(&path).unwrap();
        assert!(ds.is_empty());
        assert_eq!(
            ds.contexts(),
            CTX.map(ContextId::new).as_slice(),
            "contexts preserved in manifest order"
        );
    }

    #[test]
    fn minimal_complete_manifest_loads() {
        let dir = TempDir::new().unwrap();
        let path = write_fixture(dir.path(), &CTX, &[simple_image("w-0", false)]);
        let ds = load_manifest(&path).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.labels().len(), 3);
        let img = ds.image("w-0").unwrap();
        assert_eq!(img.content_hash.len(), 64);
    }

    #[test]
    fn duplicate_label_rejected() {
        let dir = TempDir::new().unwrap();
        let mut img = simple_image("w-0", false);
        img.labels.push(("Farming".into(), false));
        let path = write_fixture(dir.path(), &CTX, &[img]);
        match load_manifest(&path) {
            Err(DatasetError::DuplicateLabel { id, context }) => {
                assert_eq!(id, "w-0");
                assert_eq!(context, "Farming");
            }
            other => panic!("expected duplicate-label error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_context_rejected() {
        let dir = TempDir::new().unwrap();
        let mut img = simple_image("w-0", false);
        img.labels.push(("Submarine".into(), true));
        let path = write_fixture(dir.path(), &CTX, &[img]);
        assert!(matches!(
            load_manifest(&path),
            Err(DatasetError::UnknownContext { .. })
        ));
    }

    #[test]
    fn missing_label_rejected() {
        let dir = TempDir::new().unwrap();
        let mut img = simple_image("w-0", false);
        img.labels.truncate(2);
        let path = write_fixture(dir.path(), &CTX, &[img]);
        match load_manifest(&path) {
            Err(DatasetError::MissingLabel { id, context }) => {
                assert_eq!(id, "w-0");
                assert_eq!(context, "Farming");
            }
            other => panic!("expected missing-label error, got {other:?}"),
        }
    }

    #[test]
    fn missing_image_file_names_the_id() {
        let dir = TempDir::new().unwrap();
        let path = write_fixture(dir.path(), &CTX, &[simple_image("w-7", false)]);
        std::fs::remove_file(dir.path().join("images/w-7.png")).unwrap();
        match load_manifest(&path) {
            Err(DatasetError::MissingImage { id, .. }) => assert_eq!(id, "w-7"),
            other => panic!("expected missing-image error, got {other:?}"),
        }
    }

    #[test]
    fn declared_hash_mismatch_rejected() {
        let dir = TempDir::new().unwrap();
        let path = write_fixture(dir.path(), &CTX, &[simple_image("w-0", false)]);
        // Rewrite the manifest with a bogus pinned hash.
        let mut doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        doc["images"][0]["sha256"] = serde_json::json!("00".repeat(32));
        std::fs::write(&path, doc.to_string()).unwrap();
        assert!(matches!(
            load_manifest(&path),
            Err(DatasetError::HashMismatch { .. })
        ));
    }

    #[test]
    fn duplicate_image_id_rejected() {
        let dir = TempDir::new().unwrap();
        let path = write_fixture(
            dir.path(),
            &CTX,
            &[simple_image("w-0", false), simple_image("w-0", false)],
        );
        assert!(matches!(
            load_manifest(&path),
            Err(DatasetError::DuplicateImage(id)) if id == "w-0"
        ));
    }

    #[test]
    fn load_preserves_manifest_order() {
        let dir = TempDir::new().unwrap();
        let images: Vec<FixtureImage> = (0..12)
            .rev()
            .map(|i| simple_image(&format!("w-{i}"), false))
            .collect();
        let path = write_fixture(dir.path(), &CTX, &images);
        let ds = load_manifest(&path).unwrap();
        let ids: Vec<&str> = ds.images().iter().map(|i| i.id.as_str()).collect();
        let expected: Vec<String> = (0..12).rev().map(|i| format!("w-{i}")).collect();
        assert_eq!(ids, expected.iter().map(String::as_str).collect::<Vec<_>>());
    }

    #[test]
    fn filter_annotated_online_counts() {
        // 73 collected online images, 15 flagged with overlays -> 58 kept.
        let dir = TempDir::new().unwrap();
        let mut images = counted_images("on", ImageSource::Online, 73, &CTX, &[35, 16, 41]);
        for img in images.iter_mut().take(15) {
            img.flagged = true;
        }
        let path = write_fixture(dir.path(), &CTX, &images);
        let ds = load_manifest(&path).unwrap();
        let filtered = ds.filter_annotated();
        assert_eq!(ds.len(), 73);
        assert_eq!(filtered.len(), 58);
        assert_eq!(filtered.labels().len(), 58 * 3);
    }

    #[test]
    fn filter_annotated_real_world_counts() {
        // 106 real-world images, 11 flagged -> 95 kept.
        let dir = TempDir::new().unwrap();
        let mut images = counted_images("rw", ImageSource::RealWorld, 106, &CTX, &[43, 12, 26]);
        for img in images.iter_mut().rev().take(11) {
            img.flagged = true;
        }
        let path = write_fixture(dir.path(), &CTX, &images);
        let filtered = load_manifest(&path).unwrap().filter_annotated();
        assert_eq!(filtered.len(), 95);
    }

    #[test]
    fn filter_annotated_is_identity_without_flags_and_idempotent() {
        let dir = TempDir::new().unwrap();
        let images = counted_images("w", ImageSource::RealWorld, 9, &CTX, &[4, 2, 7]);
        let path = write_fixture(dir.path(), &CTX, &images);
        let ds = load_manifest(&path).unwrap();
        let once = ds.filter_annotated();
        assert_eq!(once, ds, "no flagged images: identity");
        let dir2 = TempDir::new().unwrap();
        let mut flagged = counted_images("w", ImageSource::RealWorld, 9, &CTX, &[4, 2, 7]);
        flagged[3].flagged = true;
        let path2 = write_fixture(dir2.path(), &CTX, &flagged);
        let ds2 = load_manifest(&path2).unwrap();
        let once2 = ds2.filter_annotated();
        assert_eq!(once2.filter_annotated(), once2, "idempotent");
    }

    #[test]
    fn stats_match_published_ratios() {
        let dir = TempDir::new().unwrap();
        let images = counted_images("rw", ImageSource::RealWorld, 95, &CTX, &[43, 12, 26]);
        let path = write_fixture(dir.path(), &CTX, &images);
        let ds = load_manifest(&path).unwrap();

        let rv = ds.descriptive_stats(&ContextId::new(CTX[0])).unwrap();
        assert_eq!((rv.pos, rv.neg), (43, 52));
        assert_eq!(format!("{:.3}", rv.imbalance::<f64>().unwrap()), "0.827");

        let farm_online = ClassStats { pos: 41, neg: 17 };
        assert_eq!(
            format!("{:.3}", farm_online.imbalance::<f64>().unwrap()),
            "2.412"
        );
    }

    #[test]
    fn stats_cover_all_six_reference_ratios() {
        let pairs = [
            (43usize, 52usize, "0.827"),
            (12, 83, "0.145"),
            (26, 69, "0.377"),
            (35, 23, "1.522"),
            (16, 42, "0.381"),
            (41, 17, "2.412"),
        ];
        for (pos, neg, expect) in pairs {
            let stats = ClassStats { pos, neg };
            assert_eq!(format!("{:.3}", stats.imbalance::<f64>().unwrap()), expect);
        }
    }

    #[test]
    fn balanced_stats_give_unit_imbalance() {
        let stats = ClassStats { pos: 10, neg: 10 };
        assert_eq!(stats.imbalance::<f64>(), Some(1.0));
    }

    #[test]
    fn zero_negatives_give_undefined_imbalance() {
        let stats = ClassStats { pos: 5, neg: 0 };
        assert_eq!(stats.imbalance::<f64>(), None);
    }

    #[test]
    fn pos_plus_neg_equals_image_count() {
        let dir = TempDir::new().unwrap();
        let images = counted_images("w", ImageSource::Online, 17, &CTX, &[5, 0, 17]);
        let path = write_fixture(dir.path(), &CTX, &images);
        let ds = load_manifest(&path).unwrap();
        for ctx in ds.contexts().to_vec() {
            let stats = ds.descriptive_stats(&ctx).unwrap();
            assert_eq!(stats.pos + stats.neg, ds.len());
        }
    }

    #[test]
    fn stats_for_undeclared_context_error() {
        let dir = TempDir::new().unwrap();
        let path = write_fixture(dir.path(), &CTX, &[]);
        let ds = load_manifest(&path).unwrap();
        assert!(matches!(
            ds.descriptive_stats(&ContextId::new("Orbital")),
            Err(DatasetError::ContextNotInDataset(_))
        ));
    }

    #[test]
    fn filter_source_partitions_dataset() {
        let dir = TempDir::new().unwrap();
        let mut images = counted_images("rw", ImageSource::RealWorld, 4, &CTX, &[2, 1, 3]);
        images.extend(counted_images("on", ImageSource::Online, 3, &CTX, &[1, 1, 1]));
        let path = write_fixture(dir.path(), &CTX, &images);
        let ds = load_manifest(&path).unwrap();
        let rw = ds.filter_source(ImageSource::RealWorld);
        let on = ds.filter_source(ImageSource::Online);
        assert_eq!(rw.len(), 4);
        assert_eq!(on.len(), 3);
        assert_eq!(rw.labels().len() + on.labels().len(), ds.labels().len());
    }

    #[test]
    fn image_store_serves_bytes() {
        let dir = TempDir::new().unwrap();
        let path = write_fixture(dir.path(), &CTX, &[simple_image("w-0", false)]);
        let ds = load_manifest(&path).unwrap();
        let store = ImageStore::load(&ds).unwrap();
        let bytes = store.bytes("w-0").unwrap();
        assert_eq!(
            hex::encode(Sha256::digest(bytes.as_slice())),
            ds.image("w-0").unwrap().content_hash
        );
    }
}
