use std::path::Path;

use weldeval_core::dataset::ImageSource;
use weldeval_core::embedding::{write_embeddings, EmbeddingRecord};

use crate::config::{ArtifactPaths, PipelineConfig};
use crate::stages::{build_embedder, ensure_dir, load_dataset};
use crate::CliError;

/// Compute one embedding per distinct image content and write the
/// embeddings artifact consumed by retrieval runs. Identical image bytes
/// share one record (they would embed identically anyway).
pub fn cmd_embed(
    config_path: &Path,
    source: Option<ImageSource>,
    output_override: Option<&Path>,
) -> Result<(), CliError> {
    let config = PipelineConfig::load(config_path)?;
    let issues = config.constraint_errors();
    if !issues.is_empty() {
        return Err(CliError::Config(issues.join("; ")));
    }
    let loaded = load_dataset(&config, source)?;
    let embedder = build_embedder(&config)?;
    let paths = ArtifactPaths::new(&config, source, output_override);
    let target = paths.embeddings(&config);
    if let Some(parent) = target.parent() {
        ensure_dir(parent)?;
    }

    let mut records: Vec<EmbeddingRecord> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut failures = Vec::new();
    for image in loaded.dataset.images() {
        if !seen.insert(image.content_hash.clone()) {
            continue;
        }
        let bytes = loaded
            .store
            .bytes(&image.id)
            .expect("store covers the loaded dataset");
        match embedder.embed(image, bytes) {
            Ok(values) => records.push(EmbeddingRecord {
                content_hash: image.content_hash.clone(),
                dim: values.len(),
                values,
            }),
            Err(e) => failures.push(format!("{}: {e}", image.id)),
        }
    }
    write_embeddings(&target, &records).map_err(|e| CliError::Config(e.to_string()))?;
    println!(
        "embedded {} image(s) ({} distinct) -> {}",
        loaded.dataset.len(),
        records.len(),
        target.display()
    );
    if failures.is_empty() {
        Ok(())
    } else {
        for failure in &failures {
            eprintln!("error: {failure}");
        }
        Err(CliError::Items(format!(
            "{} image(s) failed to embed",
            failures.len()
        )))
    }
}
