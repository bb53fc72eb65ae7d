//! Shared wiring between subcommands: dataset loading with the standard
//! filters, gateway and embedder construction, template loading, and the
//! bounded worker pool.

use std::path::Path;
use std::sync::Arc;

use weldeval_core::dataset::{load_manifest, Dataset, ImageSource, ImageStore};
use weldeval_core::embedding::{Embedder, HashEmbedder, RemoteEmbedder};
use weldeval_core::gateway::mock::{MockBackend, ScriptedOracle};
use weldeval_core::gateway::{Backend, CompletionCache, Gateway, HttpBackend};
use weldeval_core::prompting::PromptTemplates;

use crate::config::{EmbeddingBackend, ModelBackend, PipelineConfig};
use crate::CliError;

pub struct LoadedDataset {
    pub dataset: Dataset,
    pub store: ImageStore,
    /// Images dropped by the annotation-overlay filter.
    pub excluded_flagged: usize,
}

/// Load the dataset manifest and apply the standard filters: images with
/// annotation overlays are always excluded, then the optional source filter.
pub fn load_dataset(
    config: &PipelineConfig,
    source: Option<ImageSource>,
) -> Result<LoadedDataset, CliError> {
    let full = load_manifest(&config.dataset.manifest)
        .map_err(|e| CliError::Config(format!("dataset: {e}")))?;
    check_contexts(config, &full)?;
    let annotated = full.filter_annotated();
    let excluded_flagged = full.len() - annotated.len();
    let dataset = match source {
        Some(source) => annotated.filter_source(source),
        None => annotated,
    };
    let store = ImageStore::load(&dataset)
        .map_err(|e| CliError::Config(format!("cannot read image bytes: {e}")))?;
    Ok(LoadedDataset {
        dataset,
        store,
        excluded_flagged,
    })
}

fn check_contexts(config: &PipelineConfig, dataset: &Dataset) -> Result<(), CliError> {
    if config.dataset.contexts.is_empty() {
        return Ok(());
    }
    let mut expected = config.dataset.contexts.clone();
    expected.sort();
    let mut declared: Vec<String> = dataset
        .contexts()
        .iter()
        .map(|c| c.as_str().to_string())
        .collect();
    declared.sort();
    if expected != declared {
        return Err(CliError::Config(format!(
            "dataset declares contexts {declared:?} but the config expects {expected:?}"
        )));
    }
    Ok(())
}

/// Build the completion gateway: the configured backend behind the on-disk
/// cache. The mock backend answers deterministically from image content,
/// which keeps full-pipeline runs reproducible without a model server.
pub fn build_gateway(config: &PipelineConfig) -> Result<Gateway, CliError> {
    let cache = CompletionCache::open(&config.run.cache_dir)
        .map_err(|e| CliError::Config(format!("cache: {e}")))?;
    let backend: Arc<dyn Backend> = match config.model.backend {
        ModelBackend::Mock => Arc::new(MockBackend::new(ScriptedOracle::hash_parity())),
        ModelBackend::Http => {
            let api_key = match &config.model.api_key_env {
                Some(var) => Some(std::env::var(var).map_err(|_| {
                    CliError::Config(format!("environment variable {var} is not set"))
                })?),
                None => None,
            };
            Arc::new(HttpBackend::new(api_key).map_err(|e| CliError::Config(e.to_string()))?)
        }
    };
    Ok(Gateway::new(backend, Some(cache)))
}

pub fn load_templates(config: &PipelineConfig) -> Result<PromptTemplates, CliError> {
    let templates = match &config.prompts.file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("prompts.file {}: {e}", path.display()))
            })?;
            toml::from_str(&text).map_err(|e| {
                CliError::Config(format!("prompts.file {}: {e}", path.display()))
            })?
        }
        None => PromptTemplates::default(),
    };
    Ok(templates)
}

/// Embedder used by the embed stage to compute vectors.
pub fn build_embedder(config: &PipelineConfig) -> Result<Box<dyn Embedder>, CliError> {
    match config.embedding.backend {
        EmbeddingBackend::Hash => Ok(Box::new(HashEmbedder::new(config.embedding.dim))),
        EmbeddingBackend::Remote => {
            let embedder = RemoteEmbedder::new(
                config.embedding.endpoint.clone(),
                config.embedding.dim,
                std::time::Duration::from_secs(config.model.timeout_secs),
            )
            .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Box::new(embedder))
        }
        EmbeddingBackend::Precomputed => Err(CliError::Config(
            "embedding.backend = \"precomputed\" reads an existing file; there is nothing to embed"
                .into(),
        )),
    }
}

pub fn worker_pool(parallelism: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))
}

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", path.display())))
}
