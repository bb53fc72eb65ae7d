//! Pipeline configuration: one TOML file describing the dataset, the model
//! endpoint, the embedding backend, and the run parameters. Relative paths
//! are resolved against the config file's directory so a config can be
//! invoked from anywhere.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use weldeval_core::dataset::ImageSource;
use weldeval_core::gateway::ModelConfig;
use weldeval_core::prompting::Strategy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelBackend {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingBackend {
    #[default]
    Hash,
    Remote,
    Precomputed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub manifest: PathBuf,
    /// Expected context names; empty means "whatever the manifest declares".
    /// When set, the manifest must declare exactly this set.
    #[serde(default)]
    pub contexts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub backend: ModelBackend,
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Name of the environment variable holding the API key (http backend).
    pub api_key_env: Option<String>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let base = ModelConfig::default();
        ModelSection {
            backend: ModelBackend::Mock,
            endpoint: String::new(),
            model_name: base.model_name,
            temperature: base.temperature,
            max_tokens: base.max_tokens,
            timeout_secs: base.timeout.as_secs(),
            max_retries: base.max_retries,
            api_key_env: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSection {
    pub backend: EmbeddingBackend,
    pub dim: usize,
    pub endpoint: String,
    /// Embeddings artifact location; defaults to
    /// `{output_dir}/embeddings{source suffix}.jsonl`.
    pub file: Option<PathBuf>,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            backend: EmbeddingBackend::Hash,
            dim: 768,
            endpoint: String::new(),
            file: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptSection {
    /// Optional TOML file overriding the built-in prompt templates.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Prompting runs per (image, context); run r uses seed_base + r.
    pub runs: usize,
    /// Retrieval width for reference selection.
    pub k: usize,
    pub seed_base: u64,
    /// Worker threads for image-level parallelism.
    pub parallelism: usize,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            runs: 3,
            k: 5,
            seed_base: 0,
            parallelism: 4,
            cache_dir: PathBuf::from("cache"),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub prompts: PromptSection,
    #[serde(default)]
    pub run: RunSection,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        let mut config: PipelineConfig =
            toml::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.into(),
                source,
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.dataset.manifest);
        resolve(&mut self.run.cache_dir);
        resolve(&mut self.run.output_dir);
        if let Some(file) = self.prompts.file.as_mut() {
            resolve(file);
        }
        if let Some(file) = self.embedding.file.as_mut() {
            resolve(file);
        }
    }

    /// Static constraint checks; each violation is one itemized line.
    pub fn constraint_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.run.runs < 1 {
            errors.push("run.runs must be at least 1".into());
        }
        if self.run.k < 1 {
            errors.push("run.k must be at least 1".into());
        }
        if self.run.parallelism < 1 {
            errors.push("run.parallelism must be at least 1".into());
        }
        if !self.dataset.manifest.is_file() {
            errors.push(format!(
                "dataset.manifest not found: {}",
                self.dataset.manifest.display()
            ));
        }
        if let Some(file) = &self.prompts.file {
            if !file.is_file() {
                errors.push(format!("prompts.file not found: {}", file.display()));
            }
        }
        if !(self.model.temperature.is_finite() && self.model.temperature >= 0.0) {
            errors.push("model.temperature must be a finite non-negative number".into());
        }
        if self.model.backend == ModelBackend::Http {
            if !self.model.endpoint.starts_with("http") {
                errors.push("model.endpoint must be an http(s) URL for the http backend".into());
            }
            if let Some(var) = &self.model.api_key_env {
                if std::env::var(var).is_err() {
                    errors.push(format!(
                        "model.api_key_env names {var}, which is not set in the environment"
                    ));
                }
            }
        }
        if self.embedding.dim < 1 {
            errors.push("embedding.dim must be at least 1".into());
        }
        if self.embedding.backend == EmbeddingBackend::Remote
            && !self.embedding.endpoint.starts_with("http")
        {
            errors.push("embedding.endpoint must be an http(s) URL for the remote backend".into());
        }
        if self.embedding.backend == EmbeddingBackend::Precomputed {
            match &self.embedding.file {
                None => errors.push(
                    "embedding.file is required for the precomputed backend".into(),
                ),
                Some(file) if !file.is_file() => {
                    errors.push(format!("embedding.file not found: {}", file.display()))
                }
                Some(_) => {}
            }
        }
        errors
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            endpoint: self.model.endpoint.clone(),
            model_name: self.model.model_name.clone(),
            temperature: self.model.temperature,
            seed: self.run.seed_base,
            max_tokens: self.model.max_tokens,
            timeout: Duration::from_secs(self.model.timeout_secs),
            max_retries: self.model.max_retries,
        }
    }
}

/// Artifact locations for one (output dir, source filter) combination.
/// The source suffix keeps per-source runs side by side.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    output_dir: PathBuf,
    suffix: &'static str,
}

pub fn source_suffix(source: Option<ImageSource>) -> &'static str {
    match source {
        None => "",
        Some(ImageSource::RealWorld) => ".real_world",
        Some(ImageSource::Online) => ".online",
    }
}

/// The machine name used in manifests and flags (matches the dataset
/// manifest's `source` values).
pub fn source_name(source: ImageSource) -> &'static str {
    match source {
        ImageSource::RealWorld => "real_world",
        ImageSource::Online => "online",
    }
}

impl ArtifactPaths {
    pub fn new(config: &PipelineConfig, source: Option<ImageSource>, output_override: Option<&Path>) -> Self {
        ArtifactPaths {
            output_dir: output_override
                .map(Path::to_path_buf)
                .unwrap_or_else(|| config.run.output_dir.clone()),
            suffix: source_suffix(source),
        }
    }

    pub fn output_dir(&self) -> &Path {
        &self.output_dir
    }

    /// The embeddings artifact: an explicit `embedding.file` wins, otherwise
    /// the default name inside the output directory.
    pub fn embeddings(&self, config: &PipelineConfig) -> PathBuf {
        config.embedding.file.clone().unwrap_or_else(|| {
            self.output_dir
                .join(format!("embeddings{}.jsonl", self.suffix))
        })
    }

    pub fn results(&self, strategy: Strategy) -> PathBuf {
        self.output_dir
            .join(format!("results-{}{}.jsonl", strategy.label(), self.suffix))
    }

    pub fn pool(&self) -> PathBuf {
        self.output_dir.join(format!("pool{}.json", self.suffix))
    }

    pub fn metrics_json(&self, strategy: Strategy) -> PathBuf {
        self.output_dir
            .join(format!("metrics-{}{}.json", strategy.label(), self.suffix))
    }

    pub fn metrics_text(&self, strategy: Strategy) -> PathBuf {
        self.output_dir
            .join(format!("metrics-{}{}.txt", strategy.label(), self.suffix))
    }

    pub fn run_manifest(&self, strategy: Strategy) -> PathBuf {
        self.output_dir.join(format!(
            "run-manifest-{}{}.json",
            strategy.label(),
            self.suffix
        ))
    }
}
