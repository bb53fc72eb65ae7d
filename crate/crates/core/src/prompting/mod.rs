//! Prompting strategies over the gateway: zero-shot classification, the
//! correctness-filtered reference pool, and retrieval-augmented
//! chain-of-thought classification, plus the run-results artifact they emit.

mod pool;
mod templates;
mod weldprompt;
mod zero_shot;

pub use pool::{Exemplar, ReferencePool};
pub use templates::PromptTemplates;
pub use weldprompt::weldprompt_classify;
pub use zero_shot::zero_shot_classify;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ContextId;
use crate::gateway::{Gateway, ModelConfig};

#[derive(Debug, Error)]
pub enum PromptingError {
    #[error("template {name:?} renders empty text for context {context:?}")]
    EmptyTemplate { name: &'static str, context: String },
    #[error("results file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("results file {path}, line {line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Which conversation recipe produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ZeroShot,
    WeldPrompt,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::ZeroShot => "zero-shot",
            Strategy::WeldPrompt => "weldprompt",
        }
    }
}

/// Outcome of one (image, context, run) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub image_id: String,
    pub context: ContextId,
    pub run_index: usize,
    pub strategy: Strategy,
    /// Free-text assessment from the reasoning turn.
    pub reasoning: String,
    /// Verbatim reply to the binary prompt.
    pub raw_binary_text: String,
    /// Parsed verdict; `None` when no verdict token was found.
    pub parsed: Option<bool>,
    /// True when a retrieval-augmented cell degraded to the zero-shot shape.
    pub fallback: bool,
}

/// A cell the gateway could not complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub image_id: String,
    pub context: ContextId,
    pub run_index: usize,
    pub error: String,
}

/// Results plus per-cell failures for one image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassifyOutcome {
    pub results: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
}

impl ClassifyOutcome {
    pub fn merge(&mut self, other: ClassifyOutcome) {
        self.results.extend(other.results);
        self.failures.extend(other.failures);
    }
}

/// Shared knobs for a classification session. Run r executes with seed
/// `seed_base + r`, identically for every image and context.
pub struct PromptRun<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a PromptTemplates,
    pub base_cfg: &'a ModelConfig,
    pub seed_base: u64,
    pub runs: usize,
}

impl PromptRun<'_> {
    pub(crate) fn cfg_for_run(&self, run_index: usize) -> ModelConfig {
        let mut cfg = self.base_cfg.clone();
        cfg.seed = self.seed_base + run_index as u64;
        cfg
    }
}

/// Extract a yes/no verdict from a model reply.
///
/// The reply is lowercased and whitespace-normalized, then scanned for the
/// earliest word-bounded verdict token; negation phrases outrank bare tokens
/// at the same position. No token at all means unparseable (`None`).
pub fn parse_binary(raw: &str) -> Option<bool> {
    // Longest-first so overlapping candidates at one position resolve to the
    // negation ("not acceptable" before "no").
    const PATTERNS: [(&str, bool); 5] = [
        ("not acceptable", false),
        ("unacceptable", false),
        ("acceptable", true),
        ("yes", true),
        ("no", false),
    ];
    let lowered = raw.to_lowercase();
    let normalized: String = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let bytes = normalized.as_bytes();
    let is_word = |i: usize| i < bytes.len() && (bytes[i].is_ascii_alphanumeric());

    let mut best: Option<(usize, usize, bool)> = None; // (position, pattern rank, verdict)
    for (rank, (pattern, verdict)) in PATTERNS.iter().enumerate() {
        let mut from = 0;
        while let Some(offset) = normalized[from..].find(pattern) {
            let start = from + offset;
            let end = start + pattern.len();
            let bounded = (start == 0 || !is_word(start - 1)) && !is_word(end);
            if bounded {
                if best.is_none_or(|(p, r, _)| start < p || (start == p && rank < r)) {
                    best = Some((start, rank, *verdict));
                }
                break;
            }
            from = start + 1;
        }
    }
    best.map(|(_, _, verdict)| verdict)
}

/// Write run results as JSON lines in the given order. Content is fully
/// deterministic: identical results produce byte-identical files.
pub fn write_run_results(path: impl AsRef<Path>, results: &[RunResult]) -> Result<(), PromptingError> {
    let path = path.as_ref();
    let io_err = |source| PromptingError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    for result in results {
        let line = serde_json::to_string(result).expect("result serializes");
        writeln!(file, "{line}").map_err(io_err)?;
    }
    Ok(())
}

pub fn read_run_results(path: impl AsRef<Path>) -> Result<Vec<RunResult>, PromptingError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| PromptingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut results = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let result = serde_json::from_str(line).map_err(|source| PromptingError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        results.push(result);
    }
    Ok(results)
}
