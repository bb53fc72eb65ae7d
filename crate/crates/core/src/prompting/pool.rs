//! Correctness-filtered reference pool.
//!
//! Built from zero-shot run results: a run's (reasoning, answer) pair is kept
//! for (image, context) only when its parsed verdict equals the expert label.
//! Unparseable runs never qualify. Images with no correct run for a context
//! simply have no entry there.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{ContextId, Dataset};

use super::{PromptingError, RunResult};

/// One stored reference: the reasoning a model produced on a run whose
/// verdict matched the expert, plus that (correct) verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub reasoning: String,
    pub answer: bool,
    pub run_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferencePool {
    entries: BTreeMap<(String, ContextId), Vec<Exemplar>>,
}

impl ReferencePool {
    /// Apply the correctness filter to a batch of run results. Results whose
    /// (image, context) has no expert label are skipped: correctness is
    /// undecidable for them.
    pub fn build(results: &[RunResult], dataset: &Dataset) -> ReferencePool {
        let mut entries: BTreeMap<(String, ContextId), Vec<Exemplar>> = BTreeMap::new();
        for result in results {
            let Some(label) = dataset.label(&result.image_id, &result.context) else {
                continue;
            };
            if result.parsed == Some(label.acceptable) {
                entries
                    .entry((result.image_id.clone(), result.context.clone()))
                    .or_default()
                    .push(Exemplar {
                        reasoning: result.reasoning.clone(),
                        answer: label.acceptable,
                        run_index: result.run_index,
                    });
            }
        }
        for exemplars in entries.values_mut() {
            exemplars.sort_by_key(|e| e.run_index);
        }
        ReferencePool { entries }
    }

    /// All correct runs for (image, context), in run order.
    pub fn exemplars(&self, image_id: &str, context: &ContextId) -> Option<&[Exemplar]> {
        self.entries
            .get(&(image_id.to_string(), context.clone()))
            .map(Vec::as_slice)
    }

    /// The exemplar shown in prompts: the earliest correct run.
    pub fn first_exemplar(&self, image_id: &str, context: &ContextId) -> Option<&Exemplar> {
        self.exemplars(image_id, context).and_then(<[_]>::first)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, ContextId), &Vec<Exemplar>)> {
        self.entries.iter()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), PromptingError> {
        let path = path.as_ref();
        let doc: Vec<PoolEntry> = self
            .entries
            .iter()
            .map(|((image_id, context), exemplars)| PoolEntry {
                image_id: image_id.clone(),
                context: context.clone(),
                exemplars: exemplars.clone(),
            })
            .collect();
        let json = serde_json::to_string_pretty(&doc).expect("pool serializes");
        fs::write(path, json).map_err(|source| PromptingError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<ReferencePool, PromptingError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| PromptingError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let doc: Vec<PoolEntry> = serde_json::from_str(&text).map_err(|source| PromptingError::Parse {
            path: path.to_path_buf(),
            line: 0,
            source,
        })?;
        let mut entries = BTreeMap::new();
        for entry in doc {
            entries.insert((entry.image_id, entry.context), entry.exemplars);
        }
        Ok(ReferencePool { entries })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PoolEntry {
    image_id: String,
    context: ContextId,
    exemplars: Vec<Exemplar>,
}
