//! Retrieval-augmented chain-of-thought strategy.
//!
//! For each query image the k most similar dataset images are retrieved once
//! (the query itself excluded) and reused across runs and contexts. Each
//! (run, context) cell shows the retrieved references that have a pool entry
//! for that context (image, stored reasoning, correct answer), collects an
//! acknowledgement, then proceeds exactly like the zero-shot exchange. Three
//! completions per cell; cells with zero usable references fall back to the
//! zero-shot shape and are flagged.

use std::sync::Arc;

use crate::dataset::{ContextId, ImageStore, WeldImage};
use crate::embedding::{EmbeddingIndex, SimilarityHit};
use crate::gateway::{tags, ChatMessage, ContentPart, Conversation, GatewayError};

use super::{parse_binary, zero_shot, ClassifyOutcome, PromptRun, ReferencePool, RunFailure, RunResult, Strategy};

struct CellError(String);

impl From<GatewayError> for CellError {
    fn from(e: GatewayError) -> Self {
        CellError(e.to_string())
    }
}

fn run_cell(
    image: &WeldImage,
    bytes: &Arc<Vec<u8>>,
    context: &ContextId,
    run_index: usize,
    neighbors: &[SimilarityHit],
    pool: &ReferencePool,
    store: &ImageStore,
    run: &PromptRun,
) -> Result<RunResult, CellError> {
    let references: Vec<(&str, &super::Exemplar)> = neighbors
        .iter()
        .filter_map(|hit| {
            pool.first_exemplar(&hit.image_id, context)
                .map(|ex| (hit.image_id.as_str(), ex))
        })
        .collect();

    if references.is_empty() {
        let mut result = zero_shot::run_cell(image, bytes, context, run_index, run)?;
        result.strategy = Strategy::WeldPrompt;
        result.fallback = true;
        return Ok(result);
    }

    let cfg = run.cfg_for_run(run_index);
    let mut conv = Conversation::new(
        ChatMessage::system(run.templates.render_system(context))
            .tagged(tags::system(context.as_str())),
    )?;

    let mut parts = vec![ContentPart::text(
        run.templates.render_preamble(context, references.len()),
    )];
    for (i, (ref_id, exemplar)) in references.iter().enumerate() {
        let ref_bytes = store
            .bytes(ref_id)
            .ok_or_else(|| CellError(format!("no bytes loaded for reference image {ref_id:?}")))?;
        parts.push(ContentPart::image(ref_bytes.clone()));
        parts.push(ContentPart::text(run.templates.render_exemplar(
            i + 1,
            &exemplar.reasoning,
            exemplar.answer,
        )));
    }
    parts.push(ContentPart::text(run.templates.render_request()));
    conv.push(ChatMessage::user(parts).tagged(tags::COT_PREAMBLE))?;

    let ack = run.gateway.complete(&conv, &cfg)?;
    conv.push(ChatMessage::assistant(ack))?;
    conv.push(
        ChatMessage::user(vec![
            ContentPart::text(run.templates.render_reasoning(context)),
            ContentPart::image(bytes.clone()),
        ])
        .tagged(tags::reasoning(&image.id)),
    )?;
    let reasoning = run.gateway.complete(&conv, &cfg)?;
    conv.push(ChatMessage::assistant(reasoning.clone()))?;
    conv.push(ChatMessage::user_text(run.templates.render_binary(context)).tagged(tags::BINARY))?;
    let raw = run.gateway.complete(&conv, &cfg)?;

    Ok(RunResult {
        image_id: image.id.clone(),
        context: context.clone(),
        run_index,
        strategy: Strategy::WeldPrompt,
        reasoning,
        parsed: parse_binary(&raw),
        raw_binary_text: raw,
        fallback: false,
    })
}

/// Classify one image in every context across all runs, grounding each cell
/// in retrieved references. Retrieval happens once per image.
#[allow(clippy::too_many_arguments)]
pub fn weldprompt_classify(
    image: &WeldImage,
    bytes: &Arc<Vec<u8>>,
    contexts: &[ContextId],
    pool: &ReferencePool,
    index: &EmbeddingIndex,
    store: &ImageStore,
    k: usize,
    run: &PromptRun,
) -> ClassifyOutcome {
    let mut outcome = ClassifyOutcome::default();
    let neighbors = match index.neighbors_of(&image.id, k) {
        Ok(neighbors) => neighbors,
        Err(e) => {
            for run_index in 0..run.runs {
                for context in contexts {
                    outcome.failures.push(RunFailure {
                        image_id: image.id.clone(),
                        context: context.clone(),
                        run_index,
                        error: format!("retrieval failed: {e}"),
                    });
                }
            }
            return outcome;
        }
    };
    for run_index in 0..run.runs {
        for context in contexts {
            match run_cell(image, bytes, context, run_index, &neighbors, pool, store, run) {
                Ok(result) => outcome.results.push(result),
                Err(CellError(error)) => outcome.failures.push(RunFailure {
                    image_id: image.id.clone(),
                    context: context.clone(),
                    run_index,
                    error,
                }),
            }
        }
    }
    outcome
}
