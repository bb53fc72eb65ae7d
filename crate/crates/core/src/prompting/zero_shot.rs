//! Zero-shot strategy: for every run and context, ask for reasoning about the
//! query image, then ask for the verdict with that reasoning still in
//! context. Two completions per (run, context); contexts never share
//! messages.

use std::sync::Arc;

use crate::dataset::{ContextId, WeldImage};
use crate::gateway::{tags, ChatMessage, ContentPart, Conversation, GatewayError};

use super::{parse_binary, ClassifyOutcome, PromptRun, RunFailure, RunResult, Strategy};

pub(super) fn run_cell(
    image: &WeldImage,
    bytes: &Arc<Vec<u8>>,
    context: &ContextId,
    run_index: usize,
    run: &PromptRun,
) -> Result<RunResult, GatewayError> {
    let cfg = run.cfg_for_run(run_index);
    let mut conv = Conversation::new(
        ChatMessage::system(run.templates.render_system(context))
            .tagged(tags::system(context.as_str())),
    )?;
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
        strategy: Strategy::ZeroShot,
        reasoning,
        parsed: parse_binary(&raw),
        raw_binary_text: raw,
        fallback: false,
    })
}

/// Classify one image in every context across all runs. Gateway failures are
/// collected per cell; surviving cells keep their results.
pub fn zero_shot_classify(
    image: &WeldImage,
    bytes: &Arc<Vec<u8>>,
    contexts: &[ContextId],
    run: &PromptRun,
) -> ClassifyOutcome {
    let mut outcome = ClassifyOutcome::default();
    for run_index in 0..run.runs {
        for context in contexts {
            match run_cell(image, bytes, context, run_index, run) {
                Ok(result) => outcome.results.push(result),
                Err(error) => outcome.failures.push(RunFailure {
                    image_id: image.id.clone(),
                    context: context.clone(),
                    run_index,
                    error: error.to_string(),
                }),
            }
        }
    }
    outcome
}
