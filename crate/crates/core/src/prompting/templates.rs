//! Prompt template set with context placeholders.
//!
//! Templates are plain strings with `{context}` (and, where noted, `{count}`,
//! `{index}`, `{reasoning}`, `{answer}`) placeholders. Defaults follow the
//! conversation structure the strategies expect; deployments can override any
//! subset from a TOML file.

use serde::{Deserialize, Serialize};

use crate::dataset::ContextId;

use super::PromptingError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    /// System message; `{context}`.
    pub system: String,
    /// Reasoning request accompanying the query image; `{context}`.
    pub reasoning_prompt: String,
    /// Yes/no verdict request; `{context}`.
    pub binary_prompt: String,
    /// Chain-of-thought preamble opener; `{context}`, `{count}`.
    pub cot_preamble: String,
    /// Per-exemplar block, rendered after each reference image;
    /// `{index}`, `{reasoning}`, `{answer}`.
    pub cot_exemplar: String,
    /// Preamble closer asking the model to acknowledge the references.
    pub cot_request: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            system: "You are an expert weld inspector. Welds are judged relative to their \
                     application; assess every weld for use in the {context} industry only."
                .into(),
            reasoning_prompt: "Examine the weld in this image. Describe the characteristics \
                               that determine whether it is acceptable for {context} \
                               applications."
                .into(),
            binary_prompt: "Based on your assessment, is this weld acceptable for {context} \
                            applications? Answer yes or no."
                .into(),
            cot_preamble: "Here are {count} reference welds previously assessed for {context} \
                           applications. Each reference shows the weld image, the written \
                           assessment, and the verdict that matched an expert inspector."
                .into(),
            cot_exemplar: "Reference {index}:\nAssessment: {reasoning}\nAnswer: {answer}".into(),
            cot_request: "Review these references and acknowledge them before we continue.".into(),
        }
    }
}

fn answer_word(acceptable: bool) -> &'static str {
    if acceptable {
        "yes"
    } else {
        "no"
    }
}

impl PromptTemplates {
    pub fn render_system(&self, context: &ContextId) -> String {
        self.system.replace("{context}", context.as_str())
    }

    pub fn render_reasoning(&self, context: &ContextId) -> String {
        self.reasoning_prompt.replace("{context}", context.as_str())
    }

    pub fn render_binary(&self, context: &ContextId) -> String {
        self.binary_prompt.replace("{context}", context.as_str())
    }

    pub fn render_preamble(&self, context: &ContextId, count: usize) -> String {
        self.cot_preamble
            .replace("{context}", context.as_str())
            .replace("{count}", &count.to_string())
    }

    pub fn render_exemplar(&self, index: usize, reasoning: &str, acceptable: bool) -> String {
        self.cot_exemplar
            .replace("{index}", &index.to_string())
            .replace("{reasoning}", reasoning)
            .replace("{answer}", answer_word(acceptable))
    }

    pub fn render_request(&self) -> String {
        self.cot_request.clone()
    }

    /// Every template must render non-empty text for every context.
    pub fn validate(&self, contexts: &[ContextId]) -> Result<(), PromptingError> {
        for context in contexts {
            let rendered: [(&'static str, String); 6] = [
                ("system", self.render_system(context)),
                ("reasoning_prompt", self.render_reasoning(context)),
                ("binary_prompt", self.render_binary(context)),
                ("cot_preamble", self.render_preamble(context, 5)),
                ("cot_exemplar", self.render_exemplar(1, "r", true)),
                ("cot_request", self.render_request()),
            ];
            for (name, text) in rendered {
                if text.trim().is_empty() {
                    return Err(PromptingError::EmptyTemplate {
                        name,
                        context: context.as_str().into(),
                    });
                }
            }
        }
        Ok(())
    }
}
