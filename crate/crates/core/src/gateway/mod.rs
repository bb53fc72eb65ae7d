//! Multimodal chat gateway: conversation types, a completion cache, an HTTP
//! backend speaking the chat-completions wire format, and a mock backend
//! driven by deterministic oracles.
//!
//! The [`Gateway`] front door consults the cache before the backend, so a
//! finished run can be re-evaluated without touching the network.

mod cache;
mod http;
pub mod mock;

pub use cache::CompletionCache;
pub use http::HttpBackend;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid conversation: {0}")]
    InvalidConversation(String),
    #[error("transport failure after {attempts} attempt(s): {source}")]
    Transport {
        attempts: u32,
        #[source]
        source: reqwest::Error,
    },
    #[error("endpoint returned HTTP {status} after {attempts} attempt(s): {body}")]
    Status {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("endpoint reply malformed: {0}")]
    Protocol(String),
    #[error("endpoint returned an empty reply")]
    EmptyReply,
    #[error("completion cache: {0}")]
    Cache(String),
    #[error("mock oracle undefined for this conversation: {0}")]
    OracleUndefined(String),
}

/// Message tags used by the prompting layer. Tags are local metadata (never
/// serialized to the wire or folded into cache keys); the mock backend uses
/// them to recognize what a conversation is asking for.
pub mod tags {
    /// System message carrying the application context.
    pub fn system(context: &str) -> String {
        format!("context:{context}")
    }

    /// Chain-of-thought preamble turn (exemplars, expects acknowledgement).
    pub const COT_PREAMBLE: &str = "cot-preamble";

    /// Reasoning request turn carrying the query image.
    pub fn reasoning(image_id: &str) -> String {
        format!("reasoning-request:{image_id}")
    }

    /// Binary verdict request turn.
    pub const BINARY: &str = "binary-request";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn wire_name(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// One piece of message content: text, or an image delivered inline.
#[derive(Clone, PartialEq)]
pub enum ContentPart {
    Text(String),
    Image {
        bytes: Arc<Vec<u8>>,
        media_type: &'static str,
        sha256: String,
    },
}

impl ContentPart {
    pub fn text(text: impl Into<String>) -> Self {
        ContentPart::Text(text.into())
    }

    /// Wrap image bytes, hashing them and sniffing the media type from the
    /// leading magic bytes (PNG assumed when unrecognized).
    pub fn image(bytes: Arc<Vec<u8>>) -> Self {
        let sha256 = hex::encode(Sha256::digest(bytes.as_slice()));
        let media_type = sniff_media_type(&bytes);
        ContentPart::Image {
            bytes,
            media_type,
            sha256,
        }
    }
}

impl std::fmt::Debug for ContentPart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ContentPart::Text(t) => f.debug_tuple("Text").field(t).finish(),
            ContentPart::Image {
                bytes,
                media_type,
                sha256,
            } => f
                .debug_struct("Image")
                .field("len", &bytes.len())
                .field("media_type", media_type)
                .field("sha256", &&sha256[..12.min(sha256.len())])
                .finish(),
        }
    }
}

fn sniff_media_type(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        "image/png"
    } else if bytes.starts_with(&[0xff, 0xd8, 0xff]) {
        "image/jpeg"
    } else if bytes.starts_with(b"GIF8") {
        "image/gif"
    } else if bytes.len() >= 12 && &bytes[0..4] == b"RIFF" && &bytes[8..12] == b"WEBP" {
        "image/webp"
    } else {
        "image/png"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<ContentPart>,
    /// Local routing metadata; see [`tags`]. Not part of the wire format.
    pub tag: Option<String>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            parts: vec![ContentPart::text(text)],
            tag: None,
        }
    }

    pub fn user(parts: Vec<ContentPart>) -> Self {
        ChatMessage {
            role: Role::User,
            parts,
            tag: None,
        }
    }

    pub fn user_text(text: impl Into<String>) -> Self {
        ChatMessage::user(vec![ContentPart::text(text)])
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            parts: vec![ContentPart::text(text)],
            tag: None,
        }
    }

    pub fn tagged(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    /// All text parts concatenated with newlines.
    pub fn text_content(&self) -> String {
        let texts: Vec<&str> = self
            .parts
            .iter()
            .filter_map(|p| match p {
                ContentPart::Text(t) => Some(t.as_str()),
                ContentPart::Image { .. } => None,
            })
            .collect();
        texts.join("\n")
    }

    pub fn first_image_sha(&self) -> Option<&str> {
        self.parts.iter().find_map(|p| match p {
            ContentPart::Image { sha256, .. } => Some(sha256.as_str()),
            ContentPart::Text(_) => None,
        })
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if self.parts.is_empty() {
            return Err(GatewayError::InvalidConversation(
                "message has no content parts".into(),
            ));
        }
        if self.role != Role::User && self.parts.iter().any(|p| matches!(p, ContentPart::Image { .. })) {
            return Err(GatewayError::InvalidConversation(format!(
                "image part in a {} message",
                self.role.wire_name()
            )));
        }
        Ok(())
    }
}

/// An ordered multimodal exchange. Always starts with a system message;
/// assistant turns never repeat back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    messages: Vec<ChatMessage>,
}

impl Conversation {
    pub fn new(system: ChatMessage) -> Result<Self, GatewayError> {
        if system.role != Role::System {
            return Err(GatewayError::InvalidConversation(
                "conversation must open with a system message".into(),
            ));
        }
        system.validate()?;
        Ok(Conversation {
            messages: vec![system],
        })
    }

    pub fn push(&mut self, message: ChatMessage) -> Result<(), GatewayError> {
        message.validate()?;
        let last = self.messages.last().expect("never empty");
        if message.role == Role::System {
            return Err(GatewayError::InvalidConversation(
                "system message after the opening turn".into(),
            ));
        }
        if message.role == Role::Assistant && last.role == Role::Assistant {
            return Err(GatewayError::InvalidConversation(
                "two consecutive assistant messages".into(),
            ));
        }
        self.messages.push(message);
        Ok(())
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn last_user_tag(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .and_then(|m| m.tag.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub seed: u64,
    pub max_tokens: u32,
    pub timeout: Duration,
    pub max_retries: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            endpoint: String::new(),
            model_name: "mock".into(),
            temperature: 1.0,
            seed: 0,
            max_tokens: 1024,
            timeout: Duration::from_secs(120),
            max_retries: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// One cached completion. `stored_at_unix` records when the reply was
/// obtained; it never feeds back into any computation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CompletionRecord {
    pub cache_key: String,
    pub text: String,
    pub stored_at_unix: u64,
    pub token_usage: Option<TokenUsage>,
}

/// Digest identifying a completion request: model name, seed, temperature,
/// and the conversation content. Image parts contribute their content hash,
/// so the key is stable across re-reads of the same file. Tags are excluded.
pub fn cache_key(conv: &Conversation, cfg: &ModelConfig) -> String {
    let mut h = Sha256::new();
    let field = |h: &mut Sha256, bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    h.update(b"weldeval-completion-v1");
    field(&mut h, cfg.model_name.as_bytes());
    h.update(cfg.seed.to_le_bytes());
    h.update(cfg.temperature.to_bits().to_le_bytes());
    h.update((conv.messages.len() as u64).to_le_bytes());
    for msg in &conv.messages {
        h.update([match msg.role {
            Role::System => 0u8,
            Role::User => 1,
            Role::Assistant => 2,
        }]);
        h.update((msg.parts.len() as u64).to_le_bytes());
        for part in &msg.parts {
            match part {
                ContentPart::Text(t) => {
                    h.update([0u8]);
                    field(&mut h, t.as_bytes());
                }
                ContentPart::Image { sha256, .. } => {
                    h.update([1u8]);
                    field(&mut h, sha256.as_bytes());
                }
            }
        }
    }
    hex::encode(h.finalize())
}

/// What a backend hands back for one completion.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub token_usage: Option<TokenUsage>,
}

/// A completion provider: the HTTP client or a test double.
pub trait Backend: Send + Sync {
    fn complete(&self, conv: &Conversation, cfg: &ModelConfig) -> Result<BackendReply, GatewayError>;
}

/// Cache-fronted completion entry point.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    cache: Option<CompletionCache>,
    issued: AtomicUsize,
    served: AtomicUsize,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, cache: Option<CompletionCache>) -> Self {
        Gateway {
            backend,
            cache,
            issued: AtomicUsize::new(0),
            served: AtomicUsize::new(0),
        }
    }

    /// Completions answered by the backend (cache misses).
    pub fn completions_issued(&self) -> usize {
        self.issued.load(Ordering::SeqCst)
    }

    /// Completions answered in total, hits included.
    pub fn completions_served(&self) -> usize {
        self.served.load(Ordering::SeqCst)
    }

    pub fn complete(&self, conv: &Conversation, cfg: &ModelConfig) -> Result<String, GatewayError> {
        let key = cache_key(conv, cfg);
        if let Some(cache) = &self.cache {
            if let Some(record) = cache.lookup(&key)? {
                self.served.fetch_add(1, Ordering::SeqCst);
                return Ok(record.text);
            }
        }
        let reply = self.backend.complete(conv, cfg)?;
        if reply.text.is_empty() {
            return Err(GatewayError::EmptyReply);
        }
        if let Some(cache) = &self.cache {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            cache.store(&CompletionRecord {
                cache_key: key,
                text: reply.text.clone(),
                stored_at_unix: now,
                token_usage: reply.token_usage,
            })?;
        }
        self.issued.fetch_add(1, Ordering::SeqCst);
        self.served.fetch_add(1, Ordering::SeqCst);
        Ok(reply.text)
    }
}
