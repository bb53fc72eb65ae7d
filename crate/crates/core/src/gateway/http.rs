//! Chat-completions HTTP client. One wire format covers hosted and locally
//! served models: messages with inline base64 images, first choice's message
//! text back out. Transient failures (transport, 429, 5xx) retry with
//! exponential backoff and jitter.

use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::Deserialize;

use super::{
    Backend, BackendReply, ChatMessage, ContentPart, Conversation, GatewayError, ModelConfig,
    Role, TokenUsage,
};

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    base_delay: Duration,
}

impl HttpBackend {
    pub fn new(api_key: Option<String>) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| GatewayError::Protocol(format!("http client: {e}")))?;
        Ok(HttpBackend {
            client,
            api_key,
            base_delay: Duration::from_millis(250),
        })
    }

    /// Shrink the backoff base (tests).
    pub fn with_base_delay(mut self, base_delay: Duration) -> Self {
        self.base_delay = base_delay;
        self
    }

    fn wire_message(msg: &ChatMessage) -> serde_json::Value {
        match msg.role {
            // Text-only roles use plain string content.
            Role::System | Role::Assistant => serde_json::json!({
                "role": msg.role.wire_name(),
                "content": msg.text_content(),
            }),
            Role::User => {
                let parts: Vec<serde_json::Value> = msg
                    .parts
                    .iter()
                    .map(|part| match part {
                        ContentPart::Text(t) => serde_json::json!({
                            "type": "text",
                            "text": t,
                        }),
                        ContentPart::Image {
                            bytes, media_type, ..
                        } => serde_json::json!({
                            "type": "image_url",
                            "image_url": {
                                "url": format!(
                                    "data:{media_type};base64,{}",
                                    BASE64.encode(bytes.as_slice())
                                ),
                            },
                        }),
                    })
                    .collect();
                serde_json::json!({
                    "role": "user",
                    "content": parts,
                })
            }
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.base_delay.saturating_mul(1u32 << attempt.min(8));
        let jitter_window = (self.base_delay.as_nanos() / 2).max(1);
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0);
        base + Duration::from_nanos((nanos % jitter_window) as u64)
    }

    fn parse_reply(text: &str) -> Result<BackendReply, GatewayError> {
        #[derive(Deserialize)]
        struct Wire {
            choices: Vec<Choice>,
            #[serde(default)]
            usage: Option<Usage>,
        }
        #[derive(Deserialize)]
        struct Choice {
            message: Message,
        }
        #[derive(Deserialize)]
        struct Message {
            content: Option<String>,
        }
        #[derive(Deserialize)]
        struct Usage {
            #[serde(default)]
            prompt_tokens: u64,
            #[serde(default)]
            completion_tokens: u64,
        }
        let wire: Wire = serde_json::from_str(text)
            .map_err(|e| GatewayError::Protocol(format!("reply not valid JSON: {e}")))?;
        let first = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::Protocol("reply has no choices".into()))?;
        Ok(BackendReply {
            text: first.message.content.unwrap_or_default(),
            token_usage: wire.usage.map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
        })
    }
}

fn retryable_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

impl Backend for HttpBackend {
    fn complete(&self, conv: &Conversation, cfg: &ModelConfig) -> Result<BackendReply, GatewayError> {
        let messages: Vec<serde_json::Value> =
            conv.messages().iter().map(Self::wire_message).collect();
        let body = serde_json::json!({
            "model": cfg.model_name,
            "temperature": cfg.temperature,
            "seed": cfg.seed,
            "max_tokens": cfg.max_tokens,
            "messages": messages,
        });

        let mut attempt: u32 = 0;
        loop {
            let mut request = self
                .client
                .post(&cfg.endpoint)
                .timeout(cfg.timeout)
                .json(&body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            let outcome = request.send();
            attempt += 1;
            match outcome {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.text().map_err(|source| GatewayError::Transport {
                        attempts: attempt,
                        source,
                    })?;
                    if (200..300).contains(&status) {
                        return Self::parse_reply(&text);
                    }
                    if !retryable_status(status) || attempt > cfg.max_retries {
                        return Err(GatewayError::Status {
                            status,
                            attempts: attempt,
                            body: text.chars().take(200).collect(),
                        });
                    }
                }
                Err(source) => {
                    if attempt > cfg.max_retries {
                        return Err(GatewayError::Transport {
                            attempts: attempt,
                            source,
                        });
                    }
                }
            }
            thread::sleep(self.backoff(attempt - 1));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::tags;
    use crate::test_http::{serve, ScriptedResponse};
    use std::sync::Arc;

    fn sample_conv() -> Conversation {
        let mut conv = Conversation::new(
            ChatMessage::system("You inspect welds.").tagged(tags::system("Farming")),
        )
        .unwrap();
        conv.push(
            ChatMessage::user(vec![
                ContentPart::text("Assess this weld."),
                ContentPart::image(Arc::new(b"fake image bytes".to_vec())),
            ])
            .tagged(tags::reasoning("w-0")),
        )
        .unwrap();
        conv
    }

    fn cfg_for(endpoint: &str) -> ModelConfig {
        ModelConfig {
            endpoint: endpoint.to_string(),
            model_name: "test-model".into(),
            temperature: 1.0,
            seed: 5,
            max_tokens: 512,
            timeout: Duration::from_secs(5),
            max_retries: 2,
        }
    }

    fn chat_reply(text: &str) -> String {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 3},
        })
        .to_string()
    }

    #[test]
    fn success_round_trip_speaks_the_wire_format() {
        let server = serve(vec![ScriptedResponse::ok(chat_reply("the weld is fine"))]);
        let backend = HttpBackend::new(Some("test-key".into()))
            .unwrap()
            .with_base_delay(Duration::from_millis(1));
        let reply = backend.complete(&sample_conv(), &cfg_for(&server.url)).unwrap();
        assert_eq!(reply.text, "the weld is fine");
        assert_eq!(
            reply.token_usage,
            Some(TokenUsage {
                prompt_tokens: 10,
                completion_tokens: 3
            })
        );
        let requests = server.finish();
        assert_eq!(requests.len(), 1);
        let req = &requests[0];
        assert!(req.contains("authorization: Bearer test-key"), "auth header sent");
        assert!(req.contains("\"model\":\"test-model\""));
        assert!(req.contains("\"seed\":5"));
        assert!(req.contains("data:image/png;base64,"));
        assert!(req.contains(&BASE64.encode(b"fake image bytes")));
        assert!(req.contains("\"type\":\"text\""));
    }

    #[test]
    fn transient_errors_retry_until_success() {
        let server = serve(vec![
            ScriptedResponse::error(500, "oops"),
            ScriptedResponse::error(503, "busy"),
            ScriptedResponse::ok(chat_reply("ok now")),
        ]);
        let backend = HttpBackend::new(None)
            .unwrap()
            .with_base_delay(Duration::from_millis(1));
        let reply = backend.complete(&sample_conv(), &cfg_for(&server.url)).unwrap();
        assert_eq!(reply.text, "ok now");
        assert_eq!(server.finish().len(), 3);
    }

    #[test]
    fn retries_exhaust_after_max_attempts() {
        let server = serve(vec![
            ScriptedResponse::error(500, "a"),
            ScriptedResponse::error(500, "b"),
            ScriptedResponse::error(500, "c"),
        ]);
        let backend = HttpBackend::new(None)
            .unwrap()
            .with_base_delay(Duration::from_millis(1));
        let err = backend
            .complete(&sample_conv(), &cfg_for(&server.url))
            .unwrap_err();
        match err {
            GatewayError::Status {
                status, attempts, ..
            } => {
                assert_eq!(status, 500);
                assert_eq!(attempts, 3, "max_retries=2 means three attempts");
            }
            other => panic!("expected status error, got {other:?}"),
        }
        assert_eq!(server.finish().len(), 3);
    }

    #[test]
    fn client_errors_do_not_retry() {
        let server = serve(vec![ScriptedResponse::error(404, "no such model")]);
        let backend = HttpBackend::new(None)
            .unwrap()
            .with_base_delay(Duration::from_millis(1));
        let err = backend
            .complete(&sample_conv(), &cfg_for(&server.url))
            .unwrap_err();
        assert!(matches!(
            err,
            GatewayError::Status {
                status: 404,
                attempts: 1,
                ..
            }
        ));
        assert_eq!(server.finish().len(), 1);
    }

    #[test]
    fn connection_refused_reports_transport_failure() {
        // Bind then drop a listener so the port is very likely unused.
        let port = {
            let sock = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
            sock.local_addr().unwrap().port()
        };
        let backend = HttpBackend::new(None)
            .unwrap()
            .with_base_delay(Duration::from_millis(1));
        let mut cfg = cfg_for(&format!("http://127.0.0.1:{port}"));
        cfg.max_retries = 1;
        match backend.complete(&sample_conv(), &cfg) {
            Err(GatewayError::Transport { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("expected transport error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_reply_is_a_protocol_error() {
        let server = serve(vec![ScriptedResponse::ok("{\"unexpected\": true}")]);
        let backend = HttpBackend::new(None)
            .unwrap()
            .with_base_delay(Duration::from_millis(1));
        let err = backend
            .complete(&sample_conv(), &cfg_for(&server.url))
            .unwrap_err();
        assert!(matches!(err, GatewayError::Protocol(_)));
        server.finish();
    }
}
