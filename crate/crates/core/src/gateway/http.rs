//! Live chat backend speaking a generic JSON chat-completions wire shape.
//!
//! Vendor differences are confined to an [`HttpAdapter`]: endpoint URL, the
//! header carrying the API key, and the wire model name. The request body and
//! response shape follow the widely shared `messages`/`choices`/`usage`
//! layout.

use serde_json::{json, Value};

use super::{BackendResponse, ChatBackend, ChatMessage, DecodeParams, GatewayError, Role, Usage};

/// Per-backend adapter description.
#[derive(Debug, Clone)]
pub struct HttpAdapter {
    /// Full completions endpoint, e.g. `https://host/v1/chat/completions`.
    pub endpoint: String,
    /// Wire-level model name.
    pub model: String,
    /// Header used for the key, e.g. `authorization` or `x-api-key`.
    pub auth_header: String,
    /// Prefix prepended to the key value, e.g. `Bearer `.
    pub auth_prefix: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
}

pub struct HttpChatBackend {
    adapter: HttpAdapter,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(adapter: HttpAdapter) -> Self {
        HttpChatBackend {
            adapter,
            client: reqwest::blocking::Client::new(),
        }
    }
}

fn role_str(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    }
}

/// Build the JSON request body for a message list and decode params.
pub fn build_request_body(model: &str, messages: &[ChatMessage], params: &DecodeParams) -> Value {
    let mut body = json!({
        "model": model,
        "messages": messages
            .iter()
            .map(|m| json!({"role": role_str(m.role), "content": m.content}))
            .collect::<Vec<_>>(),
        "temperature": params.temperature,
    });
    if let Some(seed) = params.seed {
        body["seed"] = json!(seed);
    }
    if let Some(max_tokens) = params.max_tokens {
        body["max_tokens"] = json!(max_tokens);
    }
    body
}

/// Map a chat-completions JSON response onto a [`BackendResponse`].
pub fn parse_response_body(body: &Value) -> Result<BackendResponse, GatewayError> {
    let text = body["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| {
            GatewayError::Transport(format!("response missing choices[0].message.content: {body}"))
        })?
        .to_string();
    let usage = match (
        body["usage"]["prompt_tokens"].as_u64(),
        body["usage"]["completion_tokens"].as_u64(),
    ) {
        (Some(input_tokens), Some(output_tokens)) => Some(Usage {
            input_tokens,
            output_tokens,
        }),
        _ => None,
    };
    Ok(BackendResponse { text, usage })
}

impl ChatBackend for HttpChatBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &DecodeParams,
    ) -> Result<BackendResponse, GatewayError> {
        let key = std::env::var(&self.adapter.api_key_env).map_err(|_| {
            GatewayError::Auth(format!("env var {} is not set", self.adapter.api_key_env))
        })?;
        let body = build_request_body(&self.adapter.model, messages, params);
        let resp = self
            .client
            .post(&self.adapter.endpoint)
            .header(
                self.adapter.auth_header.as_str(),
                format!("{}{key}", self.adapter.auth_prefix),
            )
            .json(&body)
            .send()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(GatewayError::Auth(text));
        }
        if status == reqwest::StatusCode::PAYLOAD_TOO_LARGE {
            return Err(GatewayError::ContextOverflow);
        }
        if !status.is_success() {
            return Err(GatewayError::Transport(format!("HTTP {status}: {text}")));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Transport(format!("bad JSON response: {e}")))?;
        // some providers report context overflow as a structured error
        if value["error"]["code"].as_str() == Some("context_length_exceeded") {
            return Err(GatewayError::ContextOverflow);
        }
        parse_response_body(&value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_body_shape() {
        let msgs = vec![ChatMessage::system("sys"), ChatMessage::user("hi")];
        let params = DecodeParams {
            temperature: 0.0,
            seed: Some(7),
            max_tokens: Some(256),
        };
        let body = build_request_body("m1", &msgs, &params);
        assert_eq!(body["model"], "m1");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "hi");
        assert_eq!(body["seed"], 7);
        assert_eq!(body["max_tokens"], 256);
    }

    #[test]
    fn response_parsing_with_and_without_usage() {
        let with = json!({
            "choices": [{"message": {"content": "hello"}}],
            "usage": {"prompt_tokens": 12, "completion_tokens": 4}
        });
        let parsed = parse_response_body(&with).unwrap();
        assert_eq!(parsed.text, "hello");
        assert_eq!(
            parsed.usage,
            Some(Usage {
                input_tokens: 12,
                output_tokens: 4
            })
        );

        let without = json!({"choices": [{"message": {"content": "hello"}}]});
        assert_eq!(parse_response_body(&without).unwrap().usage, None);

        let bad = json!({"oops": true});
        assert!(parse_response_body(&bad).is_err());
    }
}
