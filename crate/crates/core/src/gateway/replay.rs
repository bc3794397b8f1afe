//! Deterministic scripted backend: returns canned responses in order and
//! records every request for later assertion.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendResponse, ChatBackend, ChatMessage, DecodeParams, GatewayError, Usage};

/// One canned response in a replay script.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub response: String,
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
}

impl ReplayEntry {
    pub fn text(response: impl Into<String>) -> Self {
        ReplayEntry {
            response: response.into(),
            input_tokens: 0,
            output_tokens: 0,
        }
    }

    pub fn with_usage(mut self, input: u64, output: u64) -> Self {
        self.input_tokens = input;
        self.output_tokens = output;
        self
    }
}

struct ReplayState {
    cursor: usize,
    requests: Vec<Vec<ChatMessage>>,
}

pub struct ReplayBackend {
    script: Vec<ReplayEntry>,
    state: Mutex<ReplayState>,
}

impl ReplayBackend {
    pub fn new(script: Vec<ReplayEntry>) -> Self {
        ReplayBackend {
            script,
            state: Mutex::new(ReplayState {
                cursor: 0,
                requests: Vec::new(),
            }),
        }
    }

    /// Load a JSON-lines script file, one [`ReplayEntry`] object per line.
    pub fn from_jsonl(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::InvalidRequest(format!("replay script {path:?}: {e}")))?;
        let mut script = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry = serde_json::from_str(line).map_err(|e| {
                GatewayError::InvalidRequest(format!("replay script line {}: {e}", i + 1))
            })?;
            script.push(entry);
        }
        if script.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "replay script has no entries".into(),
            ));
        }
        Ok(Self::new(script))
    }

    /// Requests seen so far, in call order.
    pub fn recorded_requests(&self) -> Vec<Vec<ChatMessage>> {
        self.state.lock().expect("replay lock").requests.clone()
    }

    pub fn remaining(&self) -> usize {
        let state = self.state.lock().expect("replay lock");
        self.script.len() - state.cursor
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        _params: &DecodeParams,
    ) -> Result<BackendResponse, GatewayError> {
        let mut state = self.state.lock().expect("replay lock");
        state.requests.push(messages.to_vec());
        let entry = self
            .script
            .get(state.cursor)
            .ok_or(GatewayError::ScriptExhausted(self.script.len()))?;
        state.cursor += 1;
        let usage = if entry.input_tokens == 0 && entry.output_tokens == 0 {
            None
        } else {
            Some(Usage {
                input_tokens: entry.input_tokens,
                output_tokens: entry.output_tokens,
            })
        };
        Ok(BackendResponse {
            text: entry.response.clone(),
            usage,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{chat, ModelProfile};

    fn profile() -> ModelProfile {
        ModelProfile {
            model_id: "replay".into(),
            input_cost_per_1k_tokens: 0.into(),
            output_cost_per_1k_tokens: 0.into(),
            max_context_tokens: 1000,
        }
    }

    #[test]
    fn entries_in_order_then_exhausted() {
        let backend = ReplayBackend::new(vec![
            ReplayEntry::text("one"),
            ReplayEntry::text("two"),
            ReplayEntry::text("three"),
        ]);
        let msgs = [ChatMessage::user("go")];
        for expected in ["one", "two", "three"] {
            let ex = chat(&profile(), &backend, &msgs, &Default::default()).unwrap();
            assert_eq!(ex.response, expected);
        }
        let err = chat(&profile(), &backend, &msgs, &Default::default()).unwrap_err();
        assert!(matches!(err, GatewayError::ScriptExhausted(3)));
    }

    #[test]
    fn records_requests_verbatim() {
        let backend = ReplayBackend::new(vec![ReplayEntry::text("ACK")]);
        let msgs = vec![ChatMessage::system("sys"), ChatMessage::user("hello")];
        chat(&profile(), &backend, &msgs, &Default::default()).unwrap();
        assert_eq!(backend.recorded_requests(), vec![msgs]);
    }

    #[test]
    fn scripted_usage_flows_through() {
        let backend = ReplayBackend::new(vec![ReplayEntry::text("ACK").with_usage(7, 3)]);
        let msgs = [ChatMessage::user("go")];
        let ex = chat(&profile(), &backend, &msgs, &Default::default()).unwrap();
        assert_eq!(
            ex.usage,
            Some(Usage {
                input_tokens: 7,
                output_tokens: 3
            })
        );
    }
}
