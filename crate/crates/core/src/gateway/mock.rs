use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use super::{CallTag, ChatClient, GatewayError, ModelConfig, ModelReply};
use crate::prompt::Message;

/// Script key that applies to bugs without their own entry.
pub const WILDCARD: &str = "*";

/// Replies per bug id, in call order. Past the end the last reply repeats.
pub type MockScript = BTreeMap<String, Vec<String>>;

/// Deterministic client that replays a script. Token counts are
/// whitespace-separated word counts.
#[derive(Debug, Default)]
pub struct MockClient {
    script: MockScript,
    calls: Mutex<Vec<(String, u32)>>,
}

fn words(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

impl MockClient {
    pub fn new(script: MockScript) -> Self {
        MockClient {
            script,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let script = serde_json::from_str(&text)
            .map_err(|e| GatewayError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Ok(MockClient::new(script))
    }

    /// Every (bug id, call index) served so far.
    pub fn calls(&self) -> Vec<(String, u32)> {
        self.calls.lock().expect("call log").clone()
    }
}

impl ChatClient for MockClient {
    fn complete(
        &self,
        tag: CallTag<'_>,
        messages: &[Message],
        _cfg: &ModelConfig,
    ) -> Result<ModelReply, GatewayError> {
        let replies = self
            .script
            .get(tag.bug_id)
            .or_else(|| self.script.get(WILDCARD))
            .filter(|r| !r.is_empty())
            .ok_or_else(|| GatewayError::NoScriptedReply(tag.bug_id.to_string()))?;
        let content = replies
            .get(tag.call_index as usize)
            .unwrap_or_else(|| replies.last().expect("non-empty"))
            .clone();
        self.calls
            .lock()
            .expect("call log")
            .push((tag.bug_id.to_string(), tag.call_index));
        Ok(ModelReply {
            input_tokens: messages.iter().map(|m| words(&m.content)).sum(),
            output_tokens: words(&content),
            content,
            finish_reason: "stop".into(),
        })
    }
}
