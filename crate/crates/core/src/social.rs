//! Simulated social-media client: posts land in a dedicated room.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, LazyLock};

use regex::Regex;

use crate::action::ActionDef;
use crate::kernel::{AgentRuntime, RuntimeError};
use crate::memory::{Content, MemoryKind, MemoryRecord, RecordFilter};
use crate::plugin::{Client, PluginDef};

pub const SOCIAL_ROOM: &str = "social";
pub const SOCIAL_CLIENT: &str = "social";

#[derive(Debug, Default)]
pub struct SimulatedSocialClient {
    running: AtomicBool,
}

impl SimulatedSocialClient {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Publishes `text` as the agent into the social room.
    pub fn post(&self, runtime: &AgentRuntime, text: &str) -> Result<MemoryRecord, RuntimeError> {
        if !self.is_running() {
            return Err(RuntimeError::InvalidMessage("social client is not running".into()));
        }
        let record = runtime.new_record(
            runtime.agent_id(),
            SOCIAL_ROOM,
            MemoryKind::Message,
            Content::text(text),
        );
        runtime.remember(record.clone())?;
        Ok(record)
    }

    /// Everything posted so far, oldest first.
    pub fn timeline(runtime: &AgentRuntime) -> Vec<MemoryRecord> {
        runtime.store().list(&RecordFilter::room(SOCIAL_ROOM))
    }
}

impl Client for SimulatedSocialClient {
    fn name(&self) -> &str {
        SOCIAL_CLIENT
    }

    fn start(&self, _runtime: &Arc<AgentRuntime>) -> Result<(), String> {
        self.running.store(true, Ordering::SeqCst);
        Ok(())
    }

    fn stop(&self) {
        self.running.store(false, Ordering::SeqCst);
    }

    fn is_running(&self) -> bool {
        self.running.load(Ordering::SeqCst)
    }
}

static POST_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?is)\b(?:post|tweet|share|publish)\b[^:"]*[:"]\s*"?([^"]+?)"?\s*$"#).unwrap()
});

/// Text to publish: whatever follows a colon or sits in quotes after a
/// post verb.
pub fn extract_post(text: &str) -> Option<String> {
    POST_RE
        .captures(text)
        .map(|c| c[1].trim().to_owned())
        .filter(|s| !s.is_empty())
}

fn post_action(client: Arc<SimulatedSocialClient>) -> ActionDef {
    let gate = client.clone();
    ActionDef::new("POST_SOCIAL", "Publish a post on the social media timeline.")
        .with_similes(["TWEET", "POST_TWEET", "SHARE_POST"])
        .with_validate(move |_, _| gate.is_running())
        .with_handler(move |rt, message, _state, _options, callback| {
            let Some(text) = extract_post(message.text()) else {
                callback(Content::text("Tell me what to post after a colon."));
                return false;
            };
            match client.post(rt, &text) {
                Ok(_) => {
                    callback(Content::text(format!("Posted: {text}")));
                    true
                }
                Err(e) => {
                    callback(Content::text(format!("Post failed: {e}")));
                    false
                }
            }
        })
}

pub fn social_plugin() -> PluginDef {
    let client = SimulatedSocialClient::new();
    PluginDef::new("social", "Simulated social media client")
        .with_action(post_action(client.clone()))
        .with_client(client)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn post_text_extraction() {
        assert_eq!(extract_post("post this: gm frens").as_deref(), Some("gm frens"));
        assert_eq!(extract_post("tweet \"hello world\"").as_deref(), Some("hello world"));
        assert_eq!(extract_post("please post something"), None);
    }
}
