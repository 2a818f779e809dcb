use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::Serialize;

use crate::memory::{MemoryRecord, ScoredMemory};

/// Context composed for one incoming message.
#[derive(Debug, Clone, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct State {
    pub agent_name: String,
    pub bio_excerpt: String,
    pub recent_messages: Vec<MemoryRecord>,
    pub provider_outputs: Vec<(String, String)>,
    pub retrieved_memories: Vec<ScoredMemory>,
    pub available_actions: Vec<(String, String)>,
    pub extra: BTreeMap<String, String>,
}

impl State {
    fn format_recent(&self) -> String {
        self.recent_messages
            .iter()
            .map(|m| {
                let speaker = if m.is_from_agent() {
                    self.agent_name.as_str()
                } else {
                    m.user_id.as_str()
                };
                format!("{speaker}: {}", m.content.text)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn format_providers(&self) -> String {
        self.provider_outputs
            .iter()
            .filter(|(_, text)| !text.is_empty())
            .map(|(_, text)| text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn format_memories(&self) -> String {
        self.retrieved_memories
            .iter()
            .map(|m| format!("- {}", m.record.content.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn format_actions(&self) -> String {
        self.available_actions
            .iter()
            .map(|(name, desc)| format!("- {name}: {desc}"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Value for a template key, if the key is known.
    pub fn lookup(&self, key: &str) -> Option<String> {
        match key {
            "agentName" => Some(self.agent_name.clone()),
            "bio" => Some(self.bio_excerpt.clone()),
            "recentMessages" => Some(self.format_recent()),
            "providers" => Some(self.format_providers()),
            "memories" => Some(self.format_memories()),
            "actions" => Some(self.format_actions()),
            other => self.extra.get(other).cloned(),
        }
    }
}

fn placeholder() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*([A-Za-z0-9_.]+)\s*\}\}").unwrap())
}

/// Substitutes every `{{key}}` once. Unknown keys render as empty text and
/// are returned as warnings. Substituted text is never rescanned.
pub fn render_template(template: &str, state: &State) -> (String, Vec<String>) {
    let mut warnings = Vec::new();
    let text = placeholder()
        .replace_all(template, |caps: &Captures| {
            let key = &caps[1];
            state.lookup(key).unwrap_or_else(|| {
                warnings.push(format!("unknown template key `{key}`"));
                String::new()
            })
        })
        .into_owned();
    (text, warnings)
}

pub const DEFAULT_MESSAGE_TEMPLATE: &str = "\
# About {{agentName}}
{{bio}}

# Context
{{providers}}

# Relevant memories
{{memories}}

# Available actions
{{actions}}

# Conversation in {{roomId}}
{{recentMessages}}

# Task
Write the next message from {{agentName}}. If an action should run, end with a final line `ACTION: <NAME>`.
";

#[cfg(test)]
mod tests {
    use super::*;

    fn eliza() -> State {
        State {
            agent_name: "Eliza".into(),
            ..State::default()
        }
    }

    #[test]
    fn substitutes_known_key() {
        let (text, warnings) = render_template("{{agentName}}: hello", &eliza());
        assert_eq!(text, "Eliza: hello");
        assert!(warnings.is_empty());
    }

    #[test]
    fn unknown_key_is_empty_with_warning() {
        let (text, warnings) = render_template("{{unknown}}", &eliza());
        assert_eq!(text, "");
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn repeated_keys() {
        let (text, _) = render_template("{{agentName}}{{agentName}}", &eliza());
        assert_eq!(text, "ElizaEliza");
    }

    #[test]
    fn no_recursive_expansion() {
        let mut state = eliza();
        state.extra.insert("message".into(), "{{agentName}}".into());
        let (text, _) = render_template("{{message}}", &state);
        assert_eq!(text, "{{agentName}}");
    }
}
