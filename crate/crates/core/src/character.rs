//! JSON character files: persona, model provider, clients, style and
//! plugin selection for one agent.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "<root>: {}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, Error)]
pub enum CharacterError {
    #[error("character file not found: {0}")]
    FileNotFound(String),
    #[error("failed to read character file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    SchemaViolation(Vec<Violation>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleContent {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageExample {
    pub user: String,
    pub content: ExampleContent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Style {
    #[serde(default)]
    pub all: Vec<String>,
    #[serde(default)]
    pub chat: Vec<String>,
    #[serde(default)]
    pub post: Vec<String>,
}

/// Secret values; `Debug` prints keys only.
#[derive(Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Secrets(pub BTreeMap<String, String>);

impl fmt::Debug for Secrets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.0.keys().map(|k| (k, "<redacted>")))
            .finish()
    }
}

impl Secrets {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterSettings {
    #[serde(default)]
    pub secrets: Secrets,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Character {
    pub name: String,
    #[serde(rename = "modelProvider")]
    pub model_provider_id: String,
    #[serde(default)]
    pub clients: Vec<String>,
    #[serde(default)]
    pub bio: Vec<String>,
    #[serde(default)]
    pub lore: Vec<String>,
    #[serde(default)]
    pub knowledge: Vec<String>,
    #[serde(default)]
    pub message_examples: Vec<Vec<MessageExample>>,
    #[serde(default)]
    pub post_examples: Vec<String>,
    #[serde(default)]
    pub topics: Vec<String>,
    #[serde(default)]
    pub adjectives: Vec<String>,
    #[serde(default)]
    pub style: Style,
    #[serde(default)]
    pub plugins: Vec<String>,
    #[serde(default)]
    pub settings: CharacterSettings,
    /// Unrecognized top-level keys, kept so files round-trip.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Character {
    /// Minimal character with every list empty.
    pub fn new(name: impl Into<String>, model_provider_id: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            model_provider_id: model_provider_id.into(),
            clients: Vec::new(),
            bio: Vec::new(),
            lore: Vec::new(),
            knowledge: Vec::new(),
            message_examples: Vec::new(),
            post_examples: Vec::new(),
            topics: Vec::new(),
            adjectives: Vec::new(),
            style: Style::default(),
            plugins: Vec::new(),
            settings: CharacterSettings::default(),
            extra: BTreeMap::new(),
        }
    }

    pub fn from_value(doc: Value) -> Result<Self, CharacterError> {
        let violations = validate_character(&doc);
        if !violations.is_empty() {
            return Err(CharacterError::SchemaViolation(violations));
        }
        serde_json::from_value(doc)
            .map_err(|e| CharacterError::SchemaViolation(vec![Violation::new("", e.to_string())]))
    }

    pub fn from_json_str(text: &str) -> Result<Self, CharacterError> {
        let doc: Value =
            serde_json::from_str(text).map_err(|e| CharacterError::MalformedJson(e.to_string()))?;
        Self::from_value(doc)
    }

    /// Full serialization, secrets included. Use [`Character::to_log_json`]
    /// for anything that ends up in logs.
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("character serializes")
    }

    /// Serialization with every secret value replaced.
    pub fn to_log_json(&self) -> String {
        let mut redacted = self.clone();
        for value in redacted.settings.secrets.0.values_mut() {
            *value = "<redacted>".into();
        }
        serde_json::to_string(&redacted).expect("character serializes")
    }
}

pub fn load_character(path: impl AsRef<Path>) -> Result<Character, CharacterError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CharacterError::FileNotFound(path.display().to_string()),
        _ => CharacterError::Io(e),
    })?;
    Character::from_json_str(&text)
}

const STRING_LISTS: [&str; 8] = [
    "adjectives",
    "bio",
    "clients",
    "knowledge",
    "lore",
    "plugins",
    "postExamples",
    "topics",
];

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn check_string_list(value: &Value, path: &str, out: &mut Vec<Violation>) {
    match value {
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                if !item.is_string() {
                    out.push(Violation::new(
                        format!("{path}[{i}]"),
                        format!("expected string, found {}", type_name(item)),
                    ));
                }
            }
        }
        other => out.push(Violation::new(
            path,
            format!("expected array of strings, found {}", type_name(other)),
        )),
    }
}

fn check_required_string(doc: &serde_json::Map<String, Value>, key: &str, out: &mut Vec<Violation>) {
    match doc.get(key) {
        None => out.push(Violation::new(key, "is required")),
        Some(Value::String(s)) if s.trim().is_empty() => {
            out.push(Violation::new(key, "must not be empty"))
        }
        Some(Value::String(_)) => {}
        Some(other) => out.push(Violation::new(
            key,
            format!("expected string, found {}", type_name(other)),
        )),
    }
}

fn check_message_examples(value: &Value, out: &mut Vec<Violation>) {
    let Value::Array(dialogues) = value else {
        out.push(Violation::new(
            "messageExamples",
            format!("expected array of dialogues, found {}", type_name(value)),
        ));
        return;
    };
    for (d, dialogue) in dialogues.iter().enumerate() {
        let Value::Array(turns) = dialogue else {
            out.push(Violation::new(
                format!("messageExamples[{d}]"),
                format!("expected array of messages, found {}", type_name(dialogue)),
            ));
            continue;
        };
        for (t, turn) in turns.iter().enumerate() {
            let base = format!("messageExamples[{d}][{t}]");
            let Value::Object(turn) = turn else {
                out.push(Violation::new(
                    base,
                    format!("expected object, found {}", type_name(turn)),
                ));
                continue;
            };
            match turn.get("user") {
                Some(Value::String(_)) => {}
                Some(other) => out.push(Violation::new(
                    format!("{base}.user"),
                    format!("expected string, found {}", type_name(other)),
                )),
                None => out.push(Violation::new(format!("{base}.user"), "is required")),
            }
            match turn.get("content") {
                Some(Value::Object(content)) => {
                    match content.get("text") {
                        Some(Value::String(_)) => {}
                        Some(other) => out.push(Violation::new(
                            format!("{base}.content.text"),
                            format!("expected string, found {}", type_name(other)),
                        )),
                        None => {
                            out.push(Violation::new(format!("{base}.content.text"), "is required"))
                        }
                    }
                    match content.get("action") {
                        None | Some(Value::Null) | Some(Value::String(_)) => {}
                        Some(other) => out.push(Violation::new(
                            format!("{base}.content.action"),
                            format!("expected string, found {}", type_name(other)),
                        )),
                    }
                }
                Some(other) => out.push(Violation::new(
                    format!("{base}.content"),
                    format!("expected object, found {}", type_name(other)),
                )),
                None => out.push(Violation::new(format!("{base}.content"), "is required")),
            }
        }
    }
}

fn check_style(value: &Value, out: &mut Vec<Violation>) {
    let Value::Object(style) = value else {
        out.push(Violation::new(
            "style",
            format!("expected object, found {}", type_name(value)),
        ));
        return;
    };
    for key in ["all", "chat", "post"] {
        if let Some(v) = style.get(key) {
            check_string_list(v, &format!("style.{key}"), out);
        }
    }
}

fn check_settings(value: &Value, out: &mut Vec<Violation>) {
    let Value::Object(settings) = value else {
        out.push(Violation::new(
            "settings",
            format!("expected object, found {}", type_name(value)),
        ));
        return;
    };
    match settings.get("secrets") {
        None => {}
        Some(Value::Object(secrets)) => {
            for (k, v) in secrets {
                if !v.is_string() {
                    out.push(Violation::new(
                        format!("settings.secrets.{k}"),
                        format!("expected string, found {}", type_name(v)),
                    ));
                }
            }
        }
        Some(other) => out.push(Violation::new(
            "settings.secrets",
            format!("expected object, found {}", type_name(other)),
        )),
    }
    match settings.get("voice") {
        None | Some(Value::Null) | Some(Value::String(_)) => {}
        Some(other) => out.push(Violation::new(
            "settings.voice",
            format!("expected string, found {}", type_name(other)),
        )),
    }
}

/// Every reason `doc` would fail to load, sorted by JSON path. Empty exactly
/// when [`Character::from_value`] succeeds.
pub fn validate_character(doc: &Value) -> Vec<Violation> {
    let Value::Object(map) = doc else {
        return vec![Violation::new(
            "",
            format!("expected object, found {}", type_name(doc)),
        )];
    };
    let mut out = Vec::new();
    check_required_string(map, "name", &mut out);
    check_required_string(map, "modelProvider", &mut out);
    for key in STRING_LISTS {
        if let Some(v) = map.get(key) {
            check_string_list(v, key, &mut out);
        }
    }
    if let Some(v) = map.get("messageExamples") {
        check_message_examples(v, &mut out);
    }
    if let Some(v) = map.get("style") {
        check_style(v, &mut out);
    }
    if let Some(v) = map.get("settings") {
        check_settings(v, &mut out);
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn minimal_document_normalizes() {
        let c = Character::from_value(json!({"name": "Eliza", "modelProvider": "scripted"})).unwrap();
        assert_eq!(c, Character::new("Eliza", "scripted"));
        assert!(c.bio.is_empty() && c.clients.is_empty() && c.style.all.is_empty());
    }

    #[test]
    fn missing_name() {
        let v = validate_character(&json!({"modelProvider": "scripted"}));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "name");
        match Character::from_value(json!({"modelProvider": "scripted"})) {
            Err(CharacterError::SchemaViolation(v)) => assert_eq!(v[0].path, "name"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clients_as_string() {
        let v = validate_character(&json!({"name": "E", "modelProvider": "m", "clients": "twitter"}));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "clients");
    }

    #[test]
    fn violations_sorted_by_path() {
        let v = validate_character(&json!({"modelProvider": "m", "clients": "twitter"}));
        let paths: Vec<_> = v.iter().map(|v| v.path.as_str()).collect();
        assert_eq!(paths, ["clients", "name"]);
    }

    #[test]
    fn unknown_keys_preserved() {
        let c = Character::from_value(
            json!({"name": "E", "modelProvider": "m", "futureField": {"a": 1}}),
        )
        .unwrap();
        assert_eq!(c.extra["futureField"], json!({"a": 1}));
        let back: Value = serde_json::from_str(&c.to_json_pretty()).unwrap();
        assert_eq!(back["futureField"], json!({"a": 1}));
    }

    #[test]
    fn secrets_redacted_in_logs() {
        let mut c = Character::new("E", "m");
        c.settings
            .secrets
            .0
            .insert("API_KEY".into(), "hunter2".into());
        assert!(!c.to_log_json().contains("hunter2"));
        assert!(!format!("{c:?}").contains("hunter2"));
        assert!(c.to_json_pretty().contains("hunter2"));
    }

    #[test]
    fn malformed_json() {
        assert!(matches!(
            Character::from_json_str("{not json"),
            Err(CharacterError::MalformedJson(_))
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_character("/definitely/not/here.json"),
            Err(CharacterError::FileNotFound(_))
        ));
    }
}
