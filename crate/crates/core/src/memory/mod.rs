//! Conversation memory: records, the hashing embedder, storage adapters,
//! goals and relationships.

mod embed;
mod goals;
mod store;

pub use embed::{cosine, embed, is_valid_embedding, tokenize, EMB_DIM};
pub use goals::{Goal, GoalBook, GoalStatus, Objective, Relationship, RelationshipBook};
pub use store::{
    open_adapter, FileAdapter, InMemoryAdapter, MemoryAdapter, MemoryIndex, RecordFilter,
    ScoredMemory,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("memory id `{0}` already stored")]
    DuplicateId(String),
    #[error("embedding must have {expected} finite components with norm 0 or 1 (got len {len})")]
    InvalidEmbedding { expected: usize, len: usize },
    #[error("failed to open memory adapter: {0}")]
    AdapterOpenFailure(String),
    #[error("failed to write memory: {0}")]
    AdapterWriteFailure(String),
    #[error("unknown goal `{0}`")]
    UnknownGoal(String),
    #[error("objective index {index} out of range for goal with {len} objectives")]
    ObjectiveIndexError { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MemoryKind {
    Message,
    Fact,
    Goal,
    Reflection,
}

/// A file or URL handed back to the user alongside a reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Attachment {
    pub id: String,
    pub url: String,
    pub title: String,
    pub source: String,
    pub description: String,
    pub content_type: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Content {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
    /// Ids of the records this one was derived from (evaluator output).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<String>,
}

impl Content {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MemoryRecord {
    pub id: String,
    pub agent_id: String,
    pub user_id: String,
    pub room_id: String,
    pub kind: MemoryKind,
    pub content: Content,
    pub embedding: Vec<f32>,
    pub created_at: i64,
}

impl MemoryRecord {
    /// Builds a record and embeds its text.
    pub fn new(
        id: impl Into<String>,
        agent_id: impl Into<String>,
        user_id: impl Into<String>,
        room_id: impl Into<String>,
        kind: MemoryKind,
        content: Content,
        created_at: i64,
    ) -> Self {
        let embedding = embed(&content.text);
        Self {
            id: id.into(),
            agent_id: agent_id.into(),
            user_id: user_id.into(),
            room_id: room_id.into(),
            kind,
            content,
            embedding,
            created_at,
        }
    }

    /// True when the record was written by the agent itself.
    pub fn is_from_agent(&self) -> bool {
        self.user_id == self.agent_id
    }

    pub fn text(&self) -> &str {
        &self.content.text
    }
}
