//! Context providers and the built-in time, facts and boredom providers.

use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::kernel::{AgentRuntime, State};
use crate::memory::{MemoryKind, MemoryRecord, RecordFilter};

pub type ProviderFn =
    dyn Fn(&AgentRuntime, &MemoryRecord, &State) -> Result<String, String> + Send + Sync;

/// Read-only context supplier. Output text is placed into [`State`] in
/// registration order.
#[derive(Clone)]
pub struct ProviderDef {
    pub name: String,
    get: Arc<ProviderFn>,
}

impl fmt::Debug for ProviderDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProviderDef")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

impl ProviderDef {
    pub fn new(
        name: impl Into<String>,
        get: impl Fn(&AgentRuntime, &MemoryRecord, &State) -> Result<String, String>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            get: Arc::new(get),
        }
    }

    pub fn get(
        &self,
        runtime: &AgentRuntime,
        message: &MemoryRecord,
        state: &State,
    ) -> Result<String, String> {
        (self.get)(runtime, message, state)
    }
}

pub fn format_time(ms: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .unwrap_or_default()
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn time_provider() -> ProviderDef {
    ProviderDef::new("time", |rt, _, _| {
        Ok(format!("Current time: {}", format_time(rt.now_ms())))
    })
}

pub const FACTS_PER_MESSAGE: usize = 5;

/// Renders up to five room facts, most similar to the message first.
pub fn facts_provider() -> ProviderDef {
    ProviderDef::new("facts", |rt, message, _| {
        let filter = RecordFilter::room(&message.room_id).with_kind(MemoryKind::Fact);
        let facts =
            rt.store()
                .search_similar(&message.embedding, FACTS_PER_MESSAGE, f64::NEG_INFINITY, &filter);
        Ok(facts
            .iter()
            .map(|f| format!("Known fact: {}", f.record.content.text))
            .collect::<Vec<_>>()
            .join("\n"))
    })
}

/// 0.25 per trailing agent message with no user message after it, capped at 1.
pub fn boredom_level(messages: &[MemoryRecord]) -> f64 {
    let trailing = messages
        .iter()
        .rev()
        .take_while(|m| m.is_from_agent())
        .count();
    (0.25 * trailing as f64).clamp(0.0, 1.0)
}

pub fn engagement_label(boredom: f64) -> &'static str {
    if boredom < 0.25 {
        "engaged"
    } else if boredom < 0.75 {
        "neutral"
    } else {
        "bored"
    }
}

pub fn boredom_provider() -> ProviderDef {
    ProviderDef::new("boredom", |rt, message, _| {
        let recent = rt.store().recent(&message.room_id, rt.conversation_length());
        Ok(format!(
            "Engagement: {}",
            engagement_label(boredom_level(&recent))
        ))
    })
}
