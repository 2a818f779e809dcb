//! Fixture builders shared by the criterion benches.

use std::sync::Arc;

use agentos_core::memory::{InMemoryAdapter, MemoryAdapter};
use agentos_core::{
    AgentRuntime, Character, Content, ManualClock, MemoryKind, MemoryRecord, ModelRegistry,
    RuntimeConfig, ScriptedProvider,
};

const WORDS: [&str; 24] = [
    "swap", "token", "pool", "wallet", "trade", "market", "price", "image", "draw", "send",
    "balance", "alice", "bob", "meme", "post", "social", "liquidity", "trust", "risk", "agent",
    "memory", "goal", "fact", "reply",
];

/// Deterministic pseudo-sentence number `i`.
pub fn sentence(i: u64) -> String {
    let mut x = i.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let len = 4 + (x % 6) as usize;
    (0..len)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            WORDS[(x % WORDS.len() as u64) as usize]
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// An in-memory store holding `n` messages spread over four rooms.
pub fn seeded_store(n: usize) -> InMemoryAdapter {
    let store = InMemoryAdapter::new();
    for i in 0..n {
        let record = MemoryRecord::new(
            format!("m{i}"),
            "agent",
            "user",
            format!("room{}", i % 4),
            MemoryKind::Message,
            Content::text(sentence(i as u64)),
            i as i64,
        );
        store.store(record).expect("unique ids");
    }
    store
}

/// A bootstrap-only runtime whose model always answers with `response`.
pub fn scripted_runtime(response: &str) -> Arc<AgentRuntime> {
    let models = Arc::new(ModelRegistry::new());
    let rules = format!(r#"[{{"matcher": "default", "response": {}}}]"#, serde_quote(response));
    models
        .register("scripted", Arc::new(ScriptedProvider::from_json(&rules).expect("valid script")))
        .expect("fresh registry");
    let mut config = RuntimeConfig::new(Character::new("Bench", "scripted"));
    config.use_process_env = false;
    let rt = AgentRuntime::with_clock(config, models, Arc::new(ManualClock::new(0))).expect("runtime");
    rt.load_plugin(&agentos_core::plugin::bootstrap_plugin()).expect("bootstrap loads");
    rt.freeze();
    rt
}

fn serde_quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentences_are_deterministic() {
        assert_eq!(sentence(7), sentence(7));
        assert_ne!(sentence(7), sentence(8));
    }

    #[test]
    fn fixtures_build() {
        assert_eq!(seeded_store(10).count(), 10);
        let rt = scripted_runtime("ok\nACTION: NONE");
        let replies = rt.process_message(rt.new_message("u", "r", "hello \"there\"")).unwrap();
        assert_eq!(replies[0].text, "ok");
    }
}
