//! Action descriptors and intent recognition.
//!
//! An action is found three ways, in decreasing precedence: the model names
//! it (EXPLICIT), the message contains its name or a simile as a whole token
//! run (LEXICAL), or the message embedding is close enough to the action's
//! name, similes and description (SEMANTIC).

use std::collections::BTreeMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use serde::Serialize;

use crate::kernel::{AgentRuntime, State};
use crate::memory::{cosine, embed, tokenize, Content, MemoryRecord};

pub const NONE: &str = "NONE";
pub const IGNORE: &str = "IGNORE";
pub const CONTINUE: &str = "CONTINUE";

/// Default cosine floor for SEMANTIC candidates; setting `INTENT_THRESHOLD`.
pub const DEFAULT_INTENT_THRESHOLD: f64 = 0.55;

pub type HandlerOptions = BTreeMap<String, String>;
pub type ValidateFn = dyn Fn(&AgentRuntime, &MemoryRecord) -> bool + Send + Sync;
pub type HandlerFn = dyn Fn(&AgentRuntime, &MemoryRecord, &State, &HandlerOptions, &mut dyn FnMut(Content)) -> bool
    + Send
    + Sync;

/// Canonical form of an action identifier: uppercase, underscores for spaces.
pub fn normalize_name(name: &str) -> String {
    name.trim().to_uppercase().replace([' ', '-'], "_")
}

#[derive(Clone)]
pub struct ActionDef {
    pub name: String,
    pub similes: Vec<String>,
    pub description: String,
    validate: Arc<ValidateFn>,
    handler: Arc<HandlerFn>,
}

impl fmt::Debug for ActionDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ActionDef")
            .field("name", &self.name)
            .field("similes", &self.similes)
            .field("description", &self.description)
            .finish_non_exhaustive()
    }
}

impl ActionDef {
    /// Action that always validates and whose handler does nothing.
    pub fn new(name: impl AsRef<str>, description: impl Into<String>) -> Self {
        Self {
            name: normalize_name(name.as_ref()),
            similes: Vec::new(),
            description: description.into(),
            validate: Arc::new(|_, _| true),
            handler: Arc::new(|_, _, _, _, _| true),
        }
    }

    pub fn with_similes<I, S>(mut self, similes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.similes = similes
            .into_iter()
            .map(|s| normalize_name(s.as_ref()))
            .collect();
        self
    }

    pub fn with_validate(
        mut self,
        f: impl Fn(&AgentRuntime, &MemoryRecord) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.validate = Arc::new(f);
        self
    }

    pub fn with_handler(
        mut self,
        f: impl Fn(&AgentRuntime, &MemoryRecord, &State, &HandlerOptions, &mut dyn FnMut(Content)) -> bool
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.handler = Arc::new(f);
        self
    }

    pub fn validate(&self, runtime: &AgentRuntime, message: &MemoryRecord) -> bool {
        (self.validate)(runtime, message)
    }

    pub fn handle(
        &self,
        runtime: &AgentRuntime,
        message: &MemoryRecord,
        state: &State,
        options: &HandlerOptions,
        callback: &mut dyn FnMut(Content),
    ) -> bool {
        (self.handler)(runtime, message, state, options, callback)
    }

    /// Name followed by similes.
    pub fn identifiers(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str()).chain(self.similes.iter().map(String::as_str))
    }

    /// Text embedded for SEMANTIC matching.
    pub fn semantic_text(&self) -> String {
        let mut parts: Vec<&str> = self.identifiers().collect();
        parts.push(&self.description);
        parts.join(" ")
    }

    pub fn is_control(&self) -> bool {
        is_control_action(&self.name)
    }
}

/// NONE, IGNORE and CONTINUE steer the pipeline and are only chosen when the
/// model names them.
pub fn is_control_action(name: &str) -> bool {
    matches!(name, NONE | IGNORE | CONTINUE)
}

pub fn builtin_actions() -> Vec<ActionDef> {
    vec![
        ActionDef::new(NONE, "Reply normally without taking any further action."),
        ActionDef::new(IGNORE, "Stay silent; nothing is sent back to the user."),
        ActionDef::new(
            CONTINUE,
            "Keep talking: extend the reply with one more model completion.",
        ),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IntentSource {
    Explicit,
    Lexical,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntentCandidate {
    pub action_name: String,
    pub score: f64,
    pub source: IntentSource,
    #[serde(skip)]
    pub(crate) order: usize,
}

/// Registered action plus its cached semantic embedding.
#[derive(Debug, Clone)]
pub(crate) struct RegisteredAction {
    pub def: ActionDef,
    pub embedding: Vec<f32>,
    pub token_runs: Vec<Vec<String>>,
}

impl RegisteredAction {
    pub fn new(def: ActionDef) -> Self {
        let embedding = embed(&def.semantic_text());
        let token_runs = def.identifiers().map(tokenize).collect();
        Self {
            def,
            embedding,
            token_runs,
        }
    }
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && haystack.len() >= needle.len()
        && haystack.windows(needle.len()).any(|w| w == needle)
}

/// True when any of the action's identifiers occurs in `text` as a whole
/// run of tokens, ignoring case and `_`/space differences.
pub fn lexical_match(action: &ActionDef, text: &str) -> bool {
    let tokens = tokenize(text);
    action
        .identifiers()
        .any(|id| contains_run(&tokens, &tokenize(id)))
}

pub(crate) fn recognize(
    actions: &[RegisteredAction],
    resolve: impl Fn(&str) -> Option<usize>,
    message_text: &str,
    model_proposed: Option<&str>,
    threshold: f64,
) -> Vec<IntentCandidate> {
    let mut best: BTreeMap<usize, IntentCandidate> = BTreeMap::new();
    let mut offer = |order: usize, source: IntentSource, score: f64| {
        let candidate = IntentCandidate {
            action_name: actions[order].def.name.clone(),
            score,
            source,
            order,
        };
        best.entry(order)
            .and_modify(|c| {
                if (source, -score) < (c.source, -c.score) {
                    *c = candidate.clone();
                }
            })
            .or_insert(candidate);
    };

    if let Some(order) = model_proposed.and_then(&resolve) {
        offer(order, IntentSource::Explicit, 1.0);
    }

    let tokens = tokenize(message_text);
    if !tokens.is_empty() {
        let query = embed(message_text);
        for (order, action) in actions.iter().enumerate() {
            if action.def.is_control() {
                continue;
            }
            if action.token_runs.iter().any(|run| contains_run(&tokens, run)) {
                offer(order, IntentSource::Lexical, 1.0);
                continue;
            }
            let score = cosine(&query, &action.embedding);
            if score >= threshold {
                offer(order, IntentSource::Semantic, score);
            }
        }
    }

    let mut out: Vec<IntentCandidate> = best.into_values().collect();
    out.sort_by(|a, b| {
        a.source
            .cmp(&b.source)
            .then(b.score.total_cmp(&a.score))
            .then(a.order.cmp(&b.order))
    });
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ActionResult {
    pub action: String,
    pub success: bool,
    pub source: Option<IntentSource>,
    pub contents: Vec<Content>,
    pub diagnostic: Option<String>,
}

fn panic_text(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| (*s).to_owned())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

pub(crate) fn execute(
    runtime: &AgentRuntime,
    action: &ActionDef,
    source: Option<IntentSource>,
    message: &MemoryRecord,
    state: &State,
    options: &HandlerOptions,
) -> ActionResult {
    let mut contents = Vec::new();
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        let mut callback = |c: Content| contents.push(c);
        action.handle(runtime, message, state, options, &mut callback)
    }));
    match outcome {
        Ok(success) => ActionResult {
            action: action.name.clone(),
            success,
            source,
            diagnostic: (!success).then(|| {
                let said: Vec<&str> = contents.iter().map(|c| c.text.as_str()).collect();
                if said.is_empty() {
                    format!("{} handler reported failure", action.name)
                } else {
                    said.join(" ")
                }
            }),
            contents,
        },
        Err(payload) => ActionResult {
            action: action.name.clone(),
            success: false,
            source,
            contents: Vec::new(),
            diagnostic: Some(format!(
                "{} handler panicked: {}",
                action.name,
                panic_text(payload.as_ref())
            )),
        },
    }
}

pub(crate) fn validates(runtime: &AgentRuntime, action: &ActionDef, message: &MemoryRecord) -> bool {
    catch_unwind(AssertUnwindSafe(|| action.validate(runtime, message))).unwrap_or_else(|_| {
        runtime.warn(format!("validate for {} panicked", action.name));
        false
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap() -> ActionDef {
        ActionDef::new("EXECUTE_SWAP", "Swap tokens").with_similes([
            "SWAP_TOKENS",
            "TOKEN_SWAP",
            "TRADE_TOKENS",
        ])
    }

    #[test]
    fn lexical_is_case_and_separator_insensitive() {
        for text in ["swap_tokens", "SWAP TOKENS", "Swap Tokens", "please swap tokens now"] {
            assert!(lexical_match(&swap(), text), "{text}");
        }
        assert!(!lexical_match(&swap(), "swapping tokens"));
        assert!(!lexical_match(&swap(), "tokens swapped"));
    }

    #[test]
    fn names_are_normalized() {
        let a = ActionDef::new("execute swap", "").with_similes(["swap-tokens"]);
        assert_eq!(a.name, "EXECUTE_SWAP");
        assert_eq!(a.similes, ["SWAP_TOKENS"]);
    }

    #[test]
    fn control_actions_skip_lexical() {
        let actions: Vec<_> = builtin_actions()
            .into_iter()
            .map(RegisteredAction::new)
            .collect();
        let c = recognize(&actions, |_| None, "please ignore that and continue", None, 0.0);
        assert!(c.is_empty());
        let c = recognize(&actions, |n| (n == "IGNORE").then_some(1), "x", Some("IGNORE"), 0.55);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].source, IntentSource::Explicit);
    }
}
