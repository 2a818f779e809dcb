//! Deterministic agent runtime: pluggable actions, providers and evaluators
//! around a message pipeline, with vector memory, a simulated ledger, an
//! image plugin and a benchmark harness.

pub mod action;
pub mod catalog;
pub mod character;
pub mod clock;
pub mod evaluator;
pub mod harness;
pub mod hashing;
pub mod kernel;
pub mod ledger;
pub mod media;
pub mod memory;
pub mod model;
pub mod plugin;
pub mod provider;
pub mod social;

pub use action::{ActionDef, ActionResult, HandlerOptions, IntentCandidate, IntentSource};
pub use character::{load_character, validate_character, Character, CharacterError, Violation};
pub use clock::{Clock, ManualClock, SystemClock};
pub use evaluator::{EvaluationOutcome, EvaluatorDef, Transcript};
pub use kernel::{
    parse_completion, visible_replies, AgentReply, AgentRuntime, RuntimeConfig, RuntimeError,
    State,
};
pub use memory::{Attachment, Content, MemoryKind, MemoryRecord};
pub use model::{CompletionRequest, ModelError, ModelProvider, ModelRegistry, ScriptedProvider};
pub use plugin::{Client, PluginDef, PluginSummary, Service};
pub use provider::ProviderDef;
pub use catalog::PluginCatalog;
pub use ledger::{Ledger, LedgerContext};
