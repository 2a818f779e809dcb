//! The agent runtime: component registries, state composition and the
//! message pipeline.

mod registry;
mod state;

pub use state::{render_template, State, DEFAULT_MESSAGE_TEMPLATE};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::Serialize;
use thiserror::Error;
use uuid::Uuid;

use crate::action::{
    self, ActionDef, ActionResult, HandlerOptions, IntentCandidate, CONTINUE,
    DEFAULT_INTENT_THRESHOLD, NONE,
};
use crate::character::{validate_character, Character, Violation};
use crate::clock::{Clock, SystemClock};
use crate::evaluator::{run_isolated, EvaluationOutcome, EvaluatorDef, Transcript};
use crate::hashing::json_digest;
use crate::memory::{
    open_adapter, Attachment, Content, Goal, GoalBook, MemoryAdapter, MemoryError, MemoryKind,
    MemoryRecord, RecordFilter, Relationship, RelationshipBook,
};
use crate::model::{CompletionRequest, ModelError, ModelRegistry};
use crate::plugin::{PluginDef, PluginSummary};
use crate::provider::ProviderDef;
use registry::Registry;

pub const DEFAULT_CONVERSATION_LENGTH: usize = 32;
pub const DEFAULT_SERVER_URL: &str = "http://localhost:7998";
pub const DEFAULT_MIN_TRUST_THRESHOLD: f64 = 50.0;
pub const DEFAULT_FALLBACK_TEXT: &str = "I am unable to respond right now.";
pub const DEFAULT_RETRIEVAL_K: usize = 5;
/// Room holding FACT records ingested from the character's knowledge list.
pub const KNOWLEDGE_ROOM: &str = "knowledge";

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("unknown model provider `{0}`")]
    UnknownModelProvider(String),
    #[error("invalid character: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidCharacter(Vec<Violation>),
    #[error("invalid runtime config: {0}")]
    InvalidConfig(String),
    #[error("failed to open database adapter: {0}")]
    AdapterOpenFailure(String),
    #[error("action name or simile `{0}` already registered")]
    DuplicateActionName(String),
    #[error("provider `{0}` already registered")]
    DuplicateProviderName(String),
    #[error("evaluator `{0}` already registered")]
    DuplicateEvaluatorName(String),
    #[error("invalid component: {0}")]
    InvalidComponent(String),
    #[error("plugin `{plugin}` conflicts on `{component}`")]
    PluginConflict { plugin: String, component: String },
    #[error("runtime registries are frozen")]
    RuntimeFrozen,
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    /// Defaults to a name-derived UUID.
    pub agent_id: Option<String>,
    /// Defaults to the character's `modelProvider`.
    pub model_provider_id: Option<String>,
    pub character: Character,
    pub database_adapter_id: String,
    pub conversation_length: usize,
    pub server_url: String,
    pub min_trust_threshold: f64,
    pub settings: BTreeMap<String, String>,
    /// Consult the process environment in [`AgentRuntime::get_setting`].
    pub use_process_env: bool,
}

impl RuntimeConfig {
    pub fn new(character: Character) -> Self {
        Self {
            agent_id: None,
            model_provider_id: None,
            character,
            database_adapter_id: "memory".into(),
            conversation_length: DEFAULT_CONVERSATION_LENGTH,
            server_url: DEFAULT_SERVER_URL.into(),
            min_trust_threshold: DEFAULT_MIN_TRUST_THRESHOLD,
            settings: BTreeMap::new(),
            use_process_env: true,
        }
    }

    pub fn with_setting(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.settings.insert(key.into(), value.into());
        self
    }
}

/// One message sent back to the user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentReply {
    pub text: String,
    pub action: Option<String>,
    pub attachments: Vec<Attachment>,
}

impl AgentReply {
    pub fn is_ignored(&self) -> bool {
        self.action.as_deref() == Some(action::IGNORE)
    }
}

/// Replies a client should actually deliver (IGNORE replies are dropped).
pub fn visible_replies(replies: &[AgentReply]) -> Vec<AgentReply> {
    replies.iter().filter(|r| !r.is_ignored()).cloned().collect()
}

/// Splits a completion into reply text and the action named on its final
/// line (`... ACTION: NAME`).
pub fn parse_completion(text: &str) -> (String, Option<String>) {
    let trimmed = text.trim_end();
    let (head, last) = match trimmed.rfind('\n') {
        Some(i) => (&trimmed[..i], &trimmed[i + 1..]),
        None => ("", trimmed),
    };
    let upper = last.to_ascii_uppercase();
    if let Some(pos) = upper.rfind("ACTION:") {
        let name = last[pos + "ACTION:".len()..].trim();
        let valid = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_');
        let boundary = pos == 0 || !last.as_bytes()[pos - 1].is_ascii_alphanumeric();
        if valid && boundary {
            let before = last[..pos].trim_end();
            let body = match (head.is_empty(), before.is_empty()) {
                (true, _) => before.to_owned(),
                (false, true) => head.trim_end().to_owned(),
                (false, false) => format!("{head}\n{before}"),
            };
            return (body, Some(name.to_ascii_uppercase()));
        }
    }
    (trimmed.to_owned(), None)
}

pub struct AgentRuntime {
    agent_id: String,
    config: RuntimeConfig,
    model_provider_id: String,
    models: Arc<ModelRegistry>,
    clock: Arc<dyn Clock>,
    store: Box<dyn MemoryAdapter>,
    goals: RwLock<GoalBook>,
    relationships: RwLock<RelationshipBook>,
    registry: RwLock<Arc<Registry>>,
    frozen: AtomicBool,
    lanes: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    next_seq: AtomicU64,
    warnings: Mutex<Vec<String>>,
    last_state: Mutex<Option<State>>,
    started_services: Mutex<Vec<String>>,
    started_clients: Mutex<Vec<String>>,
}

impl std::fmt::Debug for AgentRuntime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentRuntime")
            .field("agent_id", &self.agent_id)
            .field("name", &self.config.character.name)
            .field("model_provider_id", &self.model_provider_id)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize)]
struct StoreDigest<'a> {
    records: String,
    goals: &'a GoalBook,
    relationships: &'a RelationshipBook,
}

impl AgentRuntime {
    pub fn new(
        config: RuntimeConfig,
        models: Arc<ModelRegistry>,
    ) -> Result<Arc<Self>, RuntimeError> {
        Self::with_clock(config, models, Arc::new(SystemClock))
    }

    pub fn with_clock(
        config: RuntimeConfig,
        models: Arc<ModelRegistry>,
        clock: Arc<dyn Clock>,
    ) -> Result<Arc<Self>, RuntimeError> {
        let doc = serde_json::to_value(&config.character).expect("character serializes");
        let violations = validate_character(&doc);
        if !violations.is_empty() {
            return Err(RuntimeError::InvalidCharacter(violations));
        }
        if config.conversation_length == 0 {
            return Err(RuntimeError::InvalidConfig(
                "conversation_length must be at least 1".into(),
            ));
        }
        if !(0.0..=100.0).contains(&config.min_trust_threshold) {
            return Err(RuntimeError::InvalidConfig(
                "min_trust_threshold must lie in [0, 100]".into(),
            ));
        }
        let model_provider_id = config
            .model_provider_id
            .clone()
            .unwrap_or_else(|| config.character.model_provider_id.clone());
        if !models.contains(&model_provider_id) {
            return Err(RuntimeError::UnknownModelProvider(model_provider_id));
        }
        let agent_id = config.agent_id.clone().unwrap_or_else(|| {
            Uuid::new_v5(
                &Uuid::NAMESPACE_OID,
                format!("agent:{}", config.character.name).as_bytes(),
            )
            .to_string()
        });

        let mut registry = Registry::default();
        for builtin in action::builtin_actions() {
            registry.add_action(builtin)?;
        }

        let mut runtime = Self {
            agent_id,
            model_provider_id,
            models,
            clock,
            store: Box::new(crate::memory::InMemoryAdapter::new()),
            goals: RwLock::default(),
            relationships: RwLock::default(),
            registry: RwLock::new(Arc::new(registry)),
            frozen: AtomicBool::new(false),
            lanes: Mutex::default(),
            next_seq: AtomicU64::new(0),
            warnings: Mutex::default(),
            last_state: Mutex::default(),
            started_services: Mutex::default(),
            started_clients: Mutex::default(),
            config,
        };
        let file = runtime.get_setting("MEMORY_FILE").map(PathBuf::from);
        runtime.store = open_adapter(&runtime.config.database_adapter_id, file.as_deref())
            .map_err(|e| RuntimeError::AdapterOpenFailure(e.to_string()))?;
        runtime
            .next_seq
            .store(runtime.store.count() as u64, Ordering::SeqCst);
        runtime.ingest_knowledge()?;
        Ok(Arc::new(runtime))
    }

    fn ingest_knowledge(&self) -> Result<(), RuntimeError> {
        let filter = RecordFilter::room(KNOWLEDGE_ROOM).with_kind(MemoryKind::Fact);
        let mut existing: BTreeSet<String> = self
            .store
            .list(&filter)
            .into_iter()
            .map(|r| r.content.text)
            .collect();
        for item in &self.config.character.knowledge {
            if item.trim().is_empty() || !existing.insert(item.clone()) {
                continue;
            }
            let record = self.new_record(
                &self.agent_id,
                KNOWLEDGE_ROOM,
                MemoryKind::Fact,
                Content::text(item.clone()),
            );
            self.store.store(record)?;
        }
        Ok(())
    }

    pub fn agent_id(&self) -> &str {
        &self.agent_id
    }

    pub fn agent_name(&self) -> &str {
        &self.config.character.name
    }

    pub fn character(&self) -> &Character {
        &self.config.character
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.config
    }

    pub fn model_provider_id(&self) -> &str {
        &self.model_provider_id
    }

    pub fn conversation_length(&self) -> usize {
        self.config.conversation_length
    }

    pub fn min_trust_threshold(&self) -> f64 {
        self.config.min_trust_threshold
    }

    pub fn server_url(&self) -> &str {
        &self.config.server_url
    }

    pub fn store(&self) -> &dyn MemoryAdapter {
        self.store.as_ref()
    }

    pub fn now_ms(&self) -> i64 {
        self.clock.now_ms()
    }

    /// Looks `key` up in explicit settings, then the process environment,
    /// then the character's secrets.
    pub fn get_setting(&self, key: &str) -> Option<String> {
        if let Some(v) = self.config.settings.get(key) {
            return Some(v.clone());
        }
        if self.config.use_process_env {
            if let Ok(v) = std::env::var(key) {
                return Some(v);
            }
        }
        self.config
            .character
            .settings
            .secrets
            .get(key)
            .map(str::to_owned)
    }

    pub fn warn(&self, message: impl Into<String>) {
        let message = message.into();
        tracing::warn!(agent = %self.agent_name(), "{message}");
        self.warnings.lock().unwrap().push(message);
    }

    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().unwrap().clone()
    }

    pub fn complete(&self, request: CompletionRequest) -> Result<String, ModelError> {
        self.models.complete(&self.model_provider_id, &request)
    }

    // ---- records ----

    fn next_id(&self) -> String {
        let seq = self.next_seq.fetch_add(1, Ordering::SeqCst);
        Uuid::new_v5(
            &Uuid::NAMESPACE_OID,
            format!("{}/{seq}", self.agent_id).as_bytes(),
        )
        .to_string()
    }

    /// Fresh record stamped with the next id and the current time.
    pub fn new_record(
        &self,
        user_id: &str,
        room_id: &str,
        kind: MemoryKind,
        content: Content,
    ) -> MemoryRecord {
        MemoryRecord::new(
            self.next_id(),
            &self.agent_id,
            user_id,
            room_id,
            kind,
            content,
            self.clock.now_ms(),
        )
    }

    /// Incoming user message, not yet stored.
    pub fn new_message(&self, user_id: &str, room_id: &str, text: &str) -> MemoryRecord {
        self.new_record(user_id, room_id, MemoryKind::Message, Content::text(text))
    }

    pub fn remember(&self, record: MemoryRecord) -> Result<(), RuntimeError> {
        Ok(self.store.store(record)?)
    }

    pub fn create_goal(&self, goal: Goal) -> Goal {
        self.goals.write().unwrap().create_goal(goal)
    }

    pub fn update_objective(
        &self,
        goal_id: &str,
        index: usize,
        completed: bool,
    ) -> Result<Goal, RuntimeError> {
        Ok(self
            .goals
            .write()
            .unwrap()
            .update_objective(goal_id, index, completed)?)
    }

    pub fn goal(&self, goal_id: &str) -> Option<Goal> {
        self.goals.read().unwrap().get(goal_id).cloned()
    }

    pub fn goals_in_room(&self, room_id: &str) -> Vec<Goal> {
        self.goals.read().unwrap().in_room(room_id).cloned().collect()
    }

    pub fn upsert_relationship(&self, a: &str, b: &str, delta: f64) -> Relationship {
        self.relationships
            .write()
            .unwrap()
            .upsert(a, b, delta, self.clock.now_ms())
    }

    pub fn relationship(&self, a: &str, b: &str) -> Option<Relationship> {
        self.relationships.read().unwrap().get(a, b).cloned()
    }

    /// Digest over every record, goal and relationship.
    pub fn store_digest(&self) -> String {
        let goals = self.goals.read().unwrap();
        let relationships = self.relationships.read().unwrap();
        json_digest(&StoreDigest {
            records: self.store.digest(),
            goals: &goals,
            relationships: &relationships,
        })
    }

    pub fn flush(&self) -> Result<(), RuntimeError> {
        Ok(self.store.flush()?)
    }

    // ---- registries ----

    fn snapshot(&self) -> Arc<Registry> {
        self.registry.read().unwrap().clone()
    }

    fn mutate_registry(
        &self,
        f: impl FnOnce(&mut Registry) -> Result<(), RuntimeError>,
    ) -> Result<(), RuntimeError> {
        let mut guard = self.registry.write().unwrap();
        if self.frozen.load(Ordering::SeqCst) {
            return Err(RuntimeError::RuntimeFrozen);
        }
        let mut next = Registry::clone(&guard);
        f(&mut next)?;
        *guard = Arc::new(next);
        Ok(())
    }

    pub fn register_action(&self, action: ActionDef) -> Result<(), RuntimeError> {
        self.mutate_registry(|r| r.add_action(action))
    }

    pub fn register_provider(&self, provider: ProviderDef) -> Result<(), RuntimeError> {
        self.mutate_registry(|r| r.add_provider(provider))
    }

    pub fn register_evaluator(&self, evaluator: EvaluatorDef) -> Result<(), RuntimeError> {
        self.mutate_registry(|r| r.add_evaluator(evaluator))
    }

    /// Registers all of the plugin's components or, on any conflict, none.
    pub fn load_plugin(&self, plugin: &PluginDef) -> Result<(), RuntimeError> {
        self.mutate_registry(|r| r.add_plugin(plugin))
    }

    pub fn list_plugins(&self) -> Vec<PluginSummary> {
        self.snapshot().plugins.clone()
    }

    pub fn freeze(&self) {
        let _guard = self.registry.write().unwrap();
        self.frozen.store(true, Ordering::SeqCst);
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen.load(Ordering::SeqCst)
    }

    pub fn registry_digest(&self) -> String {
        self.snapshot().digest()
    }

    /// Canonical action name for a name or simile.
    pub fn resolve_action(&self, name: &str) -> Option<String> {
        let registry = self.snapshot();
        registry.action(name).map(|a| a.name.clone())
    }

    pub fn action_names(&self) -> Vec<String> {
        self.snapshot()
            .actions
            .iter()
            .map(|a| a.def.name.clone())
            .collect()
    }

    pub fn provider_names(&self) -> Vec<String> {
        self.snapshot()
            .providers
            .iter()
            .map(|p| p.name.clone())
            .collect()
    }

    pub fn evaluator_names(&self) -> Vec<String> {
        self.snapshot()
            .evaluators
            .iter()
            .map(|e| e.name.clone())
            .collect()
    }

    pub fn service_names(&self) -> Vec<String> {
        self.snapshot()
            .services
            .iter()
            .map(|s| s.name().to_owned())
            .collect()
    }

    pub fn client_names(&self) -> Vec<String> {
        self.snapshot()
            .clients
            .iter()
            .map(|c| c.name().to_owned())
            .collect()
    }

    pub fn client(&self, name: &str) -> Option<Arc<dyn crate::plugin::Client>> {
        self.snapshot()
            .clients
            .iter()
            .find(|c| c.name() == name)
            .cloned()
    }

    // ---- lifecycle ----

    /// Starts every registered service in load order.
    pub fn start_services(self: &Arc<Self>) -> Result<(), String> {
        let registry = self.snapshot();
        let mut started = self.started_services.lock().unwrap();
        for service in &registry.services {
            if started.iter().any(|s| s == service.name()) {
                continue;
            }
            service.start(self)?;
            started.push(service.name().to_owned());
        }
        Ok(())
    }

    /// Starts the registered clients named in the character's `clients`.
    pub fn start_clients(self: &Arc<Self>) -> Result<(), String> {
        let registry = self.snapshot();
        let mut started = self.started_clients.lock().unwrap();
        for client in &registry.clients {
            let wanted = self.config.character.clients.iter().any(|c| c == client.name());
            if !wanted || started.iter().any(|s| s == client.name()) {
                continue;
            }
            client.start(self)?;
            started.push(client.name().to_owned());
        }
        Ok(())
    }

    pub fn running_clients(&self) -> Vec<String> {
        self.started_clients.lock().unwrap().clone()
    }

    /// Stops clients then services, each in reverse start order, and
    /// flushes the store.
    pub fn shutdown(&self) -> Result<(), RuntimeError> {
        let registry = self.snapshot();
        let clients: Vec<String> = std::mem::take(&mut *self.started_clients.lock().unwrap());
        for name in clients.iter().rev() {
            if let Some(c) = registry.clients.iter().find(|c| c.name() == name) {
                c.stop();
            }
        }
        let services: Vec<String> = std::mem::take(&mut *self.started_services.lock().unwrap());
        for name in services.iter().rev() {
            if let Some(s) = registry.services.iter().find(|s| s.name() == name) {
                s.stop();
            }
        }
        self.flush()
    }

    // ---- pipeline ----

    fn lane(&self, room_id: &str) -> Arc<Mutex<()>> {
        self.lanes
            .lock()
            .unwrap()
            .entry(room_id.to_owned())
            .or_default()
            .clone()
    }

    pub fn intent_threshold(&self) -> f64 {
        self.get_setting("INTENT_THRESHOLD")
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_INTENT_THRESHOLD)
    }

    fn retrieval_k(&self) -> usize {
        self.get_setting("MEMORY_TOP_K")
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_RETRIEVAL_K)
    }

    /// Recent room history, provider output, similar memories and the
    /// action catalog for `incoming`.
    pub fn compose_state(&self, incoming: &MemoryRecord) -> State {
        let registry = self.snapshot();
        let character = &self.config.character;
        let limit = self.config.conversation_length;

        let mut recent = self.store.recent(&incoming.room_id, limit);
        if incoming.kind == MemoryKind::Message && self.store.get(&incoming.id).is_none() {
            recent.push(incoming.clone());
            if recent.len() > limit {
                recent.remove(0);
            }
        }

        let filter = RecordFilter {
            rooms: vec![incoming.room_id.clone(), KNOWLEDGE_ROOM.to_owned()],
            kinds: Vec::new(),
        };
        let k = self.retrieval_k();
        let mut retrieved = self
            .store
            .search_similar(&incoming.embedding, k + 1, 0.0, &filter);
        retrieved.retain(|m| m.record.id != incoming.id);
        retrieved.truncate(k);

        let mut extra = BTreeMap::new();
        extra.insert("message".into(), incoming.content.text.clone());
        extra.insert("senderId".into(), incoming.user_id.clone());
        extra.insert("roomId".into(), incoming.room_id.clone());
        extra.insert("agentId".into(), self.agent_id.clone());
        extra.insert("lore".into(), character.lore.join("\n"));
        extra.insert("topics".into(), character.topics.join(", "));
        extra.insert("adjectives".into(), character.adjectives.join(", "));
        extra.insert(
            "style".into(),
            character
                .style
                .all
                .iter()
                .chain(&character.style.chat)
                .cloned()
                .collect::<Vec<_>>()
                .join("\n"),
        );

        let mut state = State {
            agent_name: character.name.clone(),
            bio_excerpt: character.bio.join(" "),
            recent_messages: recent,
            provider_outputs: Vec::with_capacity(registry.providers.len()),
            retrieved_memories: retrieved,
            available_actions: registry
                .actions
                .iter()
                .map(|a| (a.def.name.clone(), a.def.description.clone()))
                .collect(),
            extra,
        };

        for provider in &registry.providers {
            let output = catch_unwind(AssertUnwindSafe(|| provider.get(self, incoming, &state)));
            let text = match output {
                Ok(Ok(text)) => text,
                Ok(Err(e)) => {
                    self.warn(format!("provider {} failed: {e}", provider.name));
                    String::new()
                }
                Err(_) => {
                    self.warn(format!("provider {} panicked", provider.name));
                    String::new()
                }
            };
            state.provider_outputs.push((provider.name.clone(), text));
        }
        state
    }

    pub fn render(&self, template: &str, state: &State) -> String {
        let (text, warnings) = render_template(template, state);
        for w in warnings {
            self.warn(w);
        }
        text
    }

    /// Ranked intent candidates for a message.
    pub fn recognize_intent(
        &self,
        message_text: &str,
        model_proposed: Option<&str>,
        _state: &State,
    ) -> Vec<IntentCandidate> {
        let registry = self.snapshot();
        action::recognize(
            &registry.actions,
            |name| registry.resolve(name),
            message_text,
            model_proposed,
            self.intent_threshold(),
        )
    }

    /// The action [`AgentRuntime::select_and_execute`] would run for these
    /// candidates, without running it.
    pub fn route(&self, candidates: &[IntentCandidate], message: &MemoryRecord) -> String {
        let registry = self.snapshot();
        candidates
            .iter()
            .filter_map(|c| registry.action(&c.action_name))
            .find(|a| action::validates(self, a, message))
            .map_or_else(|| NONE.to_owned(), |a| a.name.clone())
    }

    /// Executes the first candidate whose validation passes, or NONE.
    pub fn select_and_execute(
        &self,
        candidates: &[IntentCandidate],
        message: &MemoryRecord,
        state: &State,
        options: &HandlerOptions,
    ) -> ActionResult {
        let registry = self.snapshot();
        for candidate in candidates {
            let Some(action) = registry.action(&candidate.action_name) else {
                continue;
            };
            if action::validates(self, action, message) {
                return action::execute(self, action, Some(candidate.source), message, state, options);
            }
        }
        let none = registry.action(NONE).expect("NONE is always registered");
        action::execute(self, none, None, message, state, options)
    }

    /// Runs every evaluator whose `should_run` passes, in registration
    /// order, and persists the outcomes.
    pub fn run_evaluators(&self, message: &MemoryRecord, state: &State) -> Vec<EvaluationOutcome> {
        let registry = self.snapshot();
        let transcript = Transcript {
            room_id: message.room_id.clone(),
            messages: self
                .store
                .recent(&message.room_id, self.config.conversation_length),
        };
        let sources: Vec<String> = match transcript.messages.iter().position(|m| m.id == message.id)
        {
            Some(i) => transcript.messages[i..].iter().map(|m| m.id.clone()).collect(),
            None => vec![message.id.clone()],
        };
        let mut all = Vec::new();
        for evaluator in &registry.evaluators {
            let should = catch_unwind(AssertUnwindSafe(|| evaluator.should_run(message, state)))
                .unwrap_or(false);
            if !should {
                continue;
            }
            let Some(outcomes) = run_isolated(self, evaluator, &transcript) else {
                continue;
            };
            for outcome in outcomes {
                if self.persist_outcome(&outcome, &message.room_id, &sources) {
                    all.push(outcome);
                }
            }
        }
        all
    }

    fn persist_outcome(&self, outcome: &EvaluationOutcome, room_id: &str, sources: &[String]) -> bool {
        let memory = |kind: MemoryKind, text: &str| {
            if text.trim().is_empty() {
                return false;
            }
            if kind == MemoryKind::Fact {
                let dup = self
                    .store
                    .list(&RecordFilter::room(room_id).with_kind(MemoryKind::Fact))
                    .iter()
                    .any(|r| r.content.text == text);
                if dup {
                    return false;
                }
            }
            let mut content = Content::text(text);
            content.sources = sources.to_vec();
            let record = self.new_record(&self.agent_id, room_id, kind, content);
            match self.store.store(record) {
                Ok(()) => true,
                Err(e) => {
                    self.warn(format!("failed to persist evaluator output: {e}"));
                    false
                }
            }
        };
        match outcome {
            EvaluationOutcome::Fact { text } => memory(MemoryKind::Fact, text),
            EvaluationOutcome::Reflection { text } => memory(MemoryKind::Reflection, text),
            EvaluationOutcome::GoalUpdate {
                goal_id,
                objective_index,
                completed,
            } => match self.update_objective(goal_id, *objective_index, *completed) {
                Ok(_) => true,
                Err(e) => {
                    self.warn(format!("goal update rejected: {e}"));
                    false
                }
            },
        }
    }

    /// The composed state of the most recently processed message.
    pub fn last_state(&self) -> Option<State> {
        self.last_state.lock().unwrap().clone()
    }

    fn message_template(&self) -> String {
        self.get_setting("MESSAGE_TEMPLATE")
            .unwrap_or_else(|| DEFAULT_MESSAGE_TEMPLATE.to_owned())
    }

    fn persist_reply(&self, room_id: &str, reply: &AgentReply) -> Result<String, RuntimeError> {
        let content = Content {
            text: reply.text.clone(),
            action: reply.action.clone(),
            attachments: reply.attachments.clone(),
            sources: Vec::new(),
        };
        let record = self.new_record(&self.agent_id, room_id, MemoryKind::Message, content);
        let id = record.id.clone();
        self.store.store(record)?;
        Ok(id)
    }

    /// Full pipeline for one incoming message: persist, compose state,
    /// prompt the model, resolve and run an action, persist the replies,
    /// then run evaluators.
    pub fn process_message(&self, incoming: MemoryRecord) -> Result<Vec<AgentReply>, RuntimeError> {
        if incoming.content.text.trim().is_empty() {
            return Err(RuntimeError::InvalidMessage("text is empty".into()));
        }
        if incoming.room_id.is_empty() || incoming.user_id.is_empty() {
            return Err(RuntimeError::InvalidMessage("room and user ids are required".into()));
        }
        let lane = self.lane(&incoming.room_id);
        let _serial = lane.lock().unwrap_or_else(|p| p.into_inner());

        if self.store.get(&incoming.id).is_none() {
            self.store.store(incoming.clone())?;
        }
        self.upsert_relationship(&incoming.user_id, &self.agent_id, 0.01);

        let state = self.compose_state(&incoming);
        *self.last_state.lock().unwrap() = Some(state.clone());
        let prompt = self.render(&self.message_template(), &state);

        let completion = match self.complete(CompletionRequest::new(prompt.clone())) {
            Ok(text) => text,
            Err(e) => {
                self.warn(format!("model completion failed: {e}"));
                let reply = AgentReply {
                    text: self
                        .get_setting("FALLBACK_TEXT")
                        .unwrap_or_else(|| DEFAULT_FALLBACK_TEXT.to_owned()),
                    action: None,
                    attachments: Vec::new(),
                };
                self.persist_reply(&incoming.room_id, &reply)?;
                return Ok(vec![reply]);
            }
        };
        let (mut text, proposed) = parse_completion(&completion);

        let candidates = self.recognize_intent(&incoming.content.text, proposed.as_deref(), &state);
        let mut options = HandlerOptions::new();
        options.insert("modelText".into(), text.clone());
        if let Some(p) = &proposed {
            options.insert("proposedAction".into(), p.clone());
        }
        let result = self.select_and_execute(&candidates, &incoming, &state, &options);

        if result.action == CONTINUE && result.success {
            match self.complete(CompletionRequest::new(prompt)) {
                Ok(more) => {
                    let (more, _) = parse_completion(&more);
                    if !more.is_empty() {
                        text = if text.is_empty() { more } else { format!("{text}\n{more}") };
                    }
                }
                Err(e) => self.warn(format!("continuation failed: {e}")),
            }
        }

        let mut replies = vec![AgentReply {
            text,
            action: Some(result.action.clone()),
            attachments: Vec::new(),
        }];
        if result.success {
            replies.extend(result.contents.iter().map(|c| AgentReply {
                text: c.text.clone(),
                action: None,
                attachments: c.attachments.clone(),
            }));
        } else {
            replies.push(AgentReply {
                text: format!(
                    "Action {} failed: {}",
                    result.action,
                    result.diagnostic.as_deref().unwrap_or("unknown error")
                ),
                action: None,
                attachments: Vec::new(),
            });
        }
        for reply in &replies {
            self.persist_reply(&incoming.room_id, reply)?;
        }
        self.run_evaluators(&incoming, &state);
        Ok(replies)
    }
}
