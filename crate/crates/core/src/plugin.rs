//! Plugins bundle actions, providers, evaluators, services and clients and
//! register them all-or-nothing.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::Serialize;

use crate::action::ActionDef;
use crate::evaluator::{fact_evaluator, goal_evaluator, EvaluatorDef};
use crate::kernel::AgentRuntime;
use crate::provider::{boredom_provider, facts_provider, time_provider, ProviderDef};

/// Long-lived background component. `start` and `stop` must be idempotent.
pub trait Service: Send + Sync {
    fn name(&self) -> &str;
    fn start(&self, runtime: &Arc<AgentRuntime>) -> Result<(), String>;
    fn stop(&self);
}

/// Delivers messages from some channel into the runtime and replies back.
pub trait Client: Send + Sync {
    fn name(&self) -> &str;
    fn start(&self, runtime: &Arc<AgentRuntime>) -> Result<(), String>;
    fn stop(&self);
    fn is_running(&self) -> bool;
}

#[derive(Clone, Default)]
pub struct PluginDef {
    pub name: String,
    pub description: String,
    pub actions: Vec<ActionDef>,
    pub providers: Vec<ProviderDef>,
    pub evaluators: Vec<EvaluatorDef>,
    pub services: Vec<Arc<dyn Service>>,
    pub clients: Vec<Arc<dyn Client>>,
}

impl fmt::Debug for PluginDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PluginDef")
            .field("name", &self.name)
            .field("actions", &self.actions.len())
            .field("providers", &self.providers.len())
            .field("evaluators", &self.evaluators.len())
            .field("services", &self.services.len())
            .field("clients", &self.clients.len())
            .finish()
    }
}

impl PluginDef {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            ..Self::default()
        }
    }

    pub fn with_action(mut self, action: ActionDef) -> Self {
        self.actions.push(action);
        self
    }

    pub fn with_provider(mut self, provider: ProviderDef) -> Self {
        self.providers.push(provider);
        self
    }

    pub fn with_evaluator(mut self, evaluator: EvaluatorDef) -> Self {
        self.evaluators.push(evaluator);
        self
    }

    pub fn with_service(mut self, service: Arc<dyn Service>) -> Self {
        self.services.push(service);
        self
    }

    pub fn with_client(mut self, client: Arc<dyn Client>) -> Self {
        self.clients.push(client);
        self
    }

    pub fn summary(&self) -> PluginSummary {
        PluginSummary {
            name: self.name.clone(),
            description: self.description.clone(),
            actions: self.actions.len(),
            providers: self.providers.len(),
            evaluators: self.evaluators.len(),
            services: self.services.len(),
            clients: self.clients.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PluginSummary {
    pub name: String,
    pub description: String,
    pub actions: usize,
    pub providers: usize,
    pub evaluators: usize,
    pub services: usize,
    pub clients: usize,
}

/// Time, facts and boredom providers plus the fact and goal evaluators.
pub fn bootstrap_plugin() -> PluginDef {
    PluginDef::new("bootstrap", "Core providers and evaluators")
        .with_provider(time_provider())
        .with_provider(facts_provider())
        .with_provider(boredom_provider())
        .with_evaluator(fact_evaluator())
        .with_evaluator(goal_evaluator())
}

/// Placeholder for a service whose backend is not part of this build.
#[derive(Debug)]
pub struct StubService {
    name: String,
    running: AtomicBool,
}

impl StubService {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            running: AtomicBool::new(false),
        }
    }

    pub fn is_running(&self) -> bool {
        self.running.load(Ordering::SeqCst)
    }

    pub fn invoke(&self, _request: &str) -> Result<String, String> {
        Err(format!("{} is unimplemented", self.name))
    }
}

impl Service for StubService {
    fn name(&self) -> &str {
        &self.name
    }

    fn start(&self, _runtime: &Arc<AgentRuntime>) -> Result<(), String> {
        self.running.store(true, Ordering::SeqCst);
        Ok(())
    }

    fn stop(&self) {
        self.running.store(false, Ordering::SeqCst);
    }
}

pub const NODE_SERVICES: [&str; 8] = [
    "browser",
    "image_description",
    "llama",
    "pdf",
    "speech",
    "transcription",
    "video",
    "aws_s3",
];

/// Default node services, all stubs.
pub fn node_plugin() -> PluginDef {
    NODE_SERVICES.iter().fold(
        PluginDef::new("node", "Default plugin with basic services"),
        |p, name| p.with_service(Arc::new(StubService::new(*name))),
    )
}
