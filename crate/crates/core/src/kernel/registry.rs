use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use super::RuntimeError;
use crate::action::{normalize_name, ActionDef, RegisteredAction};
use crate::evaluator::EvaluatorDef;
use crate::hashing::json_digest;
use crate::plugin::{Client, PluginDef, PluginSummary, Service};
use crate::provider::ProviderDef;

/// Component tables. Cloned, modified and swapped in whole so readers never
/// see a half-applied change.
#[derive(Clone, Default)]
pub(crate) struct Registry {
    pub actions: Vec<RegisteredAction>,
    action_index: HashMap<String, usize>,
    pub providers: Vec<ProviderDef>,
    pub evaluators: Vec<EvaluatorDef>,
    pub plugins: Vec<PluginSummary>,
    pub services: Vec<Arc<dyn Service>>,
    pub clients: Vec<Arc<dyn Client>>,
}

#[derive(Serialize)]
struct RegistryView<'a> {
    actions: Vec<(&'a str, &'a [String], &'a str)>,
    providers: Vec<&'a str>,
    evaluators: Vec<&'a str>,
    plugins: &'a [PluginSummary],
    services: Vec<&'a str>,
    clients: Vec<&'a str>,
}

impl Registry {
    pub fn resolve(&self, name: &str) -> Option<usize> {
        self.action_index.get(&normalize_name(name)).copied()
    }

    pub fn action(&self, name: &str) -> Option<&ActionDef> {
        self.resolve(name).map(|i| &self.actions[i].def)
    }

    pub fn add_action(&mut self, action: ActionDef) -> Result<(), RuntimeError> {
        if action.name.is_empty() {
            return Err(RuntimeError::InvalidComponent("action name is empty".into()));
        }
        let ids: Vec<String> = action.identifiers().map(str::to_owned).collect();
        for (i, id) in ids.iter().enumerate() {
            if self.action_index.contains_key(id) || ids[..i].contains(id) {
                return Err(RuntimeError::DuplicateActionName(id.clone()));
            }
        }
        let order = self.actions.len();
        for id in ids {
            self.action_index.insert(id, order);
        }
        self.actions.push(RegisteredAction::new(action));
        Ok(())
    }

    pub fn add_provider(&mut self, provider: ProviderDef) -> Result<(), RuntimeError> {
        if provider.name.is_empty() {
            return Err(RuntimeError::InvalidComponent("provider name is empty".into()));
        }
        if self.providers.iter().any(|p| p.name == provider.name) {
            return Err(RuntimeError::DuplicateProviderName(provider.name));
        }
        self.providers.push(provider);
        Ok(())
    }

    pub fn add_evaluator(&mut self, evaluator: EvaluatorDef) -> Result<(), RuntimeError> {
        if evaluator.name.is_empty() {
            return Err(RuntimeError::InvalidComponent("evaluator name is empty".into()));
        }
        if self.evaluators.iter().any(|e| e.name == evaluator.name) {
            return Err(RuntimeError::DuplicateEvaluatorName(evaluator.name));
        }
        self.evaluators.push(evaluator);
        Ok(())
    }

    /// Applies every component of `plugin`; on error `self` may be partially
    /// modified, so callers work on a copy.
    pub fn add_plugin(&mut self, plugin: &PluginDef) -> Result<(), RuntimeError> {
        let conflict = |component: String| RuntimeError::PluginConflict {
            plugin: plugin.name.clone(),
            component,
        };
        if plugin.name.is_empty() {
            return Err(RuntimeError::InvalidComponent("plugin name is empty".into()));
        }
        if self.plugins.iter().any(|p| p.name == plugin.name) {
            return Err(conflict(plugin.name.clone()));
        }
        for action in &plugin.actions {
            self.add_action(action.clone()).map_err(|e| match e {
                RuntimeError::DuplicateActionName(n) => conflict(n),
                other => other,
            })?;
        }
        for provider in &plugin.providers {
            self.add_provider(provider.clone())
                .map_err(|_| conflict(provider.name.clone()))?;
        }
        for evaluator in &plugin.evaluators {
            self.add_evaluator(evaluator.clone())
                .map_err(|_| conflict(evaluator.name.clone()))?;
        }
        for service in &plugin.services {
            if self.services.iter().any(|s| s.name() == service.name()) {
                return Err(conflict(service.name().to_owned()));
            }
            self.services.push(service.clone());
        }
        for client in &plugin.clients {
            if self.clients.iter().any(|c| c.name() == client.name()) {
                return Err(conflict(client.name().to_owned()));
            }
            self.clients.push(client.clone());
        }
        self.plugins.push(plugin.summary());
        Ok(())
    }

    pub fn digest(&self) -> String {
        json_digest(&RegistryView {
            actions: self
                .actions
                .iter()
                .map(|a| {
                    (
                        a.def.name.as_str(),
                        a.def.similes.as_slice(),
                        a.def.description.as_str(),
                    )
                })
                .collect(),
            providers: self.providers.iter().map(|p| p.name.as_str()).collect(),
            evaluators: self.evaluators.iter().map(|e| e.name.as_str()).collect(),
            plugins: &self.plugins,
            services: self.services.iter().map(|s| s.name()).collect(),
            clients: self.clients.iter().map(|c| c.name()).collect(),
        })
    }
}
