//! Named plugins a character can ask for, and a helper that builds a
//! ready runtime from a character.

use std::sync::Arc;

use crate::kernel::{AgentRuntime, RuntimeConfig, RuntimeError};
use crate::ledger::{solana_plugin, LedgerContext};
use crate::media::image_generation_plugin;
use crate::model::ModelRegistry;
use crate::plugin::{bootstrap_plugin, node_plugin, PluginDef};
use crate::social::social_plugin;
use crate::clock::Clock;

pub const PLUGIN_NAMES: [&str; 5] = ["bootstrap", "node", "solana", "imageGeneration", "social"];

/// Resolves plugin names. Every agent built from one catalog shares the
/// same ledger.
#[derive(Debug, Clone)]
pub struct PluginCatalog {
    ledger: Arc<LedgerContext>,
}

impl PluginCatalog {
    pub fn new(ledger: Arc<LedgerContext>) -> Self {
        Self { ledger }
    }

    pub fn ledger(&self) -> &Arc<LedgerContext> {
        &self.ledger
    }

    pub fn get(&self, name: &str) -> Option<PluginDef> {
        Some(match name {
            "bootstrap" => bootstrap_plugin(),
            "node" => node_plugin(),
            "solana" => solana_plugin(self.ledger.clone()),
            "imageGeneration" => image_generation_plugin(),
            "social" => social_plugin(),
            _ => return None,
        })
    }

    /// Builds a runtime, loads bootstrap plus the character's plugins and
    /// freezes it. Unknown plugin names are errors.
    pub fn build_runtime(
        &self,
        config: RuntimeConfig,
        models: Arc<ModelRegistry>,
        clock: Arc<dyn Clock>,
    ) -> Result<Arc<AgentRuntime>, RuntimeError> {
        let mut names = vec!["bootstrap".to_owned()];
        for name in &config.character.plugins {
            if !names.contains(name) {
                names.push(name.clone());
            }
        }
        let runtime = AgentRuntime::with_clock(config, models, clock)?;
        for name in &names {
            let plugin = self
                .get(name)
                .ok_or_else(|| RuntimeError::InvalidConfig(format!("unknown plugin `{name}`")))?;
            runtime.load_plugin(&plugin)?;
        }
        runtime.freeze();
        Ok(runtime)
    }
}
