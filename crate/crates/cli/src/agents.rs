//! Builds one runtime per character from resolved settings.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use agentos_core::model::HttpProvider;
use agentos_core::{
    load_character, AgentRuntime, Character, Clock, LedgerContext, ModelRegistry, PluginCatalog,
    RuntimeConfig, ScriptedProvider, SystemClock,
};
use anyhow::{bail, Context};

use crate::config::Settings;

/// Runtimes served by one process, in load order.
#[derive(Debug, Clone)]
pub struct Fleet {
    pub agents: Vec<Arc<AgentRuntime>>,
    pub ledger: Arc<LedgerContext>,
}

impl Fleet {
    pub fn find(&self, agent_id: &str) -> Option<&Arc<AgentRuntime>> {
        self.agents.iter().find(|a| a.agent_id() == agent_id)
    }

    /// Directory served under `/media`.
    pub fn media_dir(&self, settings: &Settings) -> PathBuf {
        let root = settings
            .get("MEDIA_ROOT")
            .map(PathBuf::from)
            .unwrap_or_else(|| std::env::current_dir().unwrap_or_else(|_| ".".into()));
        root.join(agentos_core::media::IMAGE_DIR)
    }

    pub fn start_clients(&self) -> anyhow::Result<()> {
        for rt in &self.agents {
            rt.start_services()
                .and_then(|()| rt.start_clients())
                .map_err(anyhow::Error::msg)
                .with_context(|| format!("starting agent {}", rt.agent_name()))?;
        }
        Ok(())
    }

    /// Stops agents in reverse load order; each flushes its store.
    pub fn shutdown(&self) -> anyhow::Result<()> {
        let mut first_err = None;
        for rt in self.agents.iter().rev() {
            if let Err(e) = rt.shutdown() {
                tracing::error!(agent = rt.agent_name(), error = %e, "shutdown failed");
                first_err.get_or_insert(e);
            }
        }
        match first_err {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }
}

/// Registers a backend for every provider id the characters ask for.
/// `MODEL_SCRIPT` (a scripted-rule JSON file) wins over `MODEL_HTTP_URL`.
pub fn model_registry(characters: &[Character], settings: &Settings) -> anyhow::Result<ModelRegistry> {
    let models = ModelRegistry::new();
    for c in characters {
        let id = c.model_provider_id.as_str();
        if models.contains(id) {
            continue;
        }
        let lookup = |key: &str| settings.get(key).or_else(|| c.settings.secrets.get(key).map(str::to_owned));
        if let Some(path) = lookup("MODEL_SCRIPT") {
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading model script {path}"))?;
            let provider = ScriptedProvider::from_json(&text)
                .with_context(|| format!("parsing model script {path}"))?;
            models.register(id, Arc::new(provider))?;
        } else if let Some(url) = lookup("MODEL_HTTP_URL") {
            let mut provider = HttpProvider::new(url);
            if let Some(key) = lookup("MODEL_API_KEY") {
                provider = provider.with_api_key(key);
            }
            if let Some(ms) = lookup("MODEL_TIMEOUT_MS") {
                let ms: u64 = ms.trim().parse().context("MODEL_TIMEOUT_MS")?;
                provider = provider.with_timeout(Duration::from_millis(ms));
            }
            models.register(id, Arc::new(provider))?;
        } else {
            bail!(
                "no backend for model provider `{id}` (character {}): set MODEL_SCRIPT or MODEL_HTTP_URL",
                c.name
            );
        }
    }
    Ok(models)
}

/// Runtime knobs that live in settings rather than the character file.
pub fn runtime_config(character: Character, settings: &Settings) -> anyhow::Result<RuntimeConfig> {
    let mut config = RuntimeConfig::new(character);
    config.settings = settings.explicit().clone();
    if let Some(v) = settings.get("DATABASE_ADAPTER") {
        config.database_adapter_id = v;
    }
    if let Some(v) = settings.get("CONVERSATION_LENGTH") {
        config.conversation_length = v.trim().parse().context("CONVERSATION_LENGTH")?;
    }
    if let Some(v) = settings.get("MIN_TRUST_THRESHOLD") {
        config.min_trust_threshold = v.trim().parse().context("MIN_TRUST_THRESHOLD")?;
    }
    if let Some(v) = settings.get("SERVER_URL") {
        config.server_url = v;
    }
    Ok(config)
}

pub fn load_characters(paths: &[PathBuf]) -> anyhow::Result<Vec<Character>> {
    paths
        .iter()
        .map(|p| load_character(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

/// Loads characters, builds and freezes one runtime each. Agents share one
/// ledger. With several agents a `MEMORY_FILE` gets a per-agent suffix.
pub fn build_fleet(paths: &[PathBuf], settings: &Settings) -> anyhow::Result<Fleet> {
    build_fleet_with_clock(paths, settings, Arc::new(SystemClock))
}

pub fn build_fleet_with_clock(
    paths: &[PathBuf],
    settings: &Settings,
    clock: Arc<dyn Clock>,
) -> anyhow::Result<Fleet> {
    if paths.is_empty() {
        bail!("at least one --character is required");
    }
    let characters = load_characters(paths)?;
    let models = Arc::new(model_registry(&characters, settings)?);
    let ledger = LedgerContext::from_settings(|k| settings.get(k)).context("building ledger")?;
    let catalog = PluginCatalog::new(ledger.clone());
    let several = characters.len() > 1;
    let mut agents: Vec<Arc<AgentRuntime>> = Vec::new();
    for character in characters {
        let name = character.name.clone();
        let mut config = runtime_config(character, settings)?;
        if several {
            if let Some(file) = settings.get("MEMORY_FILE") {
                config
                    .settings
                    .insert("MEMORY_FILE".into(), per_agent_file(Path::new(&file), &name));
            }
        }
        let rt = catalog
            .build_runtime(config, models.clone(), clock.clone())
            .with_context(|| format!("building agent {name}"))?;
        if agents.iter().any(|a| a.agent_id() == rt.agent_id()) {
            bail!("two characters resolve to agent id {} ({name})", rt.agent_id());
        }
        agents.push(rt);
    }
    Ok(Fleet { agents, ledger })
}

fn per_agent_file(path: &Path, agent: &str) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("memory");
    let safe = agentos_core::media::sanitize_filename(agent);
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}.{safe}.{ext}"),
        None => format!("{stem}.{safe}"),
    };
    path.with_file_name(name).display().to_string()
}
