//! Benchmark harness: the basic web3 task suite against the simulated
//! ledger, and swarm majority voting.

mod swarm;

pub use swarm::{majority_vote, normalize_answer, run_swarm, SwarmOutcome};

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::catalog::PluginCatalog;
use crate::character::Character;
use crate::clock::ManualClock;
use crate::hashing::json_digest;
use crate::kernel::{AgentReply, AgentRuntime, RuntimeConfig, RuntimeError};
use crate::ledger::{
    parse_amount, Genesis, LedgerContext, LedgerError, LedgerEvent, PerformanceBook,
};
use crate::model::{ModelError, ModelRegistry, ScriptedProvider};
use crate::social::{SimulatedSocialClient, SOCIAL_CLIENT};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("swarm needs at least one agent")]
    EmptySwarm,
    #[error("nothing to vote on")]
    EmptyVote,
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskResult {
    pub id: String,
    pub pass: bool,
    pub diagnostic: String,
    /// Excluded from the canonical digest.
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchReport {
    pub suite: String,
    pub tier: String,
    pub character: String,
    pub provider_id: String,
    pub tasks: Vec<TaskResult>,
    pub passed: usize,
    pub total: usize,
}

#[derive(Serialize)]
struct CanonicalTask<'a> {
    id: &'a str,
    pass: bool,
    diagnostic: &'a str,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CanonicalReport<'a> {
    suite: &'a str,
    tier: &'a str,
    character: &'a str,
    provider_id: &'a str,
    tasks: Vec<CanonicalTask<'a>>,
    passed: usize,
    total: usize,
}

impl BenchReport {
    /// SHA-256 over everything except wall times.
    pub fn canonical_digest(&self) -> String {
        json_digest(&CanonicalReport {
            suite: &self.suite,
            tier: &self.tier,
            character: &self.character,
            provider_id: &self.provider_id,
            tasks: self
                .tasks
                .iter()
                .map(|t| CanonicalTask {
                    id: &t.id,
                    pass: t.pass,
                    diagnostic: &t.diagnostic,
                })
                .collect(),
            passed: self.passed,
            total: self.total,
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub const BASIC_TASKS: [&str; 6] = [
    "create_wallet",
    "receive_tokens",
    "transfer_tokens",
    "contract_call",
    "swap_tokens",
    "social_post",
];

/// Everything the basic suite needs; the ledger is rebuilt from `genesis`
/// on every run.
#[derive(Debug, Clone)]
pub struct BasicSuite {
    pub character: Character,
    pub script: String,
    pub genesis: Genesis,
    pub performance: PerformanceBook,
    pub settings: BTreeMap<String, String>,
    /// Task ids to run, in order; defaults to [`BASIC_TASKS`].
    pub order: Vec<String>,
}

pub const BENCH_USER: &str = "bench-user";
const BENCH_CLOCK_START: i64 = 1_735_689_600_000;

/// Observation captured after a task's message has been processed.
struct Probe<'a> {
    rt: &'a AgentRuntime,
    ctx: &'a LedgerContext,
    replies: &'a [AgentReply],
}

impl Probe<'_> {
    fn action_ran(&self, name: &str) -> Result<(), String> {
        let primary = self.replies.first().and_then(|r| r.action.as_deref());
        let failed = self.replies.iter().any(|r| r.text.starts_with("Action "));
        match primary {
            Some(a) if a == name && !failed => Ok(()),
            Some(a) => Err(format!("expected {name}, ran {a}{}", if failed { " (failed)" } else { "" })),
            None => Err(format!("expected {name}, no action ran")),
        }
    }

    fn wallet(&self) -> Result<String, String> {
        self.ctx
            .agent_wallet(self.rt.agent_id())
            .ok_or_else(|| "agent has no wallet".to_owned())
    }
}

fn label(ctx: &LedgerContext, name: &str) -> Result<String, String> {
    ctx.labels
        .get(name)
        .cloned()
        .ok_or_else(|| format!("genesis has no `{name}` wallet"))
}

fn fund(ctx: &LedgerContext, to: &str, token: &str, amount: &str) -> Result<(), String> {
    let treasury = label(ctx, "treasury")?;
    let amount = parse_amount(amount).map_err(|e| e.to_string())?;
    ctx.ledger
        .transfer(&treasury, to, token, amount)
        .map_err(|e| format!("funding failed: {e}"))
}

type Check = Box<dyn FnOnce(&Probe<'_>) -> Result<(), String>>;

/// Performs setup and returns the instruction plus its checker.
fn prepare(id: &str, rt: &AgentRuntime, ctx: &LedgerContext) -> Result<(String, Check), String> {
    let native = ctx.ledger.native_symbol();
    match id {
        "create_wallet" => Ok((
            "Please create a wallet for yourself.".into(),
            Box::new(|p| {
                p.action_ran("CREATE_WALLET")?;
                let w = p.wallet()?;
                p.ctx
                    .ledger
                    .has_wallet(&w)
                    .then_some(())
                    .ok_or_else(|| format!("{w} not on ledger"))
            }),
        )),
        "receive_tokens" => {
            let (wallet, _) = ctx.ensure_agent_wallet(rt);
            let before = ctx.ledger.balance(&wallet, &native).unwrap_or(0);
            fund(ctx, &wallet, &native, "25")?;
            let expected = before + parse_amount("25").expect("literal");
            let native2 = native.clone();
            Ok((
                format!("I just sent you 25 {native}. Can you report your balance?"),
                Box::new(move |p| {
                    p.action_ran("GET_BALANCE")?;
                    let got = p.ctx.ledger.balance(&wallet, &native2).unwrap_or(0);
                    (got == expected)
                        .then_some(())
                        .ok_or_else(|| format!("balance {got}, expected {expected}"))
                }),
            ))
        }
        "transfer_tokens" => {
            let (wallet, _) = ctx.ensure_agent_wallet(rt);
            fund(ctx, &wallet, &native, "5")?;
            let bob = label(ctx, "bob")?;
            let before = ctx.ledger.balance(&bob, &native).unwrap_or(0);
            let native2 = native.clone();
            Ok((
                format!("Please send 2 {native} to bob."),
                Box::new(move |p| {
                    p.action_ran("TRANSFER_TOKEN")?;
                    let got = p.ctx.ledger.balance(&bob, &native2).unwrap_or(0);
                    let want = before + parse_amount("2").expect("literal");
                    (got == want)
                        .then_some(())
                        .ok_or_else(|| format!("bob holds {got}, expected {want}"))
                }),
            ))
        }
        "contract_call" => {
            let (wallet, _) = ctx.ensure_agent_wallet(rt);
            fund(ctx, &wallet, &native, "5")?;
            fund(ctx, &wallet, "SAFE", "5000")?;
            let pool = ctx
                .ledger
                .find_pool(&native, "SAFE")
                .ok_or("genesis has no SAFE pool")?;
            let before = ctx.ledger.pool(&pool).map_or(0, |p| p.reserve_a);
            Ok((
                format!("Call the contract: add 1 {native} liquidity to pool {pool}."),
                Box::new(move |p| {
                    p.action_ran("CONTRACT_CALL")?;
                    let after = p.ctx.ledger.pool(&pool).map_or(0, |p| p.reserve_a);
                    (after == before + parse_amount("1").expect("literal"))
                        .then_some(())
                        .ok_or_else(|| format!("reserve moved {before} -> {after}"))
                }),
            ))
        }
        "swap_tokens" => {
            let (wallet, _) = ctx.ensure_agent_wallet(rt);
            fund(ctx, &wallet, &native, "5")?;
            let before = ctx.ledger.balance(&wallet, "SAFE").unwrap_or(0);
            let swaps = ctx.ledger.events().len();
            Ok((
                format!("Time to trade: swap 1 {native} for SAFE."),
                Box::new(move |p| {
                    p.action_ran("EXECUTE_SWAP")?;
                    let after = p.ctx.ledger.balance(&wallet, "SAFE").unwrap_or(0);
                    let swapped = p.ctx.ledger.events()[swaps..]
                        .iter()
                        .any(|e| matches!(e, LedgerEvent::Swap { .. }));
                    (swapped && after > before)
                        .then_some(())
                        .ok_or_else(|| "no swap recorded".to_owned())
                }),
            ))
        }
        "social_post" => {
            let text = "gm from the agent bench";
            Ok((
                format!("Post this to social: {text}"),
                Box::new(move |p| {
                    p.action_ran("POST_SOCIAL")?;
                    SimulatedSocialClient::timeline(p.rt)
                        .iter()
                        .any(|r| r.content.text == text)
                        .then_some(())
                        .ok_or_else(|| "post missing from social room".to_owned())
                }),
            ))
        }
        other => Err(format!("unknown task `{other}`")),
    }
}

fn with_required(mut list: Vec<String>, required: &[&str]) -> Vec<String> {
    for r in required {
        if !list.iter().any(|x| x == r) {
            list.push((*r).to_owned());
        }
    }
    list
}

impl BasicSuite {
    /// Runs every task against a fresh ledger and runtime. Task failures are
    /// reported, not returned as errors.
    pub fn run(&self) -> Result<BenchReport, HarnessError> {
        let (ledger, labels) = self.genesis.build()?;
        let ctx = LedgerContext::new(Arc::new(ledger), labels, Some(self.performance.clone()));
        let catalog = PluginCatalog::new(ctx.clone());

        let provider_id = self.character.model_provider_id.clone();
        let models = Arc::new(ModelRegistry::new());
        models.register(&provider_id, Arc::new(ScriptedProvider::from_json(&self.script)?))?;

        let mut character = self.character.clone();
        character.plugins = with_required(character.plugins, &["solana", "social"]);
        character.clients = with_required(character.clients, &[SOCIAL_CLIENT]);
        let mut config = RuntimeConfig::new(character);
        config.settings = self.settings.clone();
        config.use_process_env = false;
        let clock = Arc::new(ManualClock::new(BENCH_CLOCK_START));
        let rt = catalog.build_runtime(config, models, clock.clone())?;
        rt.start_clients().map_err(RuntimeError::InvalidConfig)?;

        let order: Vec<String> = if self.order.is_empty() {
            BASIC_TASKS.iter().map(|s| (*s).to_owned()).collect()
        } else {
            self.order.clone()
        };
        let mut tasks = Vec::with_capacity(order.len());
        for id in &order {
            let started = Instant::now();
            clock.advance_ms(1_000);
            let outcome = prepare(id, &rt, &ctx).and_then(|(instruction, check)| {
                let message = rt.new_message(BENCH_USER, &format!("bench:{id}"), &instruction);
                let replies = rt.process_message(message).map_err(|e| e.to_string())?;
                check(&Probe {
                    rt: &rt,
                    ctx: &ctx,
                    replies: &replies,
                })
            });
            tasks.push(TaskResult {
                id: id.clone(),
                pass: outcome.is_ok(),
                diagnostic: outcome.err().unwrap_or_default(),
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        }
        rt.shutdown()?;
        let passed = tasks.iter().filter(|t| t.pass).count();
        Ok(BenchReport {
            suite: "basic".into(),
            tier: "basic".into(),
            character: self.character.name.clone(),
            provider_id,
            total: tasks.len(),
            passed,
            tasks,
        })
    }
}
