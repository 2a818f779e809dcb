//! The "solana" plugin over the simulated ledger: wallet and trading
//! actions, trust-gated swaps, and wallet/trust providers.

use std::collections::BTreeMap;
use std::sync::{Arc, LazyLock, Mutex};

use regex::Regex;

use super::fixtures::{load_genesis, load_performance, PerformanceBook};
use super::trust::{calculate_trust_score, TrustWeights};
use super::{format_amount, parse_amount, Ledger, LedgerError, LedgerEvent};
use crate::action::ActionDef;
use crate::character::Violation;
use crate::kernel::AgentRuntime;
use crate::memory::{Content, MemoryKind, MemoryRecord};
use crate::plugin::PluginDef;
use crate::provider::ProviderDef;

/// Used when the `SLIPPAGE` setting (basis points) is absent.
pub const DEFAULT_SLIPPAGE_BPS: u32 = 500;

const ENV_SCHEMA: [(&str, &str); 5] = [
    ("SOL_ADDRESS", "SOL address is required"),
    ("SLIPPAGE", "Slippage is required"),
    ("RPC_URL", "RPC URL is required"),
    ("HELIUS_API_KEY", "Helius API key is required"),
    ("BIRDEYE_API_KEY", "Birdeye API key is required"),
];

/// Checks the plugin's required settings. `WALLET_SECRET_SALT` is optional.
pub fn validate_env(get: impl Fn(&str) -> Option<String>) -> Vec<Violation> {
    ENV_SCHEMA
        .iter()
        .filter(|(key, _)| get(key).is_none_or(|v| v.is_empty()))
        .map(|(key, message)| Violation {
            path: (*key).to_owned(),
            message: (*message).to_owned(),
        })
        .collect()
}

static SWAP_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:swap|trade|exchange)\s+(\d*\.?\d+)\s+([a-z][a-z0-9]*)\s+(?:for|to|into)\s+([a-z][a-z0-9]*)\b").unwrap()
});
static TRANSFER_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:send|transfer|pay)\s+(\d*\.?\d+)\s+([a-z][a-z0-9]*)\s+to\s+([a-z0-9:_-]+)").unwrap()
});
static LIQUIDITY_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:add|provide|deposit)\s+(\d*\.?\d+)\s+([a-z][a-z0-9]*)\s+(?:of\s+)?liquidity\s+(?:to|into)\s+(?:the\s+)?(?:pool\s+)?([a-z0-9_:-]+)").unwrap()
});
static ORDER_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(buy|sell)\s+(\d*\.?\d+)\s+([a-z][a-z0-9]*)\s+(?:at|@)\s+\$?(\d*\.?\d+)").unwrap()
});

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapRequest {
    pub amount: String,
    pub token_in: String,
    pub token_out: String,
}

/// Parses "swap <amount> <token_in> for <token_out>".
pub fn parse_swap(text: &str) -> Option<SwapRequest> {
    let c = SWAP_RE.captures(text)?;
    Some(SwapRequest {
        amount: c[1].to_owned(),
        token_in: c[2].to_ascii_uppercase(),
        token_out: c[3].to_ascii_uppercase(),
    })
}

/// Ledger plus everything the plugin's actions need to act on it.
#[derive(Debug)]
pub struct LedgerContext {
    pub ledger: Arc<Ledger>,
    /// Genesis wallet labels, usable as transfer recipients.
    pub labels: BTreeMap<String, String>,
    pub performance: Option<PerformanceBook>,
    agent_wallets: Mutex<BTreeMap<String, String>>,
}

impl LedgerContext {
    pub fn new(
        ledger: Arc<Ledger>,
        labels: BTreeMap<String, String>,
        performance: Option<PerformanceBook>,
    ) -> Arc<Self> {
        Arc::new(Self {
            ledger,
            labels,
            performance,
            agent_wallets: Mutex::default(),
        })
    }

    /// Builds from the `LEDGER_GENESIS` and `LEDGER_FIXTURES` settings; an
    /// absent genesis gives an empty default ledger.
    pub fn from_settings(get: impl Fn(&str) -> Option<String>) -> Result<Arc<Self>, LedgerError> {
        let (ledger, labels) = match get("LEDGER_GENESIS") {
            Some(path) => load_genesis(path)?.build()?,
            None => (Ledger::default(), BTreeMap::new()),
        };
        let performance = get("LEDGER_FIXTURES").map(load_performance).transpose()?;
        Ok(Self::new(Arc::new(ledger), labels, performance))
    }

    pub fn agent_wallet(&self, agent_id: &str) -> Option<String> {
        self.agent_wallets.lock().unwrap().get(agent_id).cloned()
    }

    /// The agent's wallet, created on first use with `WALLET_SECRET_SALT`
    /// (or the agent id) as salt. Returns (address, newly_created).
    pub fn ensure_agent_wallet(&self, runtime: &AgentRuntime) -> (String, bool) {
        let mut wallets = self.agent_wallets.lock().unwrap();
        if let Some(address) = wallets.get(runtime.agent_id()) {
            return (address.clone(), false);
        }
        let salt = runtime
            .get_setting("WALLET_SECRET_SALT")
            .unwrap_or_else(|| runtime.agent_id().to_owned());
        let address = self.ledger.create_wallet(&salt);
        wallets.insert(runtime.agent_id().to_owned(), address.clone());
        (address, true)
    }

    /// A `sim:` address or a genesis label.
    pub fn resolve_address(&self, text: &str) -> Option<String> {
        if text.starts_with("sim:") {
            return self.ledger.has_wallet(text).then(|| text.to_owned());
        }
        self.labels.get(&text.to_ascii_lowercase()).cloned()
    }

    /// Trust for a token as recommended by `recommender`; None when the
    /// fixtures have no row for the token.
    pub fn trust_for(&self, runtime: &AgentRuntime, token: &str, recommender: &str) -> Option<f64> {
        let book = self.performance.as_ref()?;
        let perf = book.token(token)?;
        Some(calculate_trust_score(perf, &book.recommender(recommender), weights(runtime)))
    }

    fn swap_target(&self, req: &SwapRequest) -> String {
        if req.token_in == self.ledger.native_symbol() {
            req.token_out.clone()
        } else {
            req.token_in.clone()
        }
    }
}

fn weights(runtime: &AgentRuntime) -> TrustWeights {
    let read = |key: &str, default: f64| {
        runtime
            .get_setting(key)
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(default)
    };
    let d = TrustWeights::default();
    TrustWeights {
        risk: read("TRUST_W_RISK", d.risk),
        consistency: read("TRUST_W_CONSISTENCY", d.consistency),
    }
}

fn slippage_bps(runtime: &AgentRuntime) -> u32 {
    runtime
        .get_setting("SLIPPAGE")
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_SLIPPAGE_BPS)
}

fn say(callback: &mut dyn FnMut(Content), text: String) {
    callback(Content::text(text));
}

fn agent_wallet_or_fail(
    ctx: &LedgerContext,
    runtime: &AgentRuntime,
    callback: &mut dyn FnMut(Content),
) -> Option<String> {
    let wallet = ctx.agent_wallet(runtime.agent_id());
    if wallet.is_none() {
        say(callback, "I don't have a wallet yet.".into());
    }
    wallet
}

fn swap_action(ctx: Arc<LedgerContext>) -> ActionDef {
    let gate = ctx.clone();
    ActionDef::new(
        "EXECUTE_SWAP",
        "Swap tokens through a liquidity pool.",
    )
    .with_similes(["SWAP_TOKENS", "TOKEN_SWAP", "TRADE_TOKENS"])
    .with_validate(move |rt, message| {
        // Unparsable requests pass so the handler can explain the format.
        let Some(req) = parse_swap(message.text()) else {
            return true;
        };
        gate.trust_for(rt, &gate.swap_target(&req), &message.user_id)
            .is_some_and(|trust| trust >= rt.min_trust_threshold())
    })
    .with_handler(move |rt, message, _state, _options, callback| {
        let Some(req) = parse_swap(message.text()) else {
            say(callback, "I couldn't read that swap. Use: swap <amount> <token> for <token>.".into());
            return false;
        };
        let Some(wallet) = agent_wallet_or_fail(&ctx, rt, callback) else {
            return false;
        };
        let amount = match parse_amount(&req.amount) {
            Ok(a) => a,
            Err(e) => {
                say(callback, e.to_string());
                return false;
            }
        };
        let Some(pool) = ctx.ledger.find_pool(&req.token_in, &req.token_out) else {
            say(callback, format!("No pool trades {} for {}.", req.token_in, req.token_out));
            return false;
        };
        let token = ctx.swap_target(&req);
        let trust = ctx.trust_for(rt, &token, &message.user_id);
        let threshold = rt.min_trust_threshold();
        let passed = trust.is_some_and(|t| t >= threshold);
        ctx.ledger.record(LedgerEvent::TrustCheck {
            token: token.clone(),
            recommender: message.user_id.clone(),
            trust: trust.unwrap_or(0.0),
            threshold,
            passed,
        });
        if !passed {
            say(callback, format!("Trust for {token} is below {threshold}; not trading."));
            return false;
        }
        match ctx.ledger.swap(&wallet, &pool, &req.token_in, amount, slippage_bps(rt)) {
            Ok(out) => {
                say(
                    callback,
                    format!(
                        "Swapped {} {} for {} {}.",
                        format_amount(amount),
                        req.token_in,
                        format_amount(out),
                        req.token_out
                    ),
                );
                true
            }
            Err(e) => {
                say(callback, format!("Swap failed: {e}"));
                false
            }
        }
    })
}

fn transfer_action(ctx: Arc<LedgerContext>) -> ActionDef {
    ActionDef::new(
        "TRANSFER_TOKEN",
        "Send tokens to another wallet.",
    )
    .with_similes(["TRANSFER_TOKENS", "SEND_TOKEN", "SEND_TOKENS", "SEND_SOL", "PAY"])
    .with_handler(move |rt, message, _state, _options, callback| {
        let Some(c) = TRANSFER_RE.captures(message.text()) else {
            say(callback, "I couldn't read that transfer. Use: send <amount> <token> to <address>.".into());
            return false;
        };
        let Some(wallet) = agent_wallet_or_fail(&ctx, rt, callback) else {
            return false;
        };
        let token = c[2].to_ascii_uppercase();
        let Some(to) = ctx.resolve_address(&c[3]) else {
            say(callback, format!("Unknown recipient {}.", &c[3]));
            return false;
        };
        let result = parse_amount(&c[1]).and_then(|amount| {
            ctx.ledger.transfer(&wallet, &to, &token, amount).map(|()| amount)
        });
        match result {
            Ok(amount) => {
                say(callback, format!("Sent {} {token} to {to}.", format_amount(amount)));
                true
            }
            Err(e) => {
                say(callback, format!("Transfer failed: {e}"));
                false
            }
        }
    })
}

fn create_wallet_action(ctx: Arc<LedgerContext>) -> ActionDef {
    ActionDef::new("CREATE_WALLET", "Create a new blockchain wallet address for the agent.")
        .with_similes(["NEW_WALLET", "MAKE_WALLET"])
        .with_handler(move |rt, _message, _state, _options, callback| {
            let (address, created) = ctx.ensure_agent_wallet(rt);
            let text = if created {
                format!("Created wallet {address}.")
            } else {
                format!("My wallet is {address}.")
            };
            say(callback, text);
            true
        })
}

fn balance_action(ctx: Arc<LedgerContext>) -> ActionDef {
    ActionDef::new("GET_BALANCE", "Report the token balances and value held in the agent wallet.")
        .with_similes(["CHECK_BALANCE", "WALLET_BALANCE"])
        .with_handler(move |rt, _message, _state, _options, callback| {
            let Some(wallet) = agent_wallet_or_fail(&ctx, rt, callback) else {
                return false;
            };
            let Ok(portfolio) = ctx.ledger.fetch_portfolio_value(&wallet) else {
                return false;
            };
            let items: Vec<String> = portfolio
                .items
                .iter()
                .map(|i| format!("{} {}", format_amount(i.amount), i.token))
                .collect();
            let held = if items.is_empty() { "nothing".to_owned() } else { items.join(", ") };
            say(
                callback,
                format!("Wallet {wallet} holds {held} (${:.2}).", portfolio.total_usd),
            );
            true
        })
}

fn contract_call_action(ctx: Arc<LedgerContext>) -> ActionDef {
    ActionDef::new(
        "CONTRACT_CALL",
        "Call a smart contract: add liquidity to a pool.",
    )
    .with_similes(["ADD_LIQUIDITY", "PROVIDE_LIQUIDITY", "CALL_CONTRACT"])
    .with_handler(move |rt, message, _state, _options, callback| {
        let Some(c) = LIQUIDITY_RE.captures(message.text()) else {
            say(callback, "Use: add <amount> <token> liquidity to <pool>.".into());
            return false;
        };
        let Some(wallet) = agent_wallet_or_fail(&ctx, rt, callback) else {
            return false;
        };
        let token = c[2].to_ascii_uppercase();
        let pool = c[3].to_ascii_uppercase();
        let result = parse_amount(&c[1])
            .and_then(|amount| ctx.ledger.add_liquidity(&wallet, &pool, &token, amount));
        match result {
            Ok((a, b)) => {
                say(
                    callback,
                    format!("Added {} and {} to {pool}.", format_amount(a), format_amount(b)),
                );
                true
            }
            Err(e) => {
                say(callback, format!("Contract call failed: {e}"));
                false
            }
        }
    })
}

fn take_order_action() -> ActionDef {
    ActionDef::new(
        "TAKE_ORDER",
        "Record a limit order to buy or sell a token at a target price.",
    )
    .with_similes(["LIMIT_ORDER", "PLACE_ORDER"])
    .with_handler(|rt, message, _state, _options, callback| {
        let Some(c) = ORDER_RE.captures(message.text()) else {
            say(callback, "Use: buy <amount> <token> at <price>.".into());
            return false;
        };
        let text = format!(
            "Limit order: {} {} {} at {}",
            c[1].to_ascii_lowercase(),
            &c[2],
            c[3].to_ascii_uppercase(),
            &c[4]
        );
        let mut content = Content::text(text.clone());
        content.sources = vec![message.id.clone()];
        let record = rt.new_record(rt.agent_id(), &message.room_id, MemoryKind::Fact, content);
        if let Err(e) = rt.remember(record) {
            say(callback, format!("Could not record order: {e}"));
            return false;
        }
        say(callback, format!("Recorded. {text}."));
        true
    })
}

fn stub(name: &str, description: &str) -> ActionDef {
    ActionDef::new(name, description).with_validate(|_, _| false)
}

fn wallet_provider(ctx: Arc<LedgerContext>) -> ProviderDef {
    ProviderDef::new("wallet", move |rt, _message, _state| {
        let Some(wallet) = ctx.agent_wallet(rt.agent_id()) else {
            return Ok("The agent has no wallet yet.".into());
        };
        let p = ctx.ledger.fetch_portfolio_value(&wallet).map_err(|e| e.to_string())?;
        Ok(format!(
            "Wallet {wallet}: ${:.2} ({:.4} {})",
            p.total_usd,
            p.total_native,
            ctx.ledger.native_symbol()
        ))
    })
}

fn trust_provider(ctx: Arc<LedgerContext>) -> ProviderDef {
    ProviderDef::new("trustScore", move |rt, message: &MemoryRecord, _state| {
        let Some(book) = &ctx.performance else {
            return Ok(String::new());
        };
        let lines: Vec<String> = book
            .tokens
            .keys()
            .filter_map(|t| {
                ctx.trust_for(rt, t, &message.user_id)
                    .map(|s| format!("Trust {t}: {s:.1}"))
            })
            .collect();
        Ok(lines.join("\n"))
    })
}

pub fn solana_plugin(ctx: Arc<LedgerContext>) -> PluginDef {
    PluginDef::new("solana", "Simulated Solana ledger plugin")
        .with_action(swap_action(ctx.clone()))
        .with_action(stub(
            "PUMPFUN_CREATE_TOKEN",
            "Launch a brand new memecoin on pump.fun.",
        ))
        .with_action(stub("FOMO_CREATE_TOKEN", "Launch a brand new memecoin on fomo."))
        .with_action(transfer_action(ctx.clone()))
        .with_action(stub(
            "EXECUTE_SWAP_DAO",
            "Execute a treasury trade on behalf of a DAO.",
        ))
        .with_action(take_order_action())
        .with_action(create_wallet_action(ctx.clone()))
        .with_action(balance_action(ctx.clone()))
        .with_action(contract_call_action(ctx.clone()))
        .with_provider(wallet_provider(ctx.clone()))
        .with_provider(trust_provider(ctx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_schema_messages() {
        fn lookup(env: &BTreeMap<String, String>) -> impl Fn(&str) -> Option<String> + '_ {
            |k| env.get(k).cloned()
        }
        let mut env: BTreeMap<String, String> =
            ENV_SCHEMA.iter().map(|(k, _)| ((*k).to_owned(), "x".to_owned())).collect();
        assert!(validate_env(lookup(&env)).is_empty());
        env.remove("SLIPPAGE");
        let v = validate_env(lookup(&env));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].message, "Slippage is required");
        env.insert("SLIPPAGE".into(), "1".into());
        env.insert("RPC_URL".into(), String::new());
        assert_eq!(validate_env(lookup(&env))[0].path, "RPC_URL");
    }

    #[test]
    fn swap_requests_parse() {
        assert_eq!(
            parse_swap("please swap 10 sol for safe now"),
            Some(SwapRequest {
                amount: "10".into(),
                token_in: "SOL".into(),
                token_out: "SAFE".into()
            })
        );
        assert_eq!(parse_swap("swap 0.5 SOL to TOK").unwrap().amount, "0.5");
        assert_eq!(parse_swap("swap some tokens"), None);
    }
}
