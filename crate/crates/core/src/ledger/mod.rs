//! Deterministic simulated chain: wallets, integer balances and
//! constant-product pools.
//!
//! Balances are integer base units at [`SCALE`] per whole token so that
//! token supply is conserved exactly. Every mutation runs under one lock.

mod fixtures;
mod plugin;
mod trust;

pub use fixtures::{load_genesis, load_performance, Genesis, GenesisMint, GenesisPool, PerformanceBook};
pub use plugin::{solana_plugin, validate_env, LedgerContext, DEFAULT_SLIPPAGE_BPS};
pub use trust::{
    calculate_consistency_score, calculate_risk_score, calculate_trust_score, RecommenderMetrics,
    TokenPerformance, TrustWeights,
};

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

use crate::hashing::{json_digest, stable_hash64};

/// Base units per whole token.
pub const SCALE: u128 = 1_000_000_000;
pub const DEFAULT_FEE_BPS: u32 = 30;
pub const DEFAULT_NATIVE_SYMBOL: &str = "SOL";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LedgerError {
    #[error("unknown wallet `{0}`")]
    UnknownWallet(String),
    #[error("unknown pool `{0}`")]
    UnknownPool(String),
    #[error("token `{token}` is not in pool `{pool}`")]
    TokenNotInPool { pool: String, token: String },
    #[error("insufficient {token} in {wallet}: need {needed}, have {available}")]
    InsufficientFunds {
        wallet: String,
        token: String,
        needed: u128,
        available: u128,
    },
    #[error("slippage {realized_bps:.1} bps exceeds limit {max_bps} bps")]
    SlippageExceeded { realized_bps: f64, max_bps: u32 },
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("swap output rounds to zero")]
    ZeroOutput,
    #[error("arithmetic overflow")]
    Overflow,
    #[error("invalid amount `{0}`")]
    InvalidAmount(String),
    #[error("invalid pool: {0}")]
    InvalidPool(String),
    #[error("fixture error: {0}")]
    Fixture(String),
}

/// Parses a decimal token amount ("12.5") into base units.
pub fn parse_amount(text: &str) -> Result<u128, LedgerError> {
    let bad = || LedgerError::InvalidAmount(text.to_owned());
    let text = text.trim();
    let (whole, frac) = text.split_once('.').unwrap_or((text, ""));
    if whole.is_empty() && frac.is_empty()
        || frac.len() > 9
        || !whole.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    let whole: u128 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| bad())? };
    let frac_units: u128 = if frac.is_empty() {
        0
    } else {
        format!("{frac:0<9}").parse().map_err(|_| bad())?
    };
    whole
        .checked_mul(SCALE)
        .and_then(|w| w.checked_add(frac_units))
        .ok_or_else(bad)
}

/// Formats base units as a decimal with trailing zeros trimmed.
pub fn format_amount(units: u128) -> String {
    let whole = units / SCALE;
    let frac = units % SCALE;
    if frac == 0 {
        return whole.to_string();
    }
    let frac = format!("{frac:09}");
    format!("{whole}.{}", frac.trim_end_matches('0'))
}

pub fn to_tokens(units: u128) -> f64 {
    units as f64 / SCALE as f64
}

fn mul_div(a: u128, b: u128, d: u128) -> Result<u128, LedgerError> {
    a.checked_mul(b).map(|p| p / d).ok_or(LedgerError::Overflow)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Pool {
    pub id: String,
    /// Native side.
    pub token_a: String,
    pub token_b: String,
    pub reserve_a: u128,
    pub reserve_b: u128,
}

impl Pool {
    pub fn k(&self) -> u128 {
        self.reserve_a.saturating_mul(self.reserve_b)
    }

    fn reserves_for(&self, token_in: &str) -> Option<(u128, u128)> {
        if token_in == self.token_a {
            Some((self.reserve_a, self.reserve_b))
        } else if token_in == self.token_b {
            Some((self.reserve_b, self.reserve_a))
        } else {
            None
        }
    }

    pub fn other(&self, token: &str) -> Option<&str> {
        if token == self.token_a {
            Some(&self.token_b)
        } else if token == self.token_b {
            Some(&self.token_a)
        } else {
            None
        }
    }
}

/// Output of a constant-product swap: the fee stays in the pool.
pub fn swap_output(
    reserve_in: u128,
    reserve_out: u128,
    amount_in: u128,
    fee_bps: u32,
) -> Result<u128, LedgerError> {
    let effective = mul_div(amount_in, 10_000 - u128::from(fee_bps.min(10_000)), 10_000)?;
    let denom = reserve_in.checked_add(effective).ok_or(LedgerError::Overflow)?;
    if denom == 0 {
        return Err(LedgerError::ZeroOutput);
    }
    mul_div(reserve_out, effective, denom)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum LedgerEvent {
    WalletCreated { address: String },
    Mint { wallet: String, token: String, amount: u128 },
    Transfer { from: String, to: String, token: String, amount: u128 },
    Swap {
        wallet: String,
        pool: String,
        token_in: String,
        amount_in: u128,
        amount_out: u128,
    },
    AddLiquidity { wallet: String, pool: String, amount_a: u128, amount_b: u128 },
    /// Trust check made by a trading action just before it swaps.
    TrustCheck {
        token: String,
        recommender: String,
        trust: f64,
        threshold: f64,
        passed: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LedgerState {
    pub wallets: BTreeMap<String, BTreeMap<String, u128>>,
    pub pools: BTreeMap<String, Pool>,
    pub native_symbol: String,
    pub native_price_usd: f64,
    pub fee_bps: u32,
    wallet_counter: u64,
}

impl LedgerState {
    fn balance(&self, wallet: &str, token: &str) -> Result<u128, LedgerError> {
        self.wallets
            .get(wallet)
            .map(|b| b.get(token).copied().unwrap_or(0))
            .ok_or_else(|| LedgerError::UnknownWallet(wallet.to_owned()))
    }

    fn debit(&mut self, wallet: &str, token: &str, amount: u128) -> Result<(), LedgerError> {
        let available = self.balance(wallet, token)?;
        if available < amount {
            return Err(LedgerError::InsufficientFunds {
                wallet: wallet.to_owned(),
                token: token.to_owned(),
                needed: amount,
                available,
            });
        }
        let balances = self.wallets.get_mut(wallet).expect("checked above");
        if available == amount {
            balances.remove(token);
        } else {
            balances.insert(token.to_owned(), available - amount);
        }
        Ok(())
    }

    fn credit(&mut self, wallet: &str, token: &str, amount: u128) -> Result<(), LedgerError> {
        let balances = self
            .wallets
            .get_mut(wallet)
            .ok_or_else(|| LedgerError::UnknownWallet(wallet.to_owned()))?;
        let slot = balances.entry(token.to_owned()).or_insert(0);
        *slot = slot.checked_add(amount).ok_or(LedgerError::Overflow)?;
        Ok(())
    }

    /// USD price of one whole token, from the native pool spot price.
    pub fn price_usd(&self, token: &str) -> Option<f64> {
        if token == self.native_symbol {
            return Some(self.native_price_usd);
        }
        self.native_pool(token).map(|p| {
            p.reserve_a as f64 / p.reserve_b as f64 * self.native_price_usd
        })
    }

    /// First pool (by id) pairing the native token with `token`.
    pub fn native_pool(&self, token: &str) -> Option<&Pool> {
        self.pools
            .values()
            .find(|p| p.token_a == self.native_symbol && p.token_b == token && p.reserve_b > 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PortfolioItem {
    pub token: String,
    pub amount: u128,
    pub value_usd: f64,
    /// False when no pool prices the token; its value is then 0.
    pub priced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WalletPortfolio {
    pub total_usd: f64,
    pub total_native: f64,
    pub items: Vec<PortfolioItem>,
}

/// Buy sizes per conviction level, in native base units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BuyAmounts {
    pub none: u128,
    pub low: u128,
    pub medium: u128,
    pub high: u128,
}

#[derive(Debug)]
struct Inner {
    state: LedgerState,
    log: Vec<LedgerEvent>,
}

/// The simulated chain. All operations are serialized on one lock.
#[derive(Debug)]
pub struct Ledger {
    inner: Mutex<Inner>,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new(DEFAULT_NATIVE_SYMBOL, 100.0, DEFAULT_FEE_BPS)
    }
}

impl Ledger {
    pub fn new(native_symbol: &str, native_price_usd: f64, fee_bps: u32) -> Self {
        assert!(native_price_usd > 0.0, "native price must be positive");
        assert!(fee_bps <= 10_000, "fee above 100%");
        Self {
            inner: Mutex::new(Inner {
                state: LedgerState {
                    wallets: BTreeMap::new(),
                    pools: BTreeMap::new(),
                    native_symbol: native_symbol.to_owned(),
                    native_price_usd,
                    fee_bps,
                    wallet_counter: 0,
                },
                log: Vec::new(),
            }),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn native_symbol(&self) -> String {
        self.lock().state.native_symbol.clone()
    }

    pub fn fee_bps(&self) -> u32 {
        self.lock().state.fee_bps
    }

    pub fn snapshot(&self) -> LedgerState {
        self.lock().state.clone()
    }

    pub fn events(&self) -> Vec<LedgerEvent> {
        self.lock().log.clone()
    }

    pub fn record(&self, event: LedgerEvent) {
        self.lock().log.push(event);
    }

    /// Digest of balances and pools; the event log is not included.
    pub fn digest(&self) -> String {
        json_digest(&self.lock().state)
    }

    /// `"sim:"` + hex of a stable hash of the salt and the creation counter.
    pub fn create_wallet(&self, salt: &str) -> String {
        let mut inner = self.lock();
        loop {
            let counter = inner.state.wallet_counter;
            inner.state.wallet_counter += 1;
            let mut bytes = salt.as_bytes().to_vec();
            bytes.extend_from_slice(&counter.to_le_bytes());
            let address = format!("sim:{:016x}", stable_hash64(&bytes));
            if !inner.state.wallets.contains_key(&address) {
                inner.state.wallets.insert(address.clone(), BTreeMap::new());
                inner.log.push(LedgerEvent::WalletCreated {
                    address: address.clone(),
                });
                return address;
            }
        }
    }

    pub fn has_wallet(&self, address: &str) -> bool {
        self.lock().state.wallets.contains_key(address)
    }

    /// Creates new supply. Only genesis and test fixtures mint.
    pub fn mint(&self, wallet: &str, token: &str, amount: u128) -> Result<(), LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        let mut inner = self.lock();
        inner.state.credit(wallet, token, amount)?;
        inner.log.push(LedgerEvent::Mint {
            wallet: wallet.to_owned(),
            token: token.to_owned(),
            amount,
        });
        Ok(())
    }

    /// Creates a pool with fresh reserves (new supply, like [`Ledger::mint`]).
    pub fn create_pool(
        &self,
        id: &str,
        token_b: &str,
        reserve_a: u128,
        reserve_b: u128,
    ) -> Result<(), LedgerError> {
        let mut inner = self.lock();
        if reserve_a == 0 || reserve_b == 0 {
            return Err(LedgerError::InvalidPool(format!("{id}: reserves must be positive")));
        }
        if inner.state.pools.contains_key(id) {
            return Err(LedgerError::InvalidPool(format!("{id}: already exists")));
        }
        if token_b == inner.state.native_symbol {
            return Err(LedgerError::InvalidPool(format!("{id}: both sides native")));
        }
        let pool = Pool {
            id: id.to_owned(),
            token_a: inner.state.native_symbol.clone(),
            token_b: token_b.to_owned(),
            reserve_a,
            reserve_b,
        };
        inner.state.pools.insert(id.to_owned(), pool);
        Ok(())
    }

    pub fn pool(&self, id: &str) -> Option<Pool> {
        self.lock().state.pools.get(id).cloned()
    }

    /// Id of the first pool holding both tokens.
    pub fn find_pool(&self, x: &str, y: &str) -> Option<String> {
        self.lock()
            .state
            .pools
            .values()
            .find(|p| p.other(x) == Some(y))
            .map(|p| p.id.clone())
    }

    pub fn balance(&self, wallet: &str, token: &str) -> Result<u128, LedgerError> {
        self.lock().state.balance(wallet, token)
    }

    pub fn balances(&self, wallet: &str) -> Result<BTreeMap<String, u128>, LedgerError> {
        self.lock()
            .state
            .wallets
            .get(wallet)
            .cloned()
            .ok_or_else(|| LedgerError::UnknownWallet(wallet.to_owned()))
    }

    pub fn transfer(&self, from: &str, to: &str, token: &str, amount: u128) -> Result<(), LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        let mut inner = self.lock();
        if !inner.state.wallets.contains_key(to) {
            return Err(LedgerError::UnknownWallet(to.to_owned()));
        }
        inner.state.debit(from, token, amount)?;
        inner.state.credit(to, token, amount)?;
        inner.log.push(LedgerEvent::Transfer {
            from: from.to_owned(),
            to: to.to_owned(),
            token: token.to_owned(),
            amount,
        });
        Ok(())
    }

    /// Quote without mutating: (amount_out, deviation from spot in bps).
    pub fn quote(&self, pool_id: &str, token_in: &str, amount_in: u128) -> Result<(u128, f64), LedgerError> {
        let inner = self.lock();
        quote(&inner.state, pool_id, token_in, amount_in)
    }

    /// Constant-product swap. Reverts without mutation when the realized
    /// price is more than `max_slippage_bps` below spot.
    pub fn swap(
        &self,
        wallet: &str,
        pool_id: &str,
        token_in: &str,
        amount_in: u128,
        max_slippage_bps: u32,
    ) -> Result<u128, LedgerError> {
        let mut inner = self.lock();
        let state = &mut inner.state;
        let (out, deviation) = quote(state, pool_id, token_in, amount_in)?;
        if deviation > f64::from(max_slippage_bps) {
            return Err(LedgerError::SlippageExceeded {
                realized_bps: deviation,
                max_bps: max_slippage_bps,
            });
        }
        let pool = state.pools[pool_id].clone();
        let token_out = pool.other(token_in).expect("quoted").to_owned();
        state.balance(wallet, token_in)?;
        state.debit(wallet, token_in, amount_in)?;
        state.credit(wallet, &token_out, out)?;
        let pool = state.pools.get_mut(pool_id).expect("quoted");
        if token_in == pool.token_a {
            pool.reserve_a += amount_in;
            pool.reserve_b -= out;
        } else {
            pool.reserve_b += amount_in;
            pool.reserve_a -= out;
        }
        inner.log.push(LedgerEvent::Swap {
            wallet: wallet.to_owned(),
            pool: pool_id.to_owned(),
            token_in: token_in.to_owned(),
            amount_in,
            amount_out: out,
        });
        Ok(out)
    }

    /// Deposits `amount` of one side plus the proportional amount of the
    /// other side. Returns (amount_a, amount_b) deposited.
    pub fn add_liquidity(
        &self,
        wallet: &str,
        pool_id: &str,
        token: &str,
        amount: u128,
    ) -> Result<(u128, u128), LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        let mut inner = self.lock();
        let state = &mut inner.state;
        let pool = state
            .pools
            .get(pool_id)
            .cloned()
            .ok_or_else(|| LedgerError::UnknownPool(pool_id.to_owned()))?;
        let (a, b) = if token == pool.token_a {
            (amount, mul_div(amount, pool.reserve_b, pool.reserve_a)?)
        } else if token == pool.token_b {
            (mul_div(amount, pool.reserve_a, pool.reserve_b)?, amount)
        } else {
            return Err(LedgerError::TokenNotInPool {
                pool: pool_id.to_owned(),
                token: token.to_owned(),
            });
        };
        if a == 0 || b == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        let have_a = state.balance(wallet, &pool.token_a)?;
        let have_b = state.balance(wallet, &pool.token_b)?;
        for (tok, need, have) in [(&pool.token_a, a, have_a), (&pool.token_b, b, have_b)] {
            if have < need {
                return Err(LedgerError::InsufficientFunds {
                    wallet: wallet.to_owned(),
                    token: tok.clone(),
                    needed: need,
                    available: have,
                });
            }
        }
        state.debit(wallet, &pool.token_a, a)?;
        state.debit(wallet, &pool.token_b, b)?;
        let p = state.pools.get_mut(pool_id).expect("present");
        p.reserve_a += a;
        p.reserve_b += b;
        inner.log.push(LedgerEvent::AddLiquidity {
            wallet: wallet.to_owned(),
            pool: pool_id.to_owned(),
            amount_a: a,
            amount_b: b,
        });
        Ok((a, b))
    }

    /// Sum of a token over all wallets and pool reserves.
    pub fn supply(&self, token: &str) -> u128 {
        let inner = self.lock();
        let wallets: u128 = inner
            .state
            .wallets
            .values()
            .filter_map(|b| b.get(token))
            .sum();
        let pools: u128 = inner
            .state
            .pools
            .values()
            .map(|p| {
                let a = if p.token_a == token { p.reserve_a } else { 0 };
                let b = if p.token_b == token { p.reserve_b } else { 0 };
                a + b
            })
            .sum();
        wallets + pools
    }

    pub fn fetch_portfolio_value(&self, wallet: &str) -> Result<WalletPortfolio, LedgerError> {
        let inner = self.lock();
        let state = &inner.state;
        let balances = state
            .wallets
            .get(wallet)
            .ok_or_else(|| LedgerError::UnknownWallet(wallet.to_owned()))?;
        let items: Vec<PortfolioItem> = balances
            .iter()
            .filter(|(_, &amount)| amount > 0)
            .map(|(token, &amount)| {
                let price = state.price_usd(token);
                PortfolioItem {
                    token: token.clone(),
                    amount,
                    value_usd: price.map_or(0.0, |p| to_tokens(amount) * p),
                    priced: price.is_some(),
                }
            })
            .collect();
        // fold from +0.0: an empty f64 sum is -0.0 and would print as "-0.00"
        let total_usd = items.iter().fold(0.0, |acc, i| acc + i.value_usd);
        Ok(WalletPortfolio {
            total_usd,
            total_native: total_usd / state.native_price_usd,
            items,
        })
    }

    /// Conviction tiers of 0.1%, 0.5% and 1% of the token's pool liquidity
    /// (2 × native reserve, valued in USD), converted back to native units.
    /// The native price cancels, so tiers are exact fractions of the reserve.
    pub fn calculate_buy_amounts(&self, token: &str) -> BuyAmounts {
        let inner = self.lock();
        let reserve_a = inner.state.native_pool(token).map_or(0, |p| p.reserve_a);
        let liquidity_native = reserve_a.saturating_mul(2);
        BuyAmounts {
            none: 0,
            low: liquidity_native / 1000,
            medium: liquidity_native * 5 / 1000,
            high: liquidity_native * 10 / 1000,
        }
    }

    /// USD liquidity of the token's native pool.
    pub fn liquidity_usd(&self, token: &str) -> f64 {
        let inner = self.lock();
        inner
            .state
            .native_pool(token)
            .map_or(0.0, |p| 2.0 * to_tokens(p.reserve_a) * inner.state.native_price_usd)
    }
}

fn quote(
    state: &LedgerState,
    pool_id: &str,
    token_in: &str,
    amount_in: u128,
) -> Result<(u128, f64), LedgerError> {
    if amount_in == 0 {
        return Err(LedgerError::ZeroAmount);
    }
    let pool = state
        .pools
        .get(pool_id)
        .ok_or_else(|| LedgerError::UnknownPool(pool_id.to_owned()))?;
    let (r_in, r_out) = pool
        .reserves_for(token_in)
        .ok_or_else(|| LedgerError::TokenNotInPool {
            pool: pool_id.to_owned(),
            token: token_in.to_owned(),
        })?;
    let out = swap_output(r_in, r_out, amount_in, state.fee_bps)?;
    if out == 0 {
        return Err(LedgerError::ZeroOutput);
    }
    let spot = r_out as f64 / r_in as f64;
    let realized = out as f64 / amount_in as f64;
    Ok((out, (1.0 - realized / spot) * 10_000.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn units(tokens: u128) -> u128 {
        tokens * SCALE
    }

    fn ledger_with_pool(fee: u32) -> (Ledger, String) {
        let l = Ledger::new("SOL", 100.0, fee);
        let w = l.create_wallet("t");
        l.create_pool("SOL-TOK", "TOK", units(1000), units(1_000_000)).unwrap();
        l.mint(&w, "SOL", units(100)).unwrap();
        (l, w)
    }

    #[test]
    fn amounts_round_trip() {
        assert_eq!(parse_amount("1").unwrap(), SCALE);
        assert_eq!(parse_amount("0.5").unwrap(), SCALE / 2);
        assert_eq!(parse_amount(".25").unwrap(), SCALE / 4);
        assert_eq!(format_amount(parse_amount("12.034").unwrap()), "12.034");
        assert!(parse_amount("1.0000000001").is_err());
        assert!(parse_amount("-1").is_err());
        assert!(parse_amount("").is_err());
        assert!(parse_amount(".").is_err());
    }

    #[test]
    fn wallet_addresses_are_deterministic() {
        let a = Ledger::default().create_wallet("salt");
        let b = Ledger::default().create_wallet("salt");
        assert_eq!(a, b);
        assert!(a.starts_with("sim:") && a.len() == 20);
        let l = Ledger::default();
        let x = l.create_wallet("salt");
        let y = l.create_wallet("salt");
        assert_ne!(x, y);
        assert!(l.balances(&x).unwrap().is_empty());
    }

    #[test]
    fn transfer_moves_and_rejects() {
        let l = Ledger::default();
        let a = l.create_wallet("a");
        let b = l.create_wallet("b");
        l.mint(&a, "TOK", 100).unwrap();
        l.transfer(&a, &b, "TOK", 40).unwrap();
        assert_eq!(l.balance(&a, "TOK").unwrap(), 60);
        assert_eq!(l.balance(&b, "TOK").unwrap(), 40);
        let before = l.digest();
        assert!(matches!(
            l.transfer(&a, &b, "TOK", 200),
            Err(LedgerError::InsufficientFunds { .. })
        ));
        assert_eq!(
            l.transfer(&a, "sim:nowhere", "TOK", 1),
            Err(LedgerError::UnknownWallet("sim:nowhere".into()))
        );
        assert_eq!(l.transfer(&a, &b, "TOK", 0), Err(LedgerError::ZeroAmount));
        assert_eq!(before, l.digest());
    }

    #[test]
    fn swap_without_fee_matches_formula() {
        let (l, w) = ledger_with_pool(0);
        let out = l.swap(&w, "SOL-TOK", "SOL", units(10), 10_000).unwrap();
        let expected = 1_000_000.0 * 10.0 / 1010.0;
        assert!((to_tokens(out) - expected).abs() < 1e-6, "{}", to_tokens(out));
        let pool = l.pool("SOL-TOK").unwrap();
        assert_eq!(pool.reserve_a, units(1010));
    }

    #[test]
    fn swap_with_fee_keeps_fee_in_pool() {
        let (l, w) = ledger_with_pool(30);
        let k0 = l.pool("SOL-TOK").unwrap().k();
        let out = l.swap(&w, "SOL-TOK", "SOL", units(10), 500).unwrap();
        let expected = 1_000_000.0 * 9.97 / 1009.97;
        assert!((to_tokens(out) - expected).abs() < 1e-6, "{}", to_tokens(out));
        assert!(l.pool("SOL-TOK").unwrap().k() > k0);
    }

    #[test]
    fn slippage_limit_reverts_cleanly() {
        let (l, w) = ledger_with_pool(30);
        let before = l.digest();
        let err = l.swap(&w, "SOL-TOK", "SOL", units(10), 50).unwrap_err();
        assert!(matches!(err, LedgerError::SlippageExceeded { max_bps: 50, .. }));
        assert_eq!(l.swap(&w, "SOL-TOK", "SOL", 0, 500), Err(LedgerError::ZeroAmount));
        assert!(matches!(l.swap(&w, "nope", "SOL", 1, 500), Err(LedgerError::UnknownPool(_))));
        assert_eq!(before, l.digest());
    }

    #[test]
    fn portfolio_values_native_and_pooled_tokens() {
        let l = Ledger::new("SOL", 100.0, 0);
        let w = l.create_wallet("p");
        let empty = l.fetch_portfolio_value(&w).unwrap();
        assert!(empty.total_usd == 0.0 && empty.total_usd.is_sign_positive());
        assert!(empty.items.is_empty());
        l.mint(&w, "SOL", units(10)).unwrap();
        let p = l.fetch_portfolio_value(&w).unwrap();
        assert_eq!(p.total_usd, 1000.0);
        assert_eq!(p.total_native, 10.0);
        l.mint(&w, "ORPHAN", units(5)).unwrap();
        let p = l.fetch_portfolio_value(&w).unwrap();
        assert_eq!(p.total_usd, 1000.0);
        assert!(!p.items.iter().find(|i| i.token == "ORPHAN").unwrap().priced);
    }

    #[test]
    fn buy_tiers_for_100k_liquidity() {
        let l = Ledger::new("SOL", 100.0, 30);
        // $100k liquidity = 2 × 500 SOL × $100
        l.create_pool("p", "TOK", units(500), units(1_000_000)).unwrap();
        assert_eq!(l.liquidity_usd("TOK"), 100_000.0);
        let tiers = l.calculate_buy_amounts("TOK");
        assert_eq!(
            (tiers.none, tiers.low, tiers.medium, tiers.high),
            (0, units(1), units(5), units(10))
        );
        assert_eq!(l.calculate_buy_amounts("NOPOOL"), BuyAmounts { none: 0, low: 0, medium: 0, high: 0 });
    }

    #[test]
    fn add_liquidity_is_proportional() {
        let (l, w) = ledger_with_pool(30);
        l.mint(&w, "TOK", units(100_000)).unwrap();
        let (a, b) = l.add_liquidity(&w, "SOL-TOK", "SOL", units(10)).unwrap();
        assert_eq!((a, b), (units(10), units(10_000)));
        assert_eq!(l.supply("TOK"), units(1_100_000));
    }
}
