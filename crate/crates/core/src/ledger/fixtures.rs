//! Genesis and market-data fixture files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::trust::{RecommenderMetrics, TokenPerformance};
use super::{parse_amount, Ledger, LedgerError, DEFAULT_FEE_BPS, DEFAULT_NATIVE_SYMBOL};

fn default_native() -> String {
    DEFAULT_NATIVE_SYMBOL.to_owned()
}

fn default_price() -> f64 {
    100.0
}

fn default_fee() -> u32 {
    DEFAULT_FEE_BPS
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenesisMint {
    pub wallet: String,
    pub token: String,
    pub amount: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenesisPool {
    pub id: String,
    pub token: String,
    pub reserve_a: String,
    pub reserve_b: String,
}

/// Starting ledger: wallet labels (each label is also the wallet salt),
/// mints to those labels, and native/token pools.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Genesis {
    #[serde(default = "default_native")]
    pub native_symbol: String,
    #[serde(default = "default_price")]
    pub native_price_usd: f64,
    #[serde(default = "default_fee")]
    pub fee_bps: u32,
    #[serde(default)]
    pub wallets: Vec<String>,
    #[serde(default)]
    pub mints: Vec<GenesisMint>,
    #[serde(default)]
    pub pools: Vec<GenesisPool>,
}

impl Genesis {
    pub fn from_json(text: &str) -> Result<Self, LedgerError> {
        serde_json::from_str(text).map_err(|e| LedgerError::Fixture(e.to_string()))
    }

    /// Builds a fresh ledger; returns it with the label → address map.
    pub fn build(&self) -> Result<(Ledger, BTreeMap<String, String>), LedgerError> {
        if !(self.native_price_usd > 0.0) || self.fee_bps > 10_000 {
            return Err(LedgerError::Fixture("bad native price or fee".into()));
        }
        let ledger = Ledger::new(&self.native_symbol, self.native_price_usd, self.fee_bps);
        let mut labels = BTreeMap::new();
        for label in &self.wallets {
            if labels.contains_key(label) {
                return Err(LedgerError::Fixture(format!("duplicate wallet label `{label}`")));
            }
            labels.insert(label.clone(), ledger.create_wallet(label));
        }
        for mint in &self.mints {
            let address = labels
                .get(&mint.wallet)
                .ok_or_else(|| LedgerError::Fixture(format!("unknown wallet label `{}`", mint.wallet)))?;
            ledger.mint(address, &mint.token, parse_amount(&mint.amount)?)?;
        }
        for pool in &self.pools {
            ledger.create_pool(
                &pool.id,
                &pool.token,
                parse_amount(&pool.reserve_a)?,
                parse_amount(&pool.reserve_b)?,
            )?;
        }
        Ok((ledger, labels))
    }
}

pub fn load_genesis(path: impl AsRef<Path>) -> Result<Genesis, LedgerError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| LedgerError::Fixture(format!("{}: {e}", path.display())))?;
    Genesis::from_json(&text)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Row {
    Token(TokenPerformance),
    Recommender(RecommenderMetrics),
}

/// Token performance and recommender rows keyed by symbol and id.
#[derive(Debug, Clone, Default)]
pub struct PerformanceBook {
    pub tokens: BTreeMap<String, TokenPerformance>,
    pub recommenders: BTreeMap<String, RecommenderMetrics>,
}

impl PerformanceBook {
    /// Parses a JSON array mixing both row kinds.
    pub fn from_json(text: &str) -> Result<Self, LedgerError> {
        let rows: Vec<Row> =
            serde_json::from_str(text).map_err(|e| LedgerError::Fixture(e.to_string()))?;
        let mut book = Self::default();
        for row in rows {
            match row {
                Row::Token(t) => {
                    t.check().map_err(LedgerError::Fixture)?;
                    book.tokens.insert(t.token.clone(), t);
                }
                Row::Recommender(r) => {
                    r.check().map_err(LedgerError::Fixture)?;
                    book.recommenders.insert(r.recommender_id.clone(), r);
                }
            }
        }
        Ok(book)
    }

    pub fn token(&self, symbol: &str) -> Option<&TokenPerformance> {
        self.tokens.get(symbol)
    }

    /// Metrics for a recommender, or an empty record when unknown.
    pub fn recommender(&self, id: &str) -> RecommenderMetrics {
        self.recommenders
            .get(id)
            .cloned()
            .unwrap_or_else(|| RecommenderMetrics::empty(id))
    }
}

pub fn load_performance(path: impl AsRef<Path>) -> Result<PerformanceBook, LedgerError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| LedgerError::Fixture(format!("{}: {e}", path.display())))?;
    PerformanceBook::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::SCALE;

    #[test]
    fn genesis_builds_labels_mints_and_pools() {
        let g = Genesis::from_json(
            r#"{"wallets":["a","b"],
                "mints":[{"wallet":"a","token":"SOL","amount":"2.5"}],
                "pools":[{"id":"SOL-X","token":"X","reserveA":"10","reserveB":"1000"}]}"#,
        )
        .unwrap();
        let (ledger, labels) = g.build().unwrap();
        assert_eq!(ledger.balance(&labels["a"], "SOL").unwrap(), 5 * SCALE / 2);
        assert_eq!(ledger.supply("X"), 1000 * SCALE);
        assert_eq!(g.build().unwrap().0.digest(), ledger.digest());
    }

    #[test]
    fn unknown_label_is_rejected() {
        let g = Genesis::from_json(r#"{"mints":[{"wallet":"z","token":"SOL","amount":"1"}]}"#).unwrap();
        assert!(g.build().is_err());
    }

    #[test]
    fn performance_rows_are_split_by_shape() {
        let book = PerformanceBook::from_json(
            r#"[{"token":"S","liquidityUsd":1,"volatility":0,"holderConcentration":0},
                {"recommenderId":"r","totalRecommendations":2,"successful":1}]"#,
        )
        .unwrap();
        assert!(book.token("S").is_some());
        assert_eq!(book.recommender("r").successful, 1);
        assert_eq!(book.recommender("nobody").total_recommendations, 0);
        assert!(PerformanceBook::from_json(
            r#"[{"recommenderId":"r","totalRecommendations":1,"successful":2}]"#
        )
        .is_err());
    }
}
