//! Token risk, recommender consistency and the combined trust score.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TokenPerformance {
    pub token: String,
    pub liquidity_usd: f64,
    pub volatility: f64,
    pub holder_concentration: f64,
    #[serde(default)]
    pub price_change_24h: f64,
}

impl TokenPerformance {
    pub fn check(&self) -> Result<(), String> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.liquidity_usd >= 0.0) {
            return Err(format!("{}: liquidityUsd must be >= 0", self.token));
        }
        if !unit(self.volatility) || !unit(self.holder_concentration) {
            return Err(format!(
                "{}: volatility and holderConcentration must lie in [0, 1]",
                self.token
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecommenderMetrics {
    pub recommender_id: String,
    pub total_recommendations: u64,
    pub successful: u64,
}

impl RecommenderMetrics {
    pub fn empty(recommender_id: impl Into<String>) -> Self {
        Self {
            recommender_id: recommender_id.into(),
            total_recommendations: 0,
            successful: 0,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.successful > self.total_recommendations {
            return Err(format!(
                "{}: successful exceeds totalRecommendations",
                self.recommender_id
            ));
        }
        Ok(())
    }
}

/// Weights of (1 − risk) and consistency; settings `TRUST_W_RISK` and
/// `TRUST_W_CONSISTENCY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustWeights {
    pub risk: f64,
    pub consistency: f64,
}

impl Default for TrustWeights {
    fn default() -> Self {
        Self {
            risk: 0.6,
            consistency: 0.4,
        }
    }
}

pub fn calculate_risk_score(perf: &TokenPerformance) -> f64 {
    let thin = 1.0 - (perf.liquidity_usd / 1_000_000.0).min(1.0);
    (0.4 * perf.volatility + 0.4 * perf.holder_concentration + 0.2 * thin).clamp(0.0, 1.0)
}

/// Success rate shrunk toward 0 for small samples.
pub fn calculate_consistency_score(_perf: &TokenPerformance, metrics: &RecommenderMetrics) -> f64 {
    let total = metrics.total_recommendations as f64;
    if total == 0.0 {
        return 0.0;
    }
    let rate = metrics.successful as f64 / total;
    rate * total / (total + 5.0)
}

pub fn calculate_trust_score(
    perf: &TokenPerformance,
    metrics: &RecommenderMetrics,
    weights: TrustWeights,
) -> f64 {
    let risk = calculate_risk_score(perf);
    let consistency = calculate_consistency_score(perf, metrics);
    (100.0 * (weights.risk * (1.0 - risk) + weights.consistency * consistency)).clamp(0.0, 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perf(volatility: f64, holder_concentration: f64, liquidity_usd: f64) -> TokenPerformance {
        TokenPerformance {
            token: "T".into(),
            liquidity_usd,
            volatility,
            holder_concentration,
            price_change_24h: 0.0,
        }
    }

    fn metrics(successful: u64, total: u64) -> RecommenderMetrics {
        RecommenderMetrics {
            recommender_id: "r".into(),
            total_recommendations: total,
            successful,
        }
    }

    #[test]
    fn risk_corners_and_midpoint() {
        assert_eq!(calculate_risk_score(&perf(0.0, 0.0, 2e6)), 0.0);
        assert_eq!(calculate_risk_score(&perf(1.0, 1.0, 0.0)), 1.0);
        assert!((calculate_risk_score(&perf(0.5, 0.25, 5e5)) - 0.40).abs() < 1e-12);
    }

    #[test]
    fn consistency_shrinks_small_samples() {
        let p = perf(0.0, 0.0, 0.0);
        assert_eq!(calculate_consistency_score(&p, &metrics(0, 0)), 0.0);
        assert!((calculate_consistency_score(&p, &metrics(95, 95)) - 0.95).abs() < 1e-12);
        assert!((calculate_consistency_score(&p, &metrics(361, 395)) - 0.9025).abs() < 1e-12);
        assert!((calculate_consistency_score(&p, &metrics(1, 1)) - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn trust_examples() {
        let w = TrustWeights::default();
        assert!((calculate_trust_score(&perf(0.0, 0.0, 2e6), &metrics(0, 0), w) - 60.0).abs() < 1e-9);
        assert_eq!(calculate_trust_score(&perf(1.0, 1.0, 0.0), &metrics(0, 0), w), 0.0);
        assert!((calculate_trust_score(&perf(0.0, 0.0, 2e6), &metrics(361, 395), w) - 96.1).abs() < 1e-9);
    }

    #[test]
    fn fixture_checks() {
        assert!(perf(1.5, 0.0, 0.0).check().is_err());
        assert!(perf(0.5, 0.5, -1.0).check().is_err());
        assert!(metrics(3, 2).check().is_err());
    }
}
