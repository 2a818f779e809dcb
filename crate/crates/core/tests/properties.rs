use std::collections::BTreeMap;
use std::sync::Arc;

use agentos_core::harness::{majority_vote, BasicSuite};
use agentos_core::ledger::{
    calculate_trust_score, load_genesis, load_performance, swap_output, Ledger, LedgerEvent,
    PerformanceBook, RecommenderMetrics, TokenPerformance, TrustWeights, SCALE,
};
use agentos_core::media::sanitize_filename;
use agentos_core::memory::{
    embed, FileAdapter, InMemoryAdapter, MemoryAdapter, RecordFilter, EMB_DIM,
};
use agentos_core::model::ScriptedRule;
use agentos_core::*;
use proptest::prelude::*;
use serde_json::json;

fn fixture(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

// ---- ledger ----

proptest! {
    #[test]
    fn swap_never_decreases_k(
        ra in 1u128..1_000_000_000_000,
        rb in 1u128..1_000_000_000_000,
        amount in 1u128..1_000_000_000_000,
        fee in 0u32..=100,
        a_side in any::<bool>(),
    ) {
        let ledger = Ledger::new("SOL", 100.0, fee);
        let w = ledger.create_wallet("w");
        ledger.create_pool("P", "TOK", ra, rb).unwrap();
        let token = if a_side { "SOL" } else { "TOK" };
        ledger.mint(&w, token, amount).unwrap();
        let before = ledger.pool("P").unwrap().k();
        if ledger.swap(&w, "P", token, amount, 10_000).is_ok() {
            let after = ledger.pool("P").unwrap().k();
            prop_assert!(after >= before);
            if fee > 0 {
                prop_assert!(after > before);
            }
        } else {
            prop_assert_eq!(ledger.pool("P").unwrap().k(), before);
        }
    }

    #[test]
    fn swap_matches_float_formula(
        ra in 1_000u128..1_000_000_000,
        rb in 1_000u128..1_000_000_000,
        amount in 1u128..1_000_000,
        fee in 0u32..=100,
    ) {
        let out = swap_output(ra, rb, amount, fee).unwrap() as f64;
        let eff = (amount * u128::from(10_000 - fee) / 10_000) as f64;
        let exact = rb as f64 * eff / (ra as f64 + eff);
        prop_assert!(out <= exact + 1e-6 && out > exact - 1.0 - 1e-6);
    }

    #[test]
    fn buy_tiers_are_ordered(reserve in 0u128..1_000_000_000_000_000, price in 0.01f64..10_000.0) {
        let ledger = Ledger::new("SOL", price, 30);
        if reserve > 0 {
            ledger.create_pool("P", "TOK", reserve, 1_000 * SCALE).unwrap();
        }
        let t = ledger.calculate_buy_amounts("TOK");
        prop_assert_eq!(t.none, 0);
        prop_assert!(t.none <= t.low && t.low <= t.medium && t.medium <= t.high);
    }

    #[test]
    fn portfolio_total_is_sum_of_items(
        amounts in prop::collection::vec(0u128..1_000_000 * SCALE, 1..5),
        price in 0.5f64..500.0,
    ) {
        let ledger = Ledger::new("SOL", price, 30);
        let w = ledger.create_wallet("w");
        for (i, amount) in amounts.iter().enumerate() {
            let token = format!("T{i}");
            ledger.create_pool(&format!("P{i}"), &token, 100 * SCALE, (i as u128 + 1) * 1_000 * SCALE).unwrap();
            if *amount > 0 {
                ledger.mint(&w, &token, *amount).unwrap();
            }
        }
        ledger.mint(&w, "SOL", SCALE).unwrap();
        let p = ledger.fetch_portfolio_value(&w).unwrap();
        let sum: f64 = p.items.iter().map(|i| i.value_usd).sum();
        prop_assert!((p.total_usd - sum).abs() <= 1e-9 * sum.abs().max(1.0));
        prop_assert!((p.total_native - p.total_usd / price).abs() <= 1e-9 * p.total_native.max(1.0));
    }

    #[test]
    fn trust_is_monotone(
        liq in 0.0f64..3_000_000.0,
        v in 0.0f64..=1.0,
        c in 0.0f64..=1.0,
        bump in 0.0f64..=1.0,
        total in 0u64..500,
        succ_frac in 0.0f64..=1.0,
    ) {
        let perf = |v: f64, c: f64| TokenPerformance {
            token: "T".into(),
            liquidity_usd: liq,
            volatility: v,
            holder_concentration: c,
            price_change_24h: 0.0,
        };
        let successful = (total as f64 * succ_frac) as u64;
        let m = |s: u64| RecommenderMetrics {
            recommender_id: "r".into(),
            total_recommendations: total,
            successful: s,
        };
        let w = TrustWeights::default();
        let base = calculate_trust_score(&perf(v, c), &m(successful), w);
        prop_assert!((0.0..=100.0).contains(&base));
        let v2 = (v + bump).min(1.0);
        let c2 = (c + bump).min(1.0);
        prop_assert!(calculate_trust_score(&perf(v2, c), &m(successful), w) <= base + 1e-12);
        prop_assert!(calculate_trust_score(&perf(v, c2), &m(successful), w) <= base + 1e-12);
        if successful < total {
            prop_assert!(calculate_trust_score(&perf(v, c), &m(successful + 1), w) >= base - 1e-12);
        }
    }
}

fn gate_book(v: f64, c: f64, total: u64, successful: u64) -> PerformanceBook {
    PerformanceBook::from_json(
        &json!([
            {"token": "TOK", "liquidityUsd": 100000.0, "volatility": v, "holderConcentration": c},
            {"recommenderId": "rec", "totalRecommendations": total, "successful": successful}
        ])
        .to_string(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn swaps_only_run_when_trusted(
        v in 0.0f64..=1.0,
        c in 0.0f64..=1.0,
        total in 0u64..50,
        succ_frac in 0.0f64..=1.0,
        threshold in 0.0f64..=100.0,
    ) {
        let ledger = Arc::new(Ledger::new("SOL", 100.0, 30));
        ledger.create_pool("SOL-TOK", "TOK", 1_000 * SCALE, 1_000_000 * SCALE).unwrap();
        let successful = (total as f64 * succ_frac) as u64;
        let ctx = LedgerContext::new(ledger.clone(), BTreeMap::new(), Some(gate_book(v, c, total, successful)));
        let models = Arc::new(ModelRegistry::new());
        models
            .register("scripted", Arc::new(ScriptedProvider::new(vec![ScriptedRule::fallback("ok\nACTION: EXECUTE_SWAP")]).unwrap()))
            .unwrap();
        let mut character = Character::new("Trader", "scripted");
        character.plugins = vec!["solana".into()];
        let mut config = RuntimeConfig::new(character);
        config.use_process_env = false;
        config.min_trust_threshold = threshold;
        let rt = PluginCatalog::new(ctx.clone())
            .build_runtime(config, models, Arc::new(ManualClock::new(0)))
            .unwrap();
        let (wallet, _) = ctx.ensure_agent_wallet(&rt);
        ledger.mint(&wallet, "SOL", 10 * SCALE).unwrap();
        rt.process_message(rt.new_message("rec", "r", "swap 1 SOL for TOK")).unwrap();

        let trust = ctx.trust_for(&rt, "TOK", "rec").unwrap();
        let events = ledger.events();
        let swapped = events.iter().any(|e| matches!(e, LedgerEvent::Swap { .. }));
        prop_assert_eq!(swapped, trust >= threshold);
        // every swap is preceded by a passing trust check
        for (i, e) in events.iter().enumerate() {
            if matches!(e, LedgerEvent::Swap { .. }) {
                let check = events[..i].iter().rev().find_map(|e| match e {
                    LedgerEvent::TrustCheck { trust, threshold, passed, .. } => Some((*trust, *threshold, *passed)),
                    _ => None,
                });
                let (t, th, passed) = check.expect("swap without trust check");
                prop_assert!(passed && t >= th);
            }
        }
    }
}

// ---- memory ----

#[derive(Debug, Clone)]
enum StoreOp {
    Put { id: u8, room: u8, kind: u8, text: String, at: i64 },
    Recent { room: u8, k: usize },
    Search { text: String, k: usize, room: Option<u8> },
}

fn store_op() -> impl Strategy<Value = StoreOp> {
    let words = "(alpha|beta|gamma|delta|pool|swap|token|trade)( (alpha|beta|gamma|delta|pool|swap|token|trade)){0,4}";
    prop_oneof![
        3 => (0u8..60, 0u8..3, 0u8..3, words, 0i64..50)
            .prop_map(|(id, room, kind, text, at)| StoreOp::Put { id, room, kind, text, at }),
        1 => (0u8..3, 0usize..8).prop_map(|(room, k)| StoreOp::Recent { room, k }),
        1 => (words, 0usize..25, prop::option::of(0u8..3))
            .prop_map(|(text, k, room)| StoreOp::Search { text, k, room }),
    ]
}

fn kind(k: u8) -> MemoryKind {
    [MemoryKind::Message, MemoryKind::Fact, MemoryKind::Reflection][k as usize]
}

fn ids(records: &[MemoryRecord]) -> Vec<String> {
    records.iter().map(|r| r.id.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn file_and_memory_adapters_agree(ops in prop::collection::vec(store_op(), 1..80)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mem = InMemoryAdapter::new();
        let file = FileAdapter::open(&path).unwrap();
        for op in &ops {
            match op {
                StoreOp::Put { id, room, kind: k, text, at } => {
                    let r = MemoryRecord::new(format!("id{id}"), "agent", "user", format!("room{room}"), kind(*k), Content::text(text.clone()), *at);
                    prop_assert_eq!(mem.store(r.clone()).is_ok(), file.store(r).is_ok());
                }
                StoreOp::Recent { room, k } => {
                    let room = format!("room{room}");
                    prop_assert_eq!(ids(&mem.recent(&room, *k)), ids(&file.recent(&room, *k)));
                }
                StoreOp::Search { text, k, room } => {
                    let filter = room.map(|r| RecordFilter::room(format!("room{r}"))).unwrap_or_default();
                    let q = embed(text);
                    let a = mem.search_similar(&q, *k, 0.0, &filter);
                    let b = file.search_similar(&q, *k, 0.0, &filter);
                    prop_assert_eq!(a, b);
                }
            }
        }
        prop_assert_eq!(mem.digest(), file.digest());
        file.flush().unwrap();
        drop(file);
        let reopened = FileAdapter::open(&path).unwrap();
        prop_assert_eq!(mem.digest(), reopened.digest());
    }

    #[test]
    fn recent_is_a_suffix(
        stamps in prop::collection::vec(0i64..20, 0..40),
        k in 0usize..45,
    ) {
        let store = InMemoryAdapter::new();
        for (i, at) in stamps.iter().enumerate() {
            store.store(MemoryRecord::new(format!("m{i}"), "a", "u", "room", MemoryKind::Message, Content::text("x"), *at)).unwrap();
        }
        let short = ids(&store.recent("room", k));
        let long = ids(&store.recent("room", k + 1));
        prop_assert!(long.ends_with(&short));
        prop_assert_eq!(short.len(), k.min(stamps.len()));
    }

    #[test]
    fn search_matches_brute_force_for_any_k(
        texts in prop::collection::vec(("[a-f]{1,2}( [a-f]{1,2}){0,3}", 0i64..10), 1..120),
        query in "[a-f]{1,2}( [a-f]{1,2}){0,3}",
        k in 0usize..130,
    ) {
        let store = InMemoryAdapter::new();
        let mut recs = Vec::new();
        for (i, (t, at)) in texts.iter().enumerate() {
            let r = MemoryRecord::new(format!("m{i}"), "a", "u", "room", MemoryKind::Message, Content::text(t.clone()), *at);
            store.store(r.clone()).unwrap();
            recs.push(r);
        }
        let q = embed(&query);
        let mut oracle: Vec<(f64, i64, usize)> = recs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                // fold from +0.0 so that orthogonal vectors tie at exactly zero
                let dot = q.iter().zip(&r.embedding).fold(0.0, |acc, (a, b)| acc + f64::from(*a) * f64::from(*b));
                let na = q.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
                let nb = r.embedding.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
                let score = if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) };
                (score, r.created_at, i)
            })
            .collect();
        oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(b.2.cmp(&a.2)));
        // a query with no features matches nothing
        let take = if q.iter().all(|x| *x == 0.0) { 0 } else { k };
        let want: Vec<String> = oracle.iter().take(take).map(|o| recs[o.2].id.clone()).collect();
        let got: Vec<String> = store
            .search_similar(&q, k, f64::NEG_INFINITY, &RecordFilter::default())
            .into_iter()
            .map(|m| m.record.id)
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn embeddings_are_unit_or_zero(text in ".{0,80}") {
        let v = embed(&text);
        prop_assert_eq!(v.len(), EMB_DIM);
        let norm = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-6);
    }
}

// ---- intent ----

fn intent_runtime() -> Arc<AgentRuntime> {
    let models = Arc::new(ModelRegistry::new());
    models
        .register("scripted", Arc::new(ScriptedProvider::new(vec![]).unwrap()))
        .unwrap();
    let mut config = RuntimeConfig::new(Character::new("Eliza", "scripted"));
    config.use_process_env = false;
    let rt = AgentRuntime::new(config, models).unwrap();
    rt.register_action(ActionDef::new("EXECUTE_SWAP", "Swap tokens.").with_similes(["SWAP_TOKENS", "TOKEN_SWAP"]))
        .unwrap();
    rt.register_action(ActionDef::new("TRANSFER_TOKEN", "Send tokens.").with_similes(["SEND_TOKEN", "PAY"]))
        .unwrap();
    rt.register_action(ActionDef::new("GENERATE_IMAGE", "Generate an image.").with_similes(["DRAW"]))
        .unwrap();
    rt
}

proptest! {
    #[test]
    fn candidates_are_sorted_and_stable(
        text in "(swap|tokens|send|token|pay|draw|image|generate|hello|the|a)( (swap|tokens|send|token|pay|draw|image|generate|hello|the|a)){0,6}",
        proposed in prop::option::of("(EXECUTE_SWAP|pay|draw|NONE|bogus)"),
    ) {
        let rt = intent_runtime();
        let a = rt.recognize_intent(&text, proposed.as_deref(), &State::default());
        let b = rt.recognize_intent(&text, proposed.as_deref(), &State::default());
        prop_assert_eq!(&a, &b);
        for pair in a.windows(2) {
            prop_assert!(pair[0].source < pair[1].source
                || (pair[0].source == pair[1].source && pair[0].score >= pair[1].score));
        }
        let mut names: Vec<&str> = a.iter().map(|c| c.action_name.as_str()).collect();
        names.sort();
        let before = names.len();
        names.dedup();
        prop_assert_eq!(before, names.len());
        // control actions only ever arrive by proposal
        for c in &a {
            if matches!(c.action_name.as_str(), "NONE" | "IGNORE" | "CONTINUE") {
                prop_assert_eq!(c.source, IntentSource::Explicit);
            }
        }
    }

    #[test]
    fn lexical_ignores_case_and_separators(
        upper in prop::collection::vec(any::<bool>(), 11),
        sep in "[ _]",
        prefix in "(please |now |)",
    ) {
        let word: String = "swap".chars().chain(sep.chars()).chain("tokens".chars())
            .zip(&upper)
            .map(|(c, u)| if *u { c.to_ascii_uppercase() } else { c })
            .collect();
        let rt = intent_runtime();
        let c = rt.recognize_intent(&format!("{prefix}{word}"), None, &State::default());
        prop_assert_eq!(c[0].action_name.as_str(), "EXECUTE_SWAP");
        prop_assert_eq!(c[0].source, IntentSource::Lexical);
    }
}

#[test]
fn every_simile_resolves_to_its_action() {
    let rt = intent_runtime();
    for (name, similes) in [
        ("EXECUTE_SWAP", vec!["SWAP_TOKENS", "TOKEN_SWAP"]),
        ("TRANSFER_TOKEN", vec!["SEND_TOKEN", "PAY"]),
        ("GENERATE_IMAGE", vec!["DRAW"]),
    ] {
        for s in similes {
            assert_eq!(rt.resolve_action(s), rt.resolve_action(name));
        }
    }
}

// ---- character ----

proptest! {
    #[test]
    fn validate_agrees_with_load(
        name in prop_oneof![Just(json!("Eliza")), Just(json!("")), Just(json!(3)), Just(json!(null))],
        bio in prop_oneof![Just(json!(["x"])), Just(json!("x")), Just(json!([1]))],
        secrets in prop_oneof![Just(json!({"K": "v"})), Just(json!({"K": 1})), Just(json!([]))],
        drop_model in any::<bool>(),
    ) {
        let mut doc = json!({"name": name, "modelProvider": "m", "bio": bio, "settings": {"secrets": secrets}});
        if drop_model {
            doc.as_object_mut().unwrap().remove("modelProvider");
        }
        let violations = validate_character(&doc);
        prop_assert_eq!(violations.is_empty(), Character::from_value(doc).is_ok());
    }
}

// ---- media, voting, scripted model ----

proptest! {
    #[test]
    fn sanitized_names_are_safe(name in ".{0,40}") {
        let s = sanitize_filename(&name);
        prop_assert!(!s.is_empty());
        prop_assert!(s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'));
    }

    #[test]
    fn strict_majority_survives_permutation(
        winner_extra in 1usize..4,
        losers in prop::collection::vec("(x|y|z)", 0..4),
        seed in any::<u64>(),
    ) {
        let mut answers: Vec<String> = losers.clone();
        answers.extend(std::iter::repeat_n("W".to_owned(), losers.len() + winner_extra));
        let first = majority_vote(&answers).unwrap();
        let mut rng = seed;
        for i in (1..answers.len()).rev() {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            answers.swap(i, (rng >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(&first, "W");
        prop_assert_eq!(majority_vote(&answers).unwrap(), first);
    }

    #[test]
    fn scripted_provider_is_pure(prompts in prop::collection::vec("(a|b|c){1,3}", 1..10)) {
        let rules = || vec![
            ScriptedRule::contains("a", "A").once(),
            ScriptedRule::contains("b", "B"),
            ScriptedRule::fallback("D"),
        ];
        let run = || {
            let p = ScriptedProvider::new(rules()).unwrap();
            prompts.iter().map(|q| p.complete(&CompletionRequest::new(q.clone())).unwrap()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }
}

// ---- bench ----

#[test]
fn independent_tasks_commute() {
    let script = std::fs::read_to_string(fixture("fixtures/bench/basic_script.json")).unwrap();
    let outcome = |order: [&str; 3]| {
        let suite = BasicSuite {
            character: load_character(fixture("characters/sample.character.json")).unwrap(),
            script: script.clone(),
            genesis: load_genesis(fixture("fixtures/ledger/genesis.json")).unwrap(),
            performance: load_performance(fixture("fixtures/ledger/performance.json")).unwrap(),
            settings: BTreeMap::new(),
            order: order.iter().map(|s| (*s).to_owned()).collect(),
        };
        let report = suite.run().unwrap();
        let mut per_task: Vec<(String, bool)> =
            report.tasks.iter().map(|t| (t.id.clone(), t.pass)).collect();
        per_task.sort();
        per_task
    };
    let base = outcome(["create_wallet", "receive_tokens", "transfer_tokens"]);
    assert!(base.iter().all(|(_, pass)| *pass));
    for order in [
        ["create_wallet", "transfer_tokens", "receive_tokens"],
        ["receive_tokens", "create_wallet", "transfer_tokens"],
        ["receive_tokens", "transfer_tokens", "create_wallet"],
        ["transfer_tokens", "create_wallet", "receive_tokens"],
        ["transfer_tokens", "receive_tokens", "create_wallet"],
    ] {
        assert_eq!(outcome(order), base, "{order:?}");
    }
}
