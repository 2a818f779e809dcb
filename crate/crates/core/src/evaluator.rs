//! Post-response evaluators: fact extraction and goal tracking.

use std::collections::BTreeSet;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::Serialize;

use crate::kernel::{AgentRuntime, State};
use crate::memory::{GoalStatus, MemoryKind, MemoryRecord, RecordFilter};
use crate::model::CompletionRequest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EvaluationOutcome {
    Fact {
        text: String,
    },
    #[serde(rename_all = "camelCase")]
    GoalUpdate {
        goal_id: String,
        objective_index: usize,
        completed: bool,
    },
    Reflection {
        text: String,
    },
}

/// The message window an evaluator sees.
#[derive(Debug, Clone)]
pub struct Transcript {
    pub room_id: String,
    pub messages: Vec<MemoryRecord>,
}

pub type ShouldRunFn = dyn Fn(&MemoryRecord, &State) -> bool + Send + Sync;
pub type RunFn =
    dyn Fn(&AgentRuntime, &Transcript) -> Result<Vec<EvaluationOutcome>, String> + Send + Sync;

#[derive(Clone)]
pub struct EvaluatorDef {
    pub name: String,
    should_run: Arc<ShouldRunFn>,
    run: Arc<RunFn>,
}

impl fmt::Debug for EvaluatorDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EvaluatorDef")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

impl EvaluatorDef {
    pub fn new(
        name: impl Into<String>,
        run: impl Fn(&AgentRuntime, &Transcript) -> Result<Vec<EvaluationOutcome>, String>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            should_run: Arc::new(|_, _| true),
            run: Arc::new(run),
        }
    }

    pub fn with_should_run(
        mut self,
        f: impl Fn(&MemoryRecord, &State) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.should_run = Arc::new(f);
        self
    }

    pub fn should_run(&self, message: &MemoryRecord, state: &State) -> bool {
        (self.should_run)(message, state)
    }

    pub fn run(
        &self,
        runtime: &AgentRuntime,
        transcript: &Transcript,
    ) -> Result<Vec<EvaluationOutcome>, String> {
        (self.run)(runtime, transcript)
    }
}

fn fact_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^[A-Za-z0-9']+(?:\s+[A-Za-z0-9']+){0,2}\s+(?:is|likes)\s+\S.*$").unwrap()
    })
}

fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        current.push(ch);
        if matches!(ch, '.' | '!' | '?' | '\n') {
            let s = current.trim();
            if !s.is_empty() {
                out.push(s.to_owned());
            }
            current.clear();
        }
    }
    let s = current.trim();
    if !s.is_empty() {
        out.push(s.to_owned());
    }
    out
}

/// Sentences shaped like "<subject> is <predicate>" or
/// "<subject> likes <object>", with one to three subject words.
pub fn extract_rule_facts(text: &str) -> Vec<String> {
    sentences(text)
        .into_iter()
        .filter(|s| {
            let body = s.trim_end_matches(['.', '!', '?']);
            fact_pattern().is_match(body)
        })
        .collect()
}

pub const FACT_EXTRACTION_TEMPLATE: &str = "\
Extract durable facts about the participants from the conversation below.
Write one fact per line. Write NONE if there are no facts.

{{transcript}}
";

fn model_facts(runtime: &AgentRuntime, transcript: &Transcript) -> Vec<String> {
    let body = transcript
        .messages
        .iter()
        .map(|m| format!("{}: {}", m.user_id, m.content.text))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = FACT_EXTRACTION_TEMPLATE.replace("{{transcript}}", &body);
    match runtime.complete(CompletionRequest::new(prompt)) {
        Ok(text) => text
            .lines()
            .map(|l| l.trim().trim_start_matches("- ").trim().to_owned())
            .filter(|l| !l.is_empty() && !l.eq_ignore_ascii_case("none"))
            .collect(),
        Err(e) => {
            runtime.warn(format!("model fact extraction failed: {e}"));
            Vec::new()
        }
    }
}

/// Rule-based extraction over user messages, unioned with model extraction
/// when `FACT_EXTRACTION=model`. Drops facts already stored for the room.
pub fn fact_evaluator() -> EvaluatorDef {
    EvaluatorDef::new("fact", |rt, transcript| {
        let existing: BTreeSet<String> = rt
            .store()
            .list(&RecordFilter::room(&transcript.room_id).with_kind(MemoryKind::Fact))
            .into_iter()
            .map(|r| r.content.text)
            .collect();
        let mut candidates: Vec<String> = transcript
            .messages
            .iter()
            .filter(|m| !m.is_from_agent())
            .flat_map(|m| extract_rule_facts(&m.content.text))
            .collect();
        if rt.get_setting("FACT_EXTRACTION").as_deref() == Some("model") {
            candidates.extend(model_facts(rt, transcript));
        }
        let mut seen = existing;
        Ok(candidates
            .into_iter()
            .filter(|f| seen.insert(f.clone()))
            .map(|text| EvaluationOutcome::Fact { text })
            .collect())
    })
}

/// Marks an objective complete when an agent message in the window contains
/// its description, ignoring case.
pub fn goal_evaluator() -> EvaluatorDef {
    EvaluatorDef::new("goal", |rt, transcript| {
        let agent_text: Vec<String> = transcript
            .messages
            .iter()
            .filter(|m| m.is_from_agent())
            .map(|m| m.content.text.to_lowercase())
            .collect();
        let mut out = Vec::new();
        for goal in rt.goals_in_room(&transcript.room_id) {
            if goal.status != GoalStatus::InProgress {
                continue;
            }
            for (index, objective) in goal.objectives.iter().enumerate() {
                if objective.completed {
                    continue;
                }
                let needle = objective.description.to_lowercase();
                if agent_text.iter().any(|t| t.contains(&needle)) {
                    out.push(EvaluationOutcome::GoalUpdate {
                        goal_id: goal.id.clone(),
                        objective_index: index,
                        completed: true,
                    });
                }
            }
        }
        Ok(out)
    })
}

/// Runs `evaluator` with panics and errors contained.
pub(crate) fn run_isolated(
    runtime: &AgentRuntime,
    evaluator: &EvaluatorDef,
    transcript: &Transcript,
) -> Option<Vec<EvaluationOutcome>> {
    match catch_unwind(AssertUnwindSafe(|| evaluator.run(runtime, transcript))) {
        Ok(Ok(outcomes)) => Some(outcomes),
        Ok(Err(e)) => {
            runtime.warn(format!("evaluator {} failed: {e}", evaluator.name));
            None
        }
        Err(_) => {
            runtime.warn(format!("evaluator {} panicked", evaluator.name));
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copular_sentences_become_facts() {
        assert_eq!(extract_rule_facts("Alice is a trader."), ["Alice is a trader."]);
        assert_eq!(extract_rule_facts("bob LIKES sol"), ["bob LIKES sol"]);
        assert_eq!(
            extract_rule_facts("Hi there. My old friend Carol likes NFTs! What now?"),
            Vec::<String>::new()
        );
        assert_eq!(
            extract_rule_facts("Hi there. Carol likes NFTs! What now?"),
            ["Carol likes NFTs!"]
        );
    }

    #[test]
    fn no_copula_no_facts() {
        assert!(extract_rule_facts("swap 1 SOL for TOK please").is_empty());
        assert!(extract_rule_facts("").is_empty());
    }
}
