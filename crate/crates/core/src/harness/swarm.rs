use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use super::HarnessError;
use crate::kernel::{visible_replies, AgentRuntime, RuntimeError};

/// Trimmed, lowercased, whitespace collapsed.
pub fn normalize_answer(answer: &str) -> String {
    collapse(answer).to_lowercase()
}

fn collapse(answer: &str) -> String {
    answer.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// (representative, count) per normalized answer in first-seen order. The
/// representative is the first spelling seen, whitespace collapsed.
fn tally<S: AsRef<str>>(answers: &[S]) -> Vec<(String, String, usize)> {
    let mut counts: Vec<(String, String, usize)> = Vec::new();
    for a in answers {
        let n = normalize_answer(a.as_ref());
        match counts.iter_mut().find(|(k, _, _)| *k == n) {
            Some((_, _, c)) => *c += 1,
            None => counts.push((n, collapse(a.as_ref()), 1)),
        }
    }
    counts
}

/// Most frequent answer after normalization; ties go to the earliest first
/// occurrence. Returns that answer's first spelling.
pub fn majority_vote<S: AsRef<str>>(answers: &[S]) -> Result<String, HarnessError> {
    let counts = tally(answers);
    let mut best: Option<&(String, String, usize)> = None;
    for entry in &counts {
        if best.is_none_or(|b| entry.2 > b.2) {
            best = Some(entry);
        }
    }
    best.map(|(_, rep, _)| rep.clone()).ok_or(HarnessError::EmptyVote)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SwarmOutcome {
    pub answer: String,
    pub votes: BTreeMap<String, usize>,
    /// Raw answers in agent order.
    pub answers: Vec<String>,
}

/// Builds `n` runtimes with `factory`, asks each the question concurrently
/// and votes over their first visible reply.
pub fn run_swarm<F>(question: &str, n: usize, factory: F) -> Result<SwarmOutcome, HarnessError>
where
    F: Fn(usize) -> Result<Arc<AgentRuntime>, RuntimeError> + Sync,
{
    if n == 0 {
        return Err(HarnessError::EmptySwarm);
    }
    let results: Vec<Result<String, RuntimeError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n)
            .map(|i| {
                let factory = &factory;
                scope.spawn(move || {
                    let rt = factory(i)?;
                    let message = rt.new_message("swarm-user", "swarm", question);
                    let replies = visible_replies(&rt.process_message(message)?);
                    Ok(replies.first().map(|r| r.text.clone()).unwrap_or_default())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("swarm member panicked"))
            .collect()
    });
    let answers = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let votes = tally(&answers).into_iter().map(|(_, rep, c)| (rep, c)).collect();
    Ok(SwarmOutcome {
        answer: majority_vote(&answers)?,
        votes,
        answers,
    })
}
