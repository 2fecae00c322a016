//! Depth-of-thought scores.
//!
//! `DoT = k`, the step count, and `DoT_norm = k / ln(1 + tok)`, which discounts
//! verbose traces while keeping the step structure. Self-consistency samples
//! are aggregated with the lower median of `k` and of `tok`, so aggregated
//! `k` stays integral.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{DoTScore, Trace};
use crate::error::ScoreError;

pub const SCORER_VERSION: &str = concat!("dot-scorer/", env!("CARGO_PKG_VERSION"), "+ws-tok+ln");

/// `k / ln(1 + tok)` with the natural logarithm.
pub fn dot_norm(k: u32, tok: u64) -> f64 {
    f64::from(k) / (tok as f64).ln_1p()
}

pub fn score(trace: &Trace) -> Result<DoTScore, ScoreError> {
    if trace.steps.is_empty() {
        return Err(ScoreError::NoSteps {
            example_id: trace.example_id.clone(),
            teacher_id: trace.teacher_id.clone(),
        });
    }
    if trace.tok == 0 {
        return Err(ScoreError::NoTokens {
            example_id: trace.example_id.clone(),
            teacher_id: trace.teacher_id.clone(),
        });
    }
    let k = trace.steps.len() as u32;
    Ok(DoTScore {
        example_id: trace.example_id.clone(),
        teacher_id: trace.teacher_id.clone(),
        k,
        tok: trace.tok,
        dot_norm: dot_norm(k, trace.tok),
        n_samples: 1,
    })
}

fn lower_median<T: Ord + Copy>(mut xs: Vec<T>) -> T {
    xs.sort_unstable();
    xs[(xs.len() - 1) / 2]
}

/// Merges self-consistency samples of one (example, teacher) pair.
pub fn aggregate_self_consistency(scores: &[DoTScore]) -> Result<DoTScore, ScoreError> {
    let first = scores.first().ok_or(ScoreError::EmptyAggregate)?;
    if let Some(odd) = scores
        .iter()
        .find(|s| s.example_id != first.example_id || s.teacher_id != first.teacher_id)
    {
        return Err(ScoreError::MixedIds(format!(
            "{}/{} vs {}/{}",
            first.example_id, first.teacher_id, odd.example_id, odd.teacher_id
        )));
    }
    let k = lower_median(scores.iter().map(|s| s.k).collect());
    let tok = lower_median(scores.iter().map(|s| s.tok).collect());
    Ok(DoTScore {
        example_id: first.example_id.clone(),
        teacher_id: first.teacher_id.clone(),
        k,
        tok,
        dot_norm: dot_norm(k, tok),
        n_samples: scores.iter().map(|s| s.n_samples).sum(),
    })
}

/// A trace that could not be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFailure {
    pub example_id: String,
    pub teacher_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusScores {
    /// One aggregated score per (example, teacher), sorted by that key.
    pub scores: Vec<DoTScore>,
    pub failures: Vec<ScoreFailure>,
}

/// Scores every trace and aggregates per (example, teacher). Bad traces are
/// reported and skipped; a pair with no valid trace gets no score.
pub fn score_corpus(traces: &[Trace]) -> CorpusScores {
    let mut groups: BTreeMap<(&str, &str), Vec<DoTScore>> = BTreeMap::new();
    let mut failures = Vec::new();
    for t in traces {
        match score(t) {
            Ok(s) => groups
                .entry((t.example_id.as_str(), t.teacher_id.as_str()))
                .or_default()
                .push(s),
            Err(e) => failures.push(ScoreFailure {
                example_id: t.example_id.clone(),
                teacher_id: t.teacher_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    failures.sort_by(|a, b| {
        (&a.example_id, &a.teacher_id).cmp(&(&b.example_id, &b.teacher_id))
    });
    let scores = groups
        .into_values()
        .map(|g| aggregate_self_consistency(&g).expect("group is nonempty and homogeneous"))
        .collect();
    CorpusScores { scores, failures }
}
