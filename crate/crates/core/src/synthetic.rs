//! Seeded synthetic corpora with a planted difficulty.
//!
//! Each example gets a difficulty `d` in `1..=10`, recorded as
//! `external_difficulty`. A simulated teacher writes `k = max(1, d + u)` steps
//! with `u` uniform on `{-1, 0, 1}`, using numbered, labeled, or bulleted
//! formatting and a random number of filler words per step.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Example, RawTrace};

const TASKS: [&str; 3] = ["math", "multihop-qa", "logic"];
const WORDS: [&str; 16] = [
    "compute", "the", "value", "of", "x", "then", "substitute", "into", "equation", "and",
    "simplify", "carefully", "check", "result", "sum", "terms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceStyle {
    Numbered,
    Labeled,
    Bulleted,
    /// Cycle through the other three by example index.
    Mixed,
}

#[derive(Debug, Clone)]
pub struct TeacherSim {
    pub teacher_id: String,
    pub style: TraceStyle,
    /// Multiplier on filler words per step.
    pub verbosity: f64,
    pub seed: u64,
}

/// `n` examples with planted difficulty; prompts carry a `depth=d` hint that
/// the mock endpoint understands.
pub fn planted_corpus(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let d: u32 = rng.random_range(1..=10);
            let judge = (f64::from(d) / 10.0 + rng.random_range(-0.3..0.3)).clamp(0.0, 1.0);
            let judge = (judge * 1000.0).round() / 1000.0;
            Example::new(
                format!("ex{i:05}"),
                TASKS[i % TASKS.len()],
                format!("Problem {i} (depth={d}): combine the given facts to reach the goal."),
            )
            .with_external_difficulty(f64::from(d))
            .with_judge_score(judge)
        })
        .collect()
}

/// Planted step count of a teacher sample: `max(1, d + u)`, `u ∈ {-1, 0, 1}`.
pub fn noisy_depth(d: u32, rng: &mut impl Rng) -> u32 {
    (d as i64 + rng.random_range(-1i64..=1)).max(1) as u32
}

fn filler(rng: &mut impl Rng, words: usize) -> String {
    (0..words.max(1))
        .map(|_| *WORDS.choose(rng).expect("nonempty"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders `k` steps in the given style.
pub fn render_trace(k: u32, style: TraceStyle, verbosity: f64, rng: &mut impl Rng) -> String {
    let mut lines = Vec::with_capacity(k as usize);
    for i in 1..=k {
        let words = (rng.random_range(3..=10) as f64 * verbosity).round() as usize;
        let body = format!("{}.", filler(rng, words));
        lines.push(match style {
            TraceStyle::Numbered | TraceStyle::Mixed => format!("{i}. {body}"),
            TraceStyle::Labeled => format!("Step {i}: {body}"),
            TraceStyle::Bulleted => format!("- {body}"),
        });
    }
    lines.join("\n")
}

/// Simulated teacher traces, `samples` per example.
pub fn simulate_teacher(examples: &[Example], teacher: &TeacherSim, samples: u32) -> Vec<RawTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(teacher.seed);
    let styles = [TraceStyle::Numbered, TraceStyle::Labeled, TraceStyle::Bulleted];
    let mut out = Vec::with_capacity(examples.len() * samples as usize);
    for (i, ex) in examples.iter().enumerate() {
        let d = ex.external_difficulty.unwrap_or(1.0).max(1.0) as u32;
        let style = match teacher.style {
            TraceStyle::Mixed => styles[i % styles.len()],
            s => s,
        };
        for _ in 0..samples {
            let k = noisy_depth(d, &mut rng);
            out.push(RawTrace {
                example_id: ex.id.clone(),
                teacher_id: teacher.teacher_id.clone(),
                raw_text: render_trace(k, style, teacher.verbosity, &mut rng),
            });
        }
    }
    out
}
