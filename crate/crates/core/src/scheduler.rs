//! Curriculum construction: staged and mixed shallow-to-deep schedules over
//! depth buckets, plus the length / judge / random baseline orderings.
//!
//! Mixed phase `t` samples from buckets `1..=t` with weights `w_i ∝ i^alpha`.
//! `alpha = 0` is uniform mixing; staged mode is the `alpha → ∞` limit and is
//! its own mode rather than a huge alpha. Expected per-bucket counts are
//! rounded with largest remainders, which depends only on the weights, so
//! realized counts never depend on the seed.

use std::collections::HashMap;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bucketer::Bucket;
use crate::corpus::{fingerprint_ids, DoTScore, Example, Trace};
use crate::error::{CorpusError, ScheduleError};
use crate::scorer::SCORER_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    Staged,
    Mixed,
}

/// Which earlier buckets a mixed phase may draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixWindow {
    /// Phase `t` draws from buckets `1..=t`.
    #[default]
    Union,
    /// Phase `t` draws from buckets `t-1` and `t` only.
    Adjacent,
}

/// The signal a manifest is ordered by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    Dot,
    TokenLength,
    JudgeScore,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePlan {
    pub mode: ScheduleMode,
    /// Weight sharpness; ignored in staged mode.
    pub alpha: f64,
    pub phases: usize,
    pub budget_per_phase: usize,
    pub seed: u64,
    #[serde(default)]
    pub with_replacement: bool,
    #[serde(default)]
    pub mix_window: MixWindow,
}

impl SchedulePlan {
    pub fn staged(phases: usize, budget_per_phase: usize, seed: u64) -> Self {
        SchedulePlan {
            mode: ScheduleMode::Staged,
            alpha: 0.0,
            phases,
            budget_per_phase,
            seed,
            with_replacement: false,
            mix_window: MixWindow::Union,
        }
    }

    pub fn mixed(phases: usize, budget_per_phase: usize, alpha: f64, seed: u64) -> Self {
        SchedulePlan {
            mode: ScheduleMode::Mixed,
            alpha,
            ..Self::staged(phases, budget_per_phase, seed)
        }
    }

    pub fn validate(&self, n_buckets: Option<usize>) -> Result<(), ScheduleError> {
        let bad = |m: String| Err(ScheduleError::InvalidPlan(m));
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if self.phases < 1 {
            return bad("phases must be at least 1".into());
        }
        if self.budget_per_phase < 1 {
            return bad("budget_per_phase must be at least 1".into());
        }
        if let Some(n) = n_buckets {
            if self.phases > n {
                return bad(format!("{} phases but only {n} buckets", self.phases));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCount {
    pub bucket: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub phase_index: usize,
    pub example_ids: Vec<String>,
    /// Realized draws per bucket; empty for baseline orderings.
    pub bucket_counts: Vec<BucketCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub bucket_spec: String,
    pub scorer_version: String,
    pub corpus_hash: String,
    /// Effective configuration of the run that produced the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumManifest {
    pub ordering: Ordering,
    pub plan: SchedulePlan,
    pub phases: Vec<Phase>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum ManifestLine {
    Header {
        ordering: Ordering,
        plan: SchedulePlan,
        provenance: Provenance,
    },
    Phase(Phase),
}

impl CurriculumManifest {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |m: String| Err(ScheduleError::InvalidPlan(m));
        self.plan.validate(None)?;
        if self.phases.is_empty() {
            return bad("manifest has no phases".into());
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.phase_index != i + 1 {
                return bad(format!("phase {} has index {}", i + 1, p.phase_index));
            }
            if p.example_ids.len() > self.plan.budget_per_phase {
                return bad(format!(
                    "phase {} holds {} ids, budget is {}",
                    p.phase_index,
                    p.example_ids.len(),
                    self.plan.budget_per_phase
                ));
            }
            if let Some(c) = p.bucket_counts.iter().find(|c| c.bucket > p.phase_index) {
                return bad(format!(
                    "phase {} draws from later bucket {}",
                    p.phase_index, c.bucket
                ));
            }
            if self.ordering == Ordering::Dot {
                let drawn: usize = p.bucket_counts.iter().map(|c| c.count).sum();
                if drawn != p.example_ids.len() {
                    return bad(format!(
                        "phase {} bucket counts sum to {drawn}, ids {}",
                        p.phase_index,
                        p.example_ids.len()
                    ));
                }
            }
        }
        Ok(())
    }

    /// Header line, then one line per phase. Keys follow struct field order.
    pub fn to_jsonl(&self) -> String {
        let mut lines = vec![ManifestLine::Header {
            ordering: self.ordering,
            plan: self.plan.clone(),
            provenance: self.provenance.clone(),
        }];
        lines.extend(self.phases.iter().cloned().map(ManifestLine::Phase));
        crate::corpus::to_jsonl_string(&lines)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, CorpusError> {
        let mut header = None;
        let mut phases = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestLine =
                serde_json::from_str(line).map_err(|source| CorpusError::Json {
                    line: i + 1,
                    source,
                })?;
            match rec {
                ManifestLine::Header {
                    ordering,
                    plan,
                    provenance,
                } => {
                    if header.is_some() {
                        return Err(CorpusError::Invalid {
                            line: i + 1,
                            message: "second manifest header".into(),
                        });
                    }
                    header = Some((ordering, plan, provenance));
                }
                ManifestLine::Phase(p) => phases.push(p),
            }
        }
        let (ordering, plan, provenance) = header
            .ok_or_else(|| CorpusError::InvalidManifest("missing header line".into()))?;
        let m = CurriculumManifest {
            ordering,
            plan,
            phases,
            provenance,
        };
        m.validate()
            .map_err(|e| CorpusError::InvalidManifest(e.to_string()))?;
        Ok(m)
    }

    pub fn phase_sizes(&self) -> Vec<usize> {
        self.phases.iter().map(|p| p.example_ids.len()).collect()
    }

    /// One line per phase listing how many ids came from each bucket.
    pub fn summary_text(&self) -> String {
        let mut out = format!(
            "ordering={} mode={} alpha={} phases={} budget={} seed={}\n",
            serde_json::to_value(self.ordering).unwrap().as_str().unwrap(),
            serde_json::to_value(self.plan.mode).unwrap().as_str().unwrap(),
            self.plan.alpha,
            self.plan.phases,
            self.plan.budget_per_phase,
            self.plan.seed
        );
        for p in &self.phases {
            let counts = if p.bucket_counts.is_empty() {
                "-".to_string()
            } else {
                p.bucket_counts
                    .iter()
                    .map(|c| format!("b{}={}", c.bucket, c.count))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            out.push_str(&format!(
                "phase {}: {} ids  {}\n",
                p.phase_index,
                p.example_ids.len(),
                counts
            ));
        }
        out
    }
}

/// Normalized `i^alpha` weights for buckets `1..=t`.
pub fn phase_weights(t: usize, alpha: f64) -> Vec<f64> {
    window_weights(1, t, alpha)
}

/// Normalized `i^alpha` weights for buckets `lo..=hi`. Computed as
/// `(i/hi)^alpha` so large alpha cannot overflow.
fn window_weights(lo: usize, hi: usize, alpha: f64) -> Vec<f64> {
    let raw: Vec<f64> = (lo..=hi)
        .map(|i| (i as f64 / hi as f64).powf(alpha))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Splits `total` into integer parts proportional to `weights` (which sum to
/// 1). Each part gets the floor of its share; leftover units go to the largest
/// fractional remainders, ties to the higher index.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let expected: Vec<f64> = weights
        .iter()
        .map(|w| {
            let e = total as f64 * w;
            // Snap values like 99.99999999999999 to the integer they denote.
            if (e - e.round()).abs() < 1e-9 {
                e.round()
            } else {
                e
            }
        })
        .collect();
    let mut counts: Vec<usize> = expected.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut left = total.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let fa = expected[a] - expected[a].floor();
        let fb = expected[b] - expected[b].floor();
        fb.total_cmp(&fa).then(b.cmp(&a))
    });
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn default_provenance(buckets: &[Bucket]) -> Provenance {
    let spec = buckets
        .iter()
        .map(|b| b.range.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let ids = buckets
        .iter()
        .flat_map(|b| b.member_ids.iter().chain(&b.overflow_ids))
        .map(String::as_str);
    Provenance {
        bucket_spec: spec,
        scorer_version: SCORER_VERSION.to_string(),
        corpus_hash: fingerprint_ids(ids),
        config: None,
    }
}

/// Builds a staged or mixed manifest. The output depends only on the buckets
/// and the plan (seed included).
pub fn build_curriculum(
    buckets: &[Bucket],
    plan: &SchedulePlan,
) -> Result<CurriculumManifest, ScheduleError> {
    let plan_c = plan.clone();
    match plan.mode {
        ScheduleMode::Staged => build_curriculum_with_weights(buckets, plan, move |t| {
            let mut w = vec![0.0; t];
            w[t - 1] = 1.0;
            w
        }),
        ScheduleMode::Mixed => build_curriculum_with_weights(buckets, plan, move |t| {
            match plan_c.mix_window {
                MixWindow::Union => phase_weights(t, plan_c.alpha),
                MixWindow::Adjacent => {
                    let lo = t.saturating_sub(1).max(1);
                    let mut w = vec![0.0; lo - 1];
                    w.extend(window_weights(lo, t, plan_c.alpha));
                    w
                }
            }
        }),
    }
}

/// Builds a manifest where phase `t` draws with the given weights over buckets
/// `1..=t` (a vector of length `t`). Buckets with weight zero are not touched,
/// so one-hot weights reproduce staged mode exactly.
pub fn build_curriculum_with_weights<F>(
    buckets: &[Bucket],
    plan: &SchedulePlan,
    weights_for_phase: F,
) -> Result<CurriculumManifest, ScheduleError>
where
    F: Fn(usize) -> Vec<f64>,
{
    if buckets.is_empty() {
        return Err(ScheduleError::NoBuckets);
    }
    plan.validate(Some(buckets.len()))?;
    let mut pools: Vec<Vec<String>> = buckets.iter().map(|b| b.member_ids.clone()).collect();
    let mut phases = Vec::with_capacity(plan.phases);
    for t in 1..=plan.phases {
        let weights = weights_for_phase(t);
        assert_eq!(weights.len(), t, "weights must cover buckets 1..=t");
        let counts = largest_remainder(plan.budget_per_phase, &weights);
        let mut example_ids = Vec::with_capacity(plan.budget_per_phase);
        let mut bucket_counts = Vec::new();
        for (b, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            rng.set_stream(((t as u64) << 32) | (b as u64 + 1));
            let exhausted = |available| ScheduleError::Exhausted {
                phase: t,
                bucket: b + 1,
                requested: count,
                available,
            };
            if plan.with_replacement {
                let members = &buckets[b].member_ids;
                if members.is_empty() {
                    return Err(exhausted(0));
                }
                for _ in 0..count {
                    example_ids.push(members[rng.random_range(0..members.len())].clone());
                }
            } else {
                let pool = &mut pools[b];
                if pool.len() < count {
                    return Err(exhausted(pool.len()));
                }
                let picked = index::sample(&mut rng, pool.len(), count).into_vec();
                let mut taken = vec![false; pool.len()];
                for &i in &picked {
                    taken[i] = true;
                    example_ids.push(pool[i].clone());
                }
                let mut i = 0;
                pool.retain(|_| {
                    i += 1;
                    !taken[i - 1]
                });
            }
            bucket_counts.push(BucketCount {
                bucket: b + 1,
                count,
            });
        }
        phases.push(Phase {
            phase_index: t,
            example_ids,
            bucket_counts,
        });
    }
    Ok(CurriculumManifest {
        ordering: Ordering::Dot,
        plan: plan.clone(),
        phases,
        provenance: default_provenance(buckets),
    })
}

/// Orders examples by a baseline signal and cuts the stream into the plan's
/// phases, `budget_per_phase` ids each, so per-phase counts match a depth
/// manifest built from the same plan.
pub fn baseline_order(
    examples: &[Example],
    traces: &[Trace],
    kind: Ordering,
    plan: &SchedulePlan,
) -> Result<CurriculumManifest, ScheduleError> {
    plan.validate(None)?;
    let mut ids: Vec<&str> = examples.iter().map(|e| e.id.as_str()).collect();
    match kind {
        Ordering::Dot => {
            return Err(ScheduleError::InvalidPlan(
                "depth ordering is built with build_curriculum".into(),
            ))
        }
        Ordering::TokenLength => {
            let mut toks: HashMap<&str, Vec<u64>> = HashMap::new();
            for t in traces {
                toks.entry(t.example_id.as_str()).or_default().push(t.tok);
            }
            let missing: Vec<String> = ids
                .iter()
                .filter(|id| !toks.contains_key(*id))
                .map(|s| s.to_string())
                .collect();
            if !missing.is_empty() {
                return Err(ScheduleError::MissingSignal {
                    signal: "trace token length",
                    ids: missing,
                });
            }
            let signal: HashMap<&str, u64> = toks
                .into_iter()
                .map(|(id, mut v)| {
                    v.sort_unstable();
                    (id, v[(v.len() - 1) / 2])
                })
                .collect();
            ids.sort_by(|a, b| signal[a].cmp(&signal[b]).then(a.cmp(b)));
        }
        Ordering::JudgeScore => {
            let missing: Vec<String> = examples
                .iter()
                .filter(|e| e.judge_score.is_none())
                .map(|e| e.id.clone())
                .collect();
            if !missing.is_empty() {
                return Err(ScheduleError::MissingSignal {
                    signal: "judge_score",
                    ids: missing,
                });
            }
            let signal: HashMap<&str, f64> = examples
                .iter()
                .map(|e| (e.id.as_str(), e.judge_score.unwrap()))
                .collect();
            ids.sort_by(|a, b| signal[a].total_cmp(&signal[b]).then(a.cmp(b)));
        }
        Ordering::Random => {
            ids.sort_unstable();
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            ids.shuffle(&mut rng);
        }
    }

    let mut phases = Vec::with_capacity(plan.phases);
    let mut stream = ids.into_iter();
    for t in 1..=plan.phases {
        let chunk: Vec<String> = stream
            .by_ref()
            .take(plan.budget_per_phase)
            .map(str::to_string)
            .collect();
        if chunk.len() < plan.budget_per_phase {
            return Err(ScheduleError::BaselineExhausted {
                phase: t,
                requested: plan.budget_per_phase,
                available: chunk.len(),
            });
        }
        phases.push(Phase {
            phase_index: t,
            example_ids: chunk,
            bucket_counts: Vec::new(),
        });
    }
    Ok(CurriculumManifest {
        ordering: kind,
        plan: plan.clone(),
        phases,
        provenance: Provenance {
            bucket_spec: "none".into(),
            scorer_version: SCORER_VERSION.to_string(),
            corpus_hash: fingerprint_ids(examples.iter().map(|e| e.id.as_str())),
            config: None,
        },
    })
}

/// Ids whose step count lies within the given bounds, sorted by `(k, id)`.
pub fn filter_by_depth(
    scores: &[DoTScore],
    min_k: Option<u32>,
    max_k: Option<u32>,
) -> Result<Vec<String>, ScheduleError> {
    if min_k.is_none() && max_k.is_none() {
        return Err(ScheduleError::NoDepthBound);
    }
    if let (Some(lo), Some(hi)) = (min_k, max_k) {
        if lo > hi {
            return Err(ScheduleError::EmptyDepthRange { min_k: lo, max_k: hi });
        }
    }
    let mut hits: Vec<&DoTScore> = scores
        .iter()
        .filter(|s| min_k.is_none_or(|lo| s.k >= lo) && max_k.is_none_or(|hi| s.k <= hi))
        .collect();
    hits.sort_by(|a, b| (a.k, &a.example_id).cmp(&(b.k, &b.example_id)));
    Ok(hits.into_iter().map(|s| s.example_id.clone()).collect())
}
