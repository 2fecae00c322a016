//! Partitions scored examples into contiguous depth buckets.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{DoTScore, Example};
use crate::error::BucketError;

/// Inclusive integer range of step counts; `hi = None` means open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthRange {
    pub lo: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<u32>,
}

impl DepthRange {
    pub fn contains(&self, k: u32) -> bool {
        k >= self.lo && self.hi.is_none_or(|hi| k <= hi)
    }
}

impl fmt::Display for DepthRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hi {
            Some(hi) if hi == self.lo => write!(f, "{}", self.lo),
            Some(hi) => write!(f, "{}-{}", self.lo, hi),
            None => write!(f, "{}+", self.lo),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSpec {
    /// Lower edge of each bucket, strictly increasing from 1. Bucket `i`
    /// covers `[edges[i], edges[i+1] - 1]`; the last bucket is open-ended.
    pub edges: Vec<u32>,
    /// Largest share of a bucket any single task may hold.
    pub max_task_share: f64,
}

impl Default for BucketSpec {
    fn default() -> Self {
        BucketSpec {
            edges: vec![1, 4, 7],
            max_task_share: 1.0,
        }
    }
}

impl BucketSpec {
    pub fn validate(&self) -> Result<(), BucketError> {
        if self.edges.first() != Some(&1) {
            return Err(BucketError::InvalidSpec(
                "first bucket must start at k = 1".into(),
            ));
        }
        if self.edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BucketError::InvalidSpec(
                "edges must be strictly increasing".into(),
            ));
        }
        if !(self.max_task_share > 0.0 && self.max_task_share <= 1.0) {
            return Err(BucketError::InvalidSpec(format!(
                "max_task_share {} outside (0, 1]",
                self.max_task_share
            )));
        }
        Ok(())
    }

    pub fn ranges(&self) -> Vec<DepthRange> {
        self.edges
            .iter()
            .enumerate()
            .map(|(i, &lo)| DepthRange {
                lo,
                hi: self.edges.get(i + 1).map(|next| next - 1),
            })
            .collect()
    }

    /// 1-based index of the bucket holding `k`.
    pub fn bucket_of(&self, k: u32) -> Option<usize> {
        if k < 1 {
            return None;
        }
        Some(self.edges.partition_point(|&lo| lo <= k))
    }

    /// Renders the edges as `1-3,4-6,7+`.
    pub fn label(&self) -> String {
        self.ranges()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl FromStr for BucketSpec {
    type Err = BucketError;

    /// Parses either range form (`1-3,4-6,7+`) or lower edges (`1,4,7`).
    fn from_str(s: &str) -> Result<Self, BucketError> {
        let bad = |msg: String| BucketError::InvalidSpec(msg);
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let ranged = parts.iter().any(|p| p.contains('-') || p.ends_with('+'));
        let mut edges = Vec::with_capacity(parts.len());
        let mut expect_next: Option<u32> = None;
        for (i, p) in parts.iter().enumerate() {
            let last = i + 1 == parts.len();
            let num = |x: &str| {
                x.trim()
                    .parse::<u32>()
                    .map_err(|_| bad(format!("bad edge `{p}`")))
            };
            if !ranged {
                edges.push(num(p)?);
                continue;
            }
            let (lo, hi) = if let Some(lo) = p.strip_suffix('+') {
                if !last {
                    return Err(bad(format!("open range `{p}` must come last")));
                }
                (num(lo)?, None)
            } else if let Some((lo, hi)) = p.split_once('-') {
                (num(lo)?, Some(num(hi)?))
            } else {
                let v = num(p)?;
                (v, Some(v))
            };
            if let Some(e) = expect_next {
                if lo != e {
                    return Err(bad(format!("range `{p}` is not contiguous with previous")));
                }
            }
            if let Some(hi) = hi {
                if hi < lo {
                    return Err(bad(format!("empty range `{p}`")));
                }
                if last {
                    return Err(bad("last range must be open-ended, e.g. `7+`".into()));
                }
                expect_next = Some(hi + 1);
            }
            edges.push(lo);
        }
        let spec = BucketSpec {
            edges,
            max_task_share: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    /// 1 = shallowest.
    pub index: usize,
    pub range: DepthRange,
    /// Retained members sorted by `(k, id)`.
    pub member_ids: Vec<String>,
    /// Step count of each retained member, aligned with `member_ids`.
    pub member_k: Vec<u32>,
    pub task_histogram: BTreeMap<String, usize>,
    /// Members removed by the task-share cap, sorted by id.
    #[serde(default)]
    pub overflow_ids: Vec<String>,
}

impl Bucket {
    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }
}

/// An example excluded from its bucket by the task-share cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverflowEntry {
    pub example_id: String,
    pub task: String,
    pub k: u32,
    pub bucket: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bucketing {
    pub buckets: Vec<Bucket>,
    pub overflow: Vec<OverflowEntry>,
}

/// Upper bound on any one task's count in a bucket of `n` retained members.
pub fn task_cap(share: f64, n: usize) -> usize {
    // Guard against products like 0.7 * 10 = 7.000000000000001.
    (share * n as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Assigns each example to the bucket covering its `k`, then enforces the task
/// cap. While some task exceeds `ceil(max_task_share * retained)`, the largest
/// offending task (ties: lexicographically smallest task) loses its
/// highest-id member to overflow.
pub fn bucketize(
    scores: &[DoTScore],
    examples: &[Example],
    spec: &BucketSpec,
) -> Result<Bucketing, BucketError> {
    spec.validate()?;
    let tasks: HashMap<&str, &str> = examples
        .iter()
        .map(|e| (e.id.as_str(), e.task.as_str()))
        .collect();
    let ranges = spec.ranges();
    let mut members: Vec<Vec<(&DoTScore, &str)>> = vec![Vec::new(); ranges.len()];
    let mut seen = std::collections::HashSet::new();
    for s in scores {
        if !seen.insert(s.example_id.as_str()) {
            return Err(BucketError::DuplicateScore(s.example_id.clone()));
        }
        let idx = spec
            .bucket_of(s.k)
            .ok_or_else(|| BucketError::InvalidScore(s.example_id.clone()))?;
        let task = tasks
            .get(s.example_id.as_str())
            .ok_or_else(|| BucketError::UnknownExample(s.example_id.clone()))?;
        members[idx - 1].push((s, task));
    }

    let mut buckets = Vec::with_capacity(ranges.len());
    let mut overflow = Vec::new();
    for (i, (range, mut items)) in ranges.into_iter().zip(members).enumerate() {
        let index = i + 1;
        let dropped = apply_task_cap(&mut items, spec.max_task_share);
        items.sort_by(|a, b| (a.0.k, &a.0.example_id).cmp(&(b.0.k, &b.0.example_id)));
        let mut task_histogram = BTreeMap::new();
        for (_, task) in &items {
            *task_histogram.entry(task.to_string()).or_insert(0) += 1;
        }
        let mut overflow_ids: Vec<String> =
            dropped.iter().map(|(s, _)| s.example_id.clone()).collect();
        overflow_ids.sort();
        overflow.extend(dropped.iter().map(|(s, task)| OverflowEntry {
            example_id: s.example_id.clone(),
            task: task.to_string(),
            k: s.k,
            bucket: index,
        }));
        buckets.push(Bucket {
            index,
            range,
            member_ids: items.iter().map(|(s, _)| s.example_id.clone()).collect(),
            member_k: items.iter().map(|(s, _)| s.k).collect(),
            task_histogram,
            overflow_ids,
        });
    }
    overflow.sort_by(|a, b| (a.bucket, &a.example_id).cmp(&(b.bucket, &b.example_id)));
    Ok(Bucketing { buckets, overflow })
}

fn apply_task_cap<'a>(
    items: &mut Vec<(&'a DoTScore, &'a str)>,
    share: f64,
) -> Vec<(&'a DoTScore, &'a str)> {
    let mut dropped = Vec::new();
    if share >= 1.0 {
        return dropped;
    }
    loop {
        let cap = task_cap(share, items.len());
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (_, task) in items.iter() {
            *counts.entry(task).or_insert(0) += 1;
        }
        // BTreeMap iteration is ordered by task, so max_by_key keeps the
        // last maximum; reverse to keep the smallest task name on ties.
        let worst = counts
            .iter()
            .rev()
            .filter(|(_, &c)| c > cap)
            .max_by_key(|(_, &c)| c)
            .map(|(t, _)| *t);
        let Some(task) = worst else { break };
        let pos = items
            .iter()
            .enumerate()
            .filter(|(_, (_, t))| *t == task)
            .max_by(|a, b| a.1 .0.example_id.cmp(&b.1 .0.example_id))
            .map(|(i, _)| i)
            .expect("task has members");
        dropped.push(items.remove(pos));
    }
    dropped
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub index: usize,
    pub range: String,
    pub size: usize,
    pub k_min: Option<u32>,
    pub k_mean: Option<f64>,
    pub k_max: Option<u32>,
    pub task_histogram: BTreeMap<String, usize>,
    pub overflow: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub rows: Vec<BucketRow>,
    pub total_members: usize,
    pub total_overflow: usize,
}

pub fn describe(buckets: &[Bucket]) -> BucketReport {
    let rows: Vec<BucketRow> = buckets
        .iter()
        .map(|b| {
            let n = b.member_k.len();
            let (k_min, k_mean, k_max) = if n == 0 {
                (None, None, None)
            } else {
                let sum: u64 = b.member_k.iter().map(|&k| u64::from(k)).sum();
                (
                    b.member_k.iter().copied().min(),
                    Some(sum as f64 / n as f64),
                    b.member_k.iter().copied().max(),
                )
            };
            BucketRow {
                index: b.index,
                range: b.range.to_string(),
                size: n,
                k_min,
                k_mean,
                k_max,
                task_histogram: b.task_histogram.clone(),
                overflow: b.overflow_ids.len(),
            }
        })
        .collect();
    BucketReport {
        total_members: rows.iter().map(|r| r.size).sum(),
        total_overflow: rows.iter().map(|r| r.overflow).sum(),
        rows,
    }
}

impl BucketReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Fixed-width table; missing statistics render as an em dash.
    pub fn to_text(&self) -> String {
        let dash = "\u{2014}".to_string();
        let mut out = format!(
            "{:<6} {:<8} {:>6} {:>6} {:>8} {:>6} {:>8}  {}\n",
            "bucket", "range", "size", "k_min", "k_mean", "k_max", "overflow", "tasks"
        );
        for r in &self.rows {
            let tasks = r
                .task_histogram
                .iter()
                .map(|(t, c)| format!("{t}={c}"))
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&format!(
                "{:<6} {:<8} {:>6} {:>6} {:>8} {:>6} {:>8}  {}\n",
                r.index,
                r.range,
                r.size,
                r.k_min.map_or(dash.clone(), |v| v.to_string()),
                r.k_mean.map_or(dash.clone(), |v| format!("{v:.3}")),
                r.k_max.map_or(dash.clone(), |v| v.to_string()),
                r.overflow,
                if tasks.is_empty() { dash.clone() } else { tasks },
            ));
        }
        out.push_str(&format!(
            "total: {} members, {} overflow\n",
            self.total_members, self.total_overflow
        ));
        out
    }
}
