//! Rank statistics for checking depth scores against difficulty labels and
//! across teachers.
//!
//! Spearman uses average ranks for ties. Kendall is tau-b, computed with
//! Knight's O(n log n) merge-sort method. When a tie-corrected denominator is
//! zero (a constant input), both statistics return 0.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::DoTScore;
use crate::error::AnalysisError;

fn check_pair(xs: &[f64], ys: &[f64], min: usize) -> Result<(), AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < min {
        return Err(AnalysisError::TooFew {
            needed: min,
            got: xs.len(),
        });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    Ok(())
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    check_pair(xs, ys, 3)?;
    Ok(pearson(&average_ranks(xs), &average_ranks(ys)).unwrap_or(0.0))
}

/// Pair counts behind tau-b. All counts are over unordered pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KendallCounts {
    pub pairs: u64,
    pub tied_x: u64,
    pub tied_y: u64,
    pub tied_xy: u64,
    /// Concordant minus discordant pairs.
    pub score: i64,
}

impl KendallCounts {
    pub fn tau_b(&self) -> f64 {
        let dx = (self.pairs - self.tied_x) as f64;
        let dy = (self.pairs - self.tied_y) as f64;
        if dx == 0.0 || dy == 0.0 {
            return 0.0;
        }
        self.score as f64 / (dx * dy).sqrt()
    }
}

fn tie_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort that counts inversions (strictly greater element before smaller).
fn sort_count_swaps(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_count_swaps(&mut v[..mid], buf) + sort_count_swaps(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

pub fn kendall_counts(xs: &[f64], ys: &[f64]) -> KendallCounts {
    let n = xs.len() as u64;
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let tied_x = tie_pairs(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let tied_xy = tie_pairs(&pairs);
    let mut y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut scratch = Vec::with_capacity(y.len());
    let swaps = sort_count_swaps(&mut y, &mut scratch);
    let tied_y = tie_pairs(&y);
    let total = n * n.saturating_sub(1) / 2;
    let score = total as i64 - tied_x as i64 - tied_y as i64 + tied_xy as i64 - 2 * swaps as i64;
    KendallCounts {
        pairs: total,
        tied_x,
        tied_y,
        tied_xy,
        score,
    }
}

/// Kendall tau-b.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    check_pair(xs, ys, 3)?;
    Ok(kendall_counts(xs, ys).tau_b())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub teacher_a: String,
    pub teacher_b: String,
    /// Kendall tau-b between the teachers' step counts.
    pub tau_k: f64,
    /// Kendall tau-b between the teachers' token counts.
    pub tau_tok: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub teachers: Vec<String>,
    pub shared_examples: usize,
    /// Examples each teacher scored that fall outside the shared set.
    pub excluded: BTreeMap<String, usize>,
    pub pairs: Vec<PairAgreement>,
}

impl AgreementReport {
    pub fn min_tau_k(&self) -> Option<f64> {
        self.pairs.iter().map(|p| p.tau_k).min_by(f64::total_cmp)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "cross-teacher agreement over {} shared examples\n{:<16} {:<16} {:>8} {:>8}\n",
            self.shared_examples, "teacher_a", "teacher_b", "tau(k)", "tau(tok)"
        );
        for p in &self.pairs {
            out.push_str(&format!(
                "{:<16} {:<16} {:>8.4} {:>8.4}\n",
                p.teacher_a, p.teacher_b, p.tau_k, p.tau_tok
            ));
        }
        out
    }
}

/// Pairwise Kendall tau-b of step counts (and of token counts, for contrast)
/// over the examples every teacher scored. Pairs are listed with teacher ids
/// in lexicographic order, so the report does not depend on input order.
pub fn cross_teacher_agreement(
    scores_by_teacher: &BTreeMap<String, Vec<DoTScore>>,
) -> Result<AgreementReport, AnalysisError> {
    if scores_by_teacher.len() < 2 {
        return Err(AnalysisError::TooFewTeachers(scores_by_teacher.len()));
    }
    let mut by_teacher: BTreeMap<&str, HashMap<&str, &DoTScore>> = BTreeMap::new();
    for (teacher, scores) in scores_by_teacher {
        let mut m = HashMap::new();
        for s in scores {
            if m.insert(s.example_id.as_str(), s).is_some() {
                return Err(AnalysisError::DuplicateScore {
                    teacher: teacher.clone(),
                    example: s.example_id.clone(),
                });
            }
        }
        by_teacher.insert(teacher.as_str(), m);
    }
    let mut shared: Option<BTreeSet<&str>> = None;
    for m in by_teacher.values() {
        let ids: BTreeSet<&str> = m.keys().copied().collect();
        shared = Some(match shared {
            None => ids,
            Some(s) => s.intersection(&ids).copied().collect(),
        });
    }
    let shared: Vec<&str> = shared.unwrap_or_default().into_iter().collect();
    if shared.len() < 3 {
        return Err(AnalysisError::InsufficientOverlap(shared.len()));
    }
    let column = |m: &HashMap<&str, &DoTScore>, f: fn(&DoTScore) -> f64| -> Vec<f64> {
        shared.iter().map(|id| f(m[id])).collect()
    };
    let teachers: Vec<&str> = by_teacher.keys().copied().collect();
    let mut pairs = Vec::new();
    for (i, a) in teachers.iter().enumerate() {
        for b in &teachers[i + 1..] {
            let (ma, mb) = (&by_teacher[a], &by_teacher[b]);
            pairs.push(PairAgreement {
                teacher_a: a.to_string(),
                teacher_b: b.to_string(),
                tau_k: kendall_tau(&column(ma, |s| f64::from(s.k)), &column(mb, |s| f64::from(s.k)))?,
                tau_tok: kendall_tau(&column(ma, |s| s.tok as f64), &column(mb, |s| s.tok as f64))?,
            });
        }
    }
    Ok(AgreementReport {
        teachers: teachers.iter().map(|t| t.to_string()).collect(),
        shared_examples: shared.len(),
        excluded: by_teacher
            .iter()
            .map(|(t, m)| (t.to_string(), m.len() - shared.len()))
            .collect(),
        pairs,
    })
}

pub const PARTIAL_METHOD: &str = "partial Spearman of k with label given tok: Pearson correlation of \
the least-squares residuals of rank(k)~rank(tok) and rank(label)~rank(tok)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundReport {
    pub n: usize,
    pub spearman_k_label: f64,
    pub spearman_tok_label: f64,
    /// `None` when tok is constant and the partial correlation is undefined.
    pub partial_k_label_given_tok: Option<f64>,
    /// Set when the label or k is fully explained by tok (residual variance
    /// zero); the partial correlation is then reported as 0.
    pub degenerate_residuals: bool,
    pub method: String,
}

fn residuals(y: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    x.iter()
        .zip(y)
        .map(|(a, b)| b - (my + slope * (a - mx)))
        .collect()
}

/// Raw and tok-controlled rank correlations of step count with a label.
pub fn length_confound(
    scores: &[DoTScore],
    labels: &[f64],
) -> Result<ConfoundReport, AnalysisError> {
    let k: Vec<f64> = scores.iter().map(|s| f64::from(s.k)).collect();
    let tok: Vec<f64> = scores.iter().map(|s| s.tok as f64).collect();
    check_pair(&k, labels, 4)?;
    let rk = average_ranks(&k);
    let rt = average_ranks(&tok);
    let rl = average_ranks(labels);
    let constant_tok = rt.iter().all(|&r| r == rt[0]);
    let (partial, degenerate) = if constant_tok {
        (None, false)
    } else {
        let ek = residuals(&rk, &rt);
        let el = residuals(&rl, &rt);
        // Rank sums of squares are O(n^3); treat relative noise as zero.
        let scale = (rk.len() as f64).powi(3);
        let flat = |e: &[f64]| e.iter().map(|v| v * v).sum::<f64>() <= 1e-18 * scale;
        if flat(&ek) || flat(&el) {
            (Some(0.0), true)
        } else {
            (Some(pearson(&ek, &el).unwrap_or(0.0)), false)
        }
    };
    Ok(ConfoundReport {
        n: k.len(),
        spearman_k_label: spearman(&k, labels)?,
        spearman_tok_label: spearman(&tok, labels)?,
        partial_k_label_given_tok: partial,
        degenerate_residuals: degenerate,
        method: PARTIAL_METHOD.to_string(),
    })
}
