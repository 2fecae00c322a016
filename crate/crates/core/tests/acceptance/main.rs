//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Run with `cargo test --test acceptance`.

#[path = "../common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dot_curriculum::analyzer::{cross_teacher_agreement, kendall_counts, spearman};
use dot_curriculum::bucketer::{bucketize, BucketSpec};
use dot_curriculum::corpus::{Confidence, DoTScore, Example, RawTrace, TeacherProfile, Trace};
use dot_curriculum::harvester::{HarvestJob, Harvester};
use dot_curriculum::mock::{MockConfig, MockEndpoint};
use dot_curriculum::scheduler::{
    baseline_order, build_curriculum, build_curriculum_with_weights, phase_weights, Ordering,
    SchedulePlan,
};
use dot_curriculum::scorer::{dot_norm, score_corpus};
use dot_curriculum::segmenter::{segment, segment_trace, SegmentationRules};
use dot_curriculum::synthetic::{
    noisy_depth, planted_corpus, render_trace, simulate_teacher, TeacherSim, TraceStyle,
};

/// Relative error allowed against the 50-digit oracle.
const ORACLE_REL_TOL: f64 = 1e-12;
/// Allowed deviation of a weight vector's sum from 1.
const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Minimum deep-bucket weight for t = 2, alpha = 20.
const DEEP_WEIGHT_MIN: f64 = 0.999_999_0;
const H1_MIN_SPEARMAN: f64 = 0.85;
/// Agreement between the fast Spearman and the quadratic rank oracle.
const SPEARMAN_ORACLE_TOL: f64 = 1e-12;
/// Scheduling jitter tolerated when auditing server-side arrival times.
const ARRIVAL_JITTER: Duration = Duration::from_millis(25);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("AC1 dot_norm matches high-precision oracle", ac1_oracle),
        ("AC2 phase weight properties", ac2_weights),
        ("AC3 staged equals one-hot mixed", ac3_staged_limit),
        ("AC4 pipeline determinism", ac4_determinism),
        ("AC5 segmenter hand-labeled suite", ac5_segmenter_suite),
        ("AC6 planted-difficulty Spearman", ac6_planted_spearman),
        ("AC7 structure vs length separation", ac7_structure_vs_length),
        ("AC8 fast Kendall equals pair-counting oracle", ac8_kendall_oracle),
        ("AC9 matched per-phase budgets", ac9_matched_budgets),
        ("AC10 harvest robustness against flaky endpoint", ac10_harvest),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name} ({detail}) [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{secs:.2}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------

fn ac1_oracle() -> Outcome {
    let rows = common::dot_norm_oracle();
    ensure(rows.len() == 1000, || format!("expected 1000 rows, got {}", rows.len()))?;
    let mut worst = 0.0f64;
    for r in &rows {
        ensure((1..=50).contains(&r.k) && (1..=1_000_000).contains(&r.tok), || {
            format!("row out of range: {r:?}")
        })?;
        let rel = (dot_norm(r.k, r.tok) - r.value).abs() / r.value;
        worst = worst.max(rel);
        ensure(rel <= ORACLE_REL_TOL, || {
            format!("k={} tok={}: relative error {rel:e}", r.k, r.tok)
        })?;
    }
    Ok(format!("1000 pairs, max rel err {worst:.2e}"))
}

fn ac2_weights() -> Outcome {
    let alphas = [0.0, 0.5, 1.0, 2.0, 5.0, 20.0];
    let mut worst = 0.0f64;
    for t in 1..=64 {
        for &a in &alphas {
            let w = phase_weights(t, a);
            ensure(w.len() == t, || format!("t={t}: {} weights", w.len()))?;
            let err = (w.iter().sum::<f64>() - 1.0).abs();
            worst = worst.max(err);
            ensure(err <= WEIGHT_SUM_TOL, || format!("t={t} alpha={a}: sum off by {err:e}"))?;
            if a == 0.0 {
                ensure(w.iter().all(|&x| x == 1.0 / t as f64), || {
                    format!("t={t}: alpha=0 not uniform: {w:?}")
                })?;
            }
        }
    }
    let w = phase_weights(2, 20.0);
    let exact = 1_048_576.0 / 1_048_577.0;
    ensure(w[1] >= DEEP_WEIGHT_MIN, || format!("deep weight {}", w[1]))?;
    ensure((w[1] - exact).abs() <= 1e-15, || format!("deep weight {} vs {exact}", w[1]))?;
    Ok(format!("384 weight vectors, max sum err {worst:.1e}, w2(t=2,a=20)={:.9}", w[1]))
}

/// Random scores over `n` examples with k in `1..=max_k`.
fn random_scores(rng: &mut ChaCha8Rng, n: usize, max_k: u32) -> (Vec<Example>, Vec<DoTScore>) {
    let tasks = ["math", "qa", "logic"];
    let examples: Vec<Example> = (0..n)
        .map(|i| Example::new(format!("r{i:04}"), tasks[i % 3], format!("prompt {i}")))
        .collect();
    let scores = examples
        .iter()
        .map(|e| {
            let k = rng.random_range(1..=max_k);
            let tok = rng.random_range(k as u64..=40 * k as u64);
            DoTScore {
                example_id: e.id.clone(),
                teacher_id: "t".into(),
                k,
                tok,
                dot_norm: dot_norm(k, tok),
                n_samples: 1,
            }
        })
        .collect();
    (examples, scores)
}

fn random_spec(rng: &mut ChaCha8Rng, max_k: u32) -> BucketSpec {
    let n = rng.random_range(1..=5usize);
    let mut inner: Vec<u32> = (2..=max_k).collect();
    inner.shuffle(rng);
    let mut edges: Vec<u32> = inner.into_iter().take(n - 1).collect();
    edges.push(1);
    edges.sort_unstable();
    BucketSpec {
        edges,
        max_task_share: 1.0,
    }
}

fn ac3_staged_limit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut done = 0;
    let mut phases_checked = 0;
    while done < 50 {
        let n = rng.random_range(20..300);
        let (examples, scores) = random_scores(&mut rng, n, 12);
        let spec = random_spec(&mut rng, 12);
        let b = bucketize(&scores, &examples, &spec).map_err(|e| e.to_string())?;
        let phases = rng.random_range(1..=b.buckets.len());
        let smallest = b.buckets[..phases].iter().map(|x| x.len()).min().unwrap();
        if smallest == 0 {
            continue;
        }
        let plan = SchedulePlan::staged(phases, rng.random_range(1..=smallest), rng.random());
        let staged = build_curriculum(&b.buckets, &plan).map_err(|e| e.to_string())?;
        let one_hot = build_curriculum_with_weights(&b.buckets, &plan, |t| {
            (1..=t).map(|i| if i == t { 1.0 } else { 0.0 }).collect()
        })
        .map_err(|e| e.to_string())?;
        // Very large alpha drives the mixed weights to exactly (0, ..., 0, 1).
        let sharp = SchedulePlan::mixed(phases, plan.budget_per_phase, 1e6, plan.seed);
        let mixed = build_curriculum(&b.buckets, &sharp).map_err(|e| e.to_string())?;
        for (t, p) in staged.phases.iter().enumerate() {
            ensure(p.example_ids == one_hot.phases[t].example_ids, || {
                format!("config {done} phase {}: one-hot manifest differs", t + 1)
            })?;
            ensure(p.example_ids == mixed.phases[t].example_ids, || {
                format!("config {done} phase {}: alpha=1e6 manifest differs", t + 1)
            })?;
            let bucket = &b.buckets[t];
            ensure(p.example_ids.iter().all(|id| bucket.member_ids.contains(id)), || {
                format!("config {done} phase {}: draws outside bucket {}", t + 1, t + 1)
            })?;
            phases_checked += 1;
        }
        done += 1;
    }
    Ok(format!("50 configurations, {phases_checked} phases identical"))
}

fn copy_fixture(dir: &Path) {
    for f in ["synthetic_corpus.jsonl", "synthetic_raw_traces.jsonl"] {
        std::fs::copy(common::data_dir().join(f), dir.join(f)).unwrap();
    }
    std::fs::write(
        dir.join("dotc.toml"),
        "seed = 42\n\n[bucket]\nedges = \"1-3,4-6,7+\"\nmax_task_share = 0.4\n\n\
         [schedule]\nmode = \"mixed\"\nalpha = 1.0\nbudget = 40\n",
    )
    .unwrap();
}

fn run_pipeline(dir: &Path) -> Result<(), String> {
    let wd = dir.to_str().unwrap();
    let steps: [&[&str]; 8] = [
        &["segment", "--traces", "synthetic_raw_traces.jsonl", "--out", "traces.jsonl",
          "--errors", "segment_errors.jsonl", "--audit-out", "audit.jsonl", "--seed", "42"],
        &["score", "--traces", "traces.jsonl", "--out", "scores.jsonl", "--errors", "score_errors.jsonl"],
        &["bucket", "--scores", "scores.jsonl", "--corpus", "synthetic_corpus.jsonl",
          "--out", "buckets.jsonl", "--report", "buckets.txt", "--report-json", "buckets.json"],
        &["schedule", "--buckets", "buckets.jsonl", "--out", "mixed.jsonl", "--summary", "mixed.txt"],
        &["schedule", "--buckets", "buckets.jsonl", "--out", "staged.jsonl", "--mode", "staged"],
        &["baseline", "--corpus", "synthetic_corpus.jsonl", "--traces", "traces.jsonl",
          "--kind", "token-length", "--out", "token_length.jsonl"],
        &["baseline", "--corpus", "synthetic_corpus.jsonl", "--kind", "random", "--out", "random.jsonl"],
        &["analyze", "--scores", "scores.jsonl", "--corpus", "synthetic_corpus.jsonl", "--out", "analysis.json"],
    ];
    for args in steps {
        let mut argv = vec!["dotc", "--workdir", wd, "--config", "dotc.toml"];
        argv.extend_from_slice(args);
        let code = dot_curriculum::cli::run(argv);
        ensure(code == 0, || format!("`{}` exited with {code}", args.join(" ")))?;
    }
    Ok(())
}

fn ac4_determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        copy_fixture(d);
        run_pipeline(d)?;
    }
    let mut names: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let mut bytes = 0;
    for n in &names {
        let x = std::fs::read(a.path().join(n)).unwrap();
        let y = std::fs::read(b.path().join(n)).map_err(|e| format!("{n}: {e}"))?;
        ensure(x == y, || format!("{n} differs between runs"))?;
        bytes += x.len();
    }
    let manifest = std::fs::read_to_string(a.path().join("mixed.jsonl")).unwrap();
    ensure(manifest.lines().count() > 1, || "manifest has no phases".into())?;
    Ok(format!("{} files, {bytes} bytes identical", names.len()))
}

fn ac5_segmenter_suite() -> Outcome {
    let rules = SegmentationRules::default();
    let cases = common::segmenter_suite();
    ensure(cases.len() >= 60, || format!("only {} cases", cases.len()))?;
    let (mut high, mut gaps) = (0, 0);
    for c in &cases {
        let s = segment(&c.text, &rules).map_err(|e| format!("{}: {e}", c.name))?;
        if c.confidence == "high" {
            high += 1;
            ensure(s.confidence == Confidence::High && s.steps.len() == c.k, || {
                format!("{}: got k={} {:?}, expected k={} high", c.name, s.steps.len(), s.confidence, c.k)
            })?;
        }
        if c.gap {
            gaps += 1;
            ensure(s.confidence == Confidence::Low, || format!("{}: gap not flagged", c.name))?;
        }
    }
    Ok(format!("{} cases, {high} high-confidence exact, {gaps} gaps flagged", cases.len()))
}

/// Spearman via quadratic average ranks and the Pearson formula.
fn spearman_oracle(xs: &[f64], ys: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let less = v.iter().filter(|&&y| y < x).count() as f64;
                let equal = v.iter().filter(|&&y| y == x).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(xs), rank(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..xs.len() {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx).powi(2);
        syy += (ry[i] - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

fn segment_and_score(raws: &[RawTrace]) -> Result<Vec<DoTScore>, String> {
    let rules = SegmentationRules::default();
    let traces: Vec<Trace> = raws
        .iter()
        .map(|r| segment_trace(r, &rules).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let out = score_corpus(&traces);
    ensure(out.failures.is_empty(), || format!("{} score failures", out.failures.len()))?;
    Ok(out.scores)
}

fn ac6_planted_spearman() -> Outcome {
    let examples = planted_corpus(1000, 6);
    let teacher = TeacherSim {
        teacher_id: "planted".into(),
        style: TraceStyle::Mixed,
        verbosity: 1.0,
        seed: 60,
    };
    let scores = segment_and_score(&simulate_teacher(&examples, &teacher, 1))?;
    let label: BTreeMap<&str, f64> = examples
        .iter()
        .map(|e| (e.id.as_str(), e.external_difficulty.unwrap()))
        .collect();
    let ks: Vec<f64> = scores.iter().map(|s| f64::from(s.k)).collect();
    let ds: Vec<f64> = scores.iter().map(|s| label[s.example_id.as_str()]).collect();
    let rho = spearman(&ks, &ds).map_err(|e| e.to_string())?;
    let oracle = spearman_oracle(&ks, &ds);
    ensure((rho - oracle).abs() <= SPEARMAN_ORACLE_TOL, || {
        format!("fast {rho} vs oracle {oracle}")
    })?;
    ensure(rho >= H1_MIN_SPEARMAN, || format!("spearman {rho:.4} < {H1_MIN_SPEARMAN}"))?;
    Ok(format!("n=1000, spearman={rho:.4} (oracle {oracle:.4})"))
}

fn ac7_structure_vs_length() -> Outcome {
    let examples = planted_corpus(300, 7);
    let mut k_rng = ChaCha8Rng::seed_from_u64(70);
    let mut text_rng = ChaCha8Rng::seed_from_u64(71);
    let mut raws = Vec::new();
    for e in &examples {
        let k = noisy_depth(e.external_difficulty.unwrap() as u32, &mut k_rng);
        for (teacher, verbosity) in [("concise", 1.0), ("verbose", 2.0)] {
            let mut text = render_trace(k, TraceStyle::Numbered, verbosity, &mut text_rng);
            if teacher == "verbose" {
                // Rank-breaking padding: a random-length closing remark.
                let pad = text_rng.random_range(0..40);
                text.push_str(&format!("\nIn summary{}", " indeed".repeat(pad)));
            }
            raws.push(RawTrace {
                example_id: e.id.clone(),
                teacher_id: teacher.into(),
                raw_text: text,
            });
        }
    }
    let mut by_teacher: BTreeMap<String, Vec<DoTScore>> = BTreeMap::new();
    for s in segment_and_score(&raws)? {
        by_teacher.entry(s.teacher_id.clone()).or_default().push(s);
    }
    let report = cross_teacher_agreement(&by_teacher).map_err(|e| e.to_string())?;
    let pair = &report.pairs[0];
    ensure(pair.tau_k == 1.0, || format!("tau_b(k) = {}", pair.tau_k))?;
    ensure(pair.tau_tok < 1.0, || format!("tau_b(tok) = {}", pair.tau_tok))?;
    Ok(format!(
        "n={}, tau_b(k)={:.4}, tau_b(tok)={:.4}",
        report.shared_examples, pair.tau_k, pair.tau_tok
    ))
}

/// Quadratic pair count: (concordant - discordant, ties in x, ties in y).
fn kendall_oracle(xs: &[f64], ys: &[f64]) -> (i64, u64, u64) {
    let (mut s, mut tx, mut ty) = (0i64, 0u64, 0u64);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let dx = xs[i].partial_cmp(&xs[j]).unwrap();
            let dy = ys[i].partial_cmp(&ys[j]).unwrap();
            use std::cmp::Ordering::*;
            match (dx, dy) {
                (Equal, _) | (_, Equal) => {
                    tx += u64::from(dx == Equal);
                    ty += u64::from(dy == Equal);
                }
                _ if dx == dy => s += 1,
                _ => s -= 1,
            }
        }
    }
    (s, tx, ty)
}

fn ac8_kendall_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut heavy = 0;
    for inst in 0..500 {
        let n = rng.random_range(2..=200usize);
        // One in three instances draws from a tiny value set (heavy ties).
        let levels = match inst % 3 {
            0 => {
                heavy += 1;
                rng.random_range(1..=4)
            }
            1 => 20,
            _ => 1_000_000,
        };
        let mut draw = || (0..n).map(|_| f64::from(rng.random_range(0..levels))).collect::<Vec<_>>();
        let xs = draw();
        let ys = draw();
        let fast = kendall_counts(&xs, &ys);
        let (s, tx, ty) = kendall_oracle(&xs, &ys);
        ensure(fast.score == s && fast.tied_x == tx && fast.tied_y == ty, || {
            format!("instance {inst} (n={n}): fast {fast:?} vs oracle S={s} tx={tx} ty={ty}")
        })?;
        let pairs = (n * (n - 1) / 2) as u64;
        let (dx, dy) = ((pairs - tx) as f64, (pairs - ty) as f64);
        let tau = if dx == 0.0 || dy == 0.0 { 0.0 } else { s as f64 / (dx * dy).sqrt() };
        ensure(fast.tau_b() == tau, || {
            format!("instance {inst}: tau {} vs oracle {tau}", fast.tau_b())
        })?;
    }
    Ok(format!("500 instances ({heavy} heavy-tie), exact match"))
}

fn ac9_matched_budgets() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for cfg in 0..20 {
        let n = rng.random_range(150..400);
        let examples = planted_corpus(n, rng.random());
        let teacher = TeacherSim {
            teacher_id: "t".into(),
            style: TraceStyle::Mixed,
            verbosity: 1.0,
            seed: rng.random(),
        };
        let raws = simulate_teacher(&examples, &teacher, 1);
        let rules = SegmentationRules::default();
        let traces: Vec<Trace> = raws.iter().map(|r| segment_trace(r, &rules).unwrap()).collect();
        let scores = score_corpus(&traces).scores;
        let b = bucketize(&scores, &examples, &BucketSpec::default()).map_err(|e| e.to_string())?;
        let phases = rng.random_range(1..=3);
        let budget = rng.random_range(1..=b.buckets[..phases].iter().map(|x| x.len()).min().unwrap() / phases.max(1)).max(1);
        let seed = rng.random();
        let plan = if rng.random_bool(0.5) {
            SchedulePlan::staged(phases, budget, seed)
        } else {
            SchedulePlan::mixed(phases, budget, [0.0, 0.5, 1.0, 2.0, 5.0][rng.random_range(0..5)], seed)
        };
        let dot = build_curriculum(&b.buckets, &plan).map_err(|e| format!("config {cfg}: {e}"))?;
        let expected = vec![budget; phases];
        ensure(dot.phase_sizes() == expected, || format!("config {cfg}: dot sizes {:?}", dot.phase_sizes()))?;
        for kind in [Ordering::TokenLength, Ordering::JudgeScore, Ordering::Random] {
            let m = baseline_order(&examples, &traces, kind, &plan).map_err(|e| format!("config {cfg}: {e}"))?;
            ensure(m.phase_sizes() == expected, || {
                format!("config {cfg} {kind:?}: sizes {:?} vs {expected:?}", m.phase_sizes())
            })?;
        }
    }
    Ok("20 configurations, 4 orderings each, per-phase counts identical".into())
}

fn ac10_harvest() -> Outcome {
    const RATE: f64 = 40.0;
    let mock = MockEndpoint::start(MockConfig {
        fail_rate: 0.3,
        seed: 10,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let examples = planted_corpus(30, 10);
    let cache = tempfile::tempdir().unwrap();
    let teacher = TeacherProfile {
        teacher_id: "mock".into(),
        endpoint_url: mock.url(),
        model_name: "mock-model".into(),
        template_id: "numbered".into(),
        samples_per_example: 2,
        temperature: 0.7,
    };
    let mut job = HarvestJob::new("unused.jsonl", teacher, cache.path());
    job.rate_limit = RATE;
    job.max_in_flight = 8;
    job.max_retries = 3;
    job.backoff_base_ms = 5;
    let out = Harvester::with_api_key(job, "test-key")
        .and_then(|h| h.run(&examples))
        .map_err(|e| e.to_string())?;

    let expected = examples.len() * 2;
    ensure(out.traces.len() + out.failures.len() == expected, || {
        format!("{} traces + {} failures != {expected}", out.traces.len(), out.failures.len())
    })?;
    ensure(mock.injected_failures() > 0, || "no failures were injected".into())?;
    ensure(out.stats.requests_sent == mock.request_count(), || {
        format!("client sent {} requests, server saw {}", out.stats.requests_sent, mock.request_count())
    })?;

    // Client side: dispatches are at least 1/rate apart.
    let interval = Duration::from_secs_f64(1.0 / RATE);
    let offs = &out.stats.request_offsets;
    for w in offs.windows(2) {
        ensure(w[1] - w[0] + Duration::from_micros(200) >= interval, || {
            format!("dispatches {:?} apart, limit {interval:?}", w[1] - w[0])
        })?;
    }
    // Server side: no window holds more arrivals than the rate allows.
    let mut arr = mock.arrivals();
    arr.sort();
    for i in 0..arr.len() {
        for j in i + 1..arr.len() {
            let span = (arr[j] - arr[i] + ARRIVAL_JITTER).as_secs_f64();
            let allowed = (span * RATE).floor() as usize + 1;
            let count = j - i + 1;
            ensure(count <= allowed, || {
                format!("{count} arrivals within {span:.3}s (allowed {allowed})")
            })?;
        }
    }
    let observed = (arr.len() - 1) as f64 / (*arr.last().unwrap() - arr[0]).as_secs_f64();
    Ok(format!(
        "{} traces + {} failures = {expected}, {} requests, {} injected 500s, observed {observed:.1} req/s <= {RATE}",
        out.traces.len(),
        out.failures.len(),
        out.stats.requests_sent,
        mock.injected_failures()
    ))
}
