use std::collections::BTreeSet;

use proptest::prelude::*;

use dot_curriculum::analyzer::{kendall_counts, spearman};
use dot_curriculum::bucketer::{bucketize, task_cap, BucketSpec};
use dot_curriculum::corpus::{Confidence, DoTScore, Example};
use dot_curriculum::scheduler::{
    build_curriculum, largest_remainder, phase_weights, CurriculumManifest, SchedulePlan,
};
use dot_curriculum::scorer::{aggregate_self_consistency, dot_norm};
use dot_curriculum::segmenter::{render_numbered, segment, SegmentationRules};

fn body() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z]{1,8}", 1..6).prop_map(|w| w.join(" "))
}

fn bodies() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(body(), 1..15)
}

fn numbered(bodies: &[String]) -> String {
    bodies
        .iter()
        .enumerate()
        .map(|(i, b)| format!("{}. {b}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

fn score(id: &str, k: u32, tok: u64) -> DoTScore {
    DoTScore {
        example_id: id.into(),
        teacher_id: "t".into(),
        k,
        tok,
        dot_norm: dot_norm(k, tok),
        n_samples: 1,
    }
}

fn squash(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

proptest! {
    #[test]
    fn numbered_traces_segment_exactly(bs in bodies()) {
        let s = segment(&numbered(&bs), &SegmentationRules::default()).unwrap();
        prop_assert_eq!(s.steps.len(), bs.len());
        prop_assert_eq!(s.confidence, Confidence::High);
    }

    #[test]
    fn segmentation_loses_no_content(bs in bodies()) {
        let s = segment(&numbered(&bs), &SegmentationRules::default()).unwrap();
        let got: String = s.steps.iter().map(|st| squash(&st.text)).collect();
        let want: String = bs.iter().map(|b| squash(b)).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn resegmenting_rendered_steps_is_idempotent(bs in bodies(), bullets in any::<bool>()) {
        let text = if bullets {
            bs.iter().map(|b| format!("- {b}")).collect::<Vec<_>>().join("\n")
        } else {
            numbered(&bs)
        };
        let rules = SegmentationRules::default();
        let first = segment(&text, &rules).unwrap();
        let again = segment(&render_numbered(&first.steps), &rules).unwrap();
        prop_assert_eq!(again.steps.len(), first.steps.len());
        prop_assert_eq!(again.steps, first.steps);
    }

    #[test]
    fn appending_a_step_adds_one(bs in bodies(), extra in body()) {
        let rules = SegmentationRules::default();
        let text = numbered(&bs);
        let before = segment(&text, &rules).unwrap();
        let after = segment(&format!("{text}\n{}. {extra}", bs.len() + 1), &rules).unwrap();
        prop_assert_eq!(after.steps.len(), before.steps.len() + 1);
        prop_assert_eq!(after.confidence, Confidence::High);
    }

    #[test]
    fn segmentation_is_deterministic(text in "[-*0-9a-z.()\n ]{1,200}") {
        prop_assume!(!text.trim().is_empty());
        let rules = SegmentationRules::default();
        prop_assert_eq!(segment(&text, &rules).unwrap(), segment(&text, &rules).unwrap());
    }

    #[test]
    fn dot_norm_is_monotone(k in 1u32..50, tok in 1u64..1_000_000) {
        prop_assert!(dot_norm(k + 1, tok) > dot_norm(k, tok));
        prop_assert!(dot_norm(k, tok + 1) < dot_norm(k, tok));
        prop_assert!(dot_norm(k, tok) > 0.0);
    }

    #[test]
    fn aggregation_ignores_order_and_duplication(
        ks in prop::collection::vec((1u32..30, 1u64..500), 1..9),
        seed in any::<u64>(),
    ) {
        let samples: Vec<DoTScore> = ks.iter().map(|&(k, t)| score("e", k, t)).collect();
        let base = aggregate_self_consistency(&samples).unwrap();
        let mut shuffled = samples.clone();
        let n = shuffled.len();
        shuffled.rotate_left(seed as usize % n);
        shuffled.reverse();
        let other = aggregate_self_consistency(&shuffled).unwrap();
        prop_assert_eq!(base.k, other.k);
        prop_assert_eq!(base.tok, other.tok);
        let doubled: Vec<DoTScore> = samples.iter().chain(samples.iter()).cloned().collect();
        let twice = aggregate_self_consistency(&doubled).unwrap();
        prop_assert_eq!(base.k, twice.k);
        prop_assert_eq!(base.tok, twice.tok);
        let mut sorted: Vec<u32> = ks.iter().map(|p| p.0).collect();
        sorted.sort_unstable();
        prop_assert!(sorted.contains(&base.k));
    }

    #[test]
    fn buckets_partition_and_respect_caps(
        ks in prop::collection::vec(1u32..20, 1..200),
        share in 0.2f64..=1.0,
        cut1 in 2u32..6,
        gap in 1u32..6,
    ) {
        let examples: Vec<Example> = (0..ks.len())
            .map(|i| Example::new(format!("e{i:03}"), ["a", "b", "c"][i % 3], "p"))
            .collect();
        let scores: Vec<DoTScore> = ks.iter().enumerate().map(|(i, &k)| score(&format!("e{i:03}"), k, 10)).collect();
        let spec = BucketSpec { edges: vec![1, cut1, cut1 + gap], max_task_share: share };
        let b = bucketize(&scores, &examples, &spec).unwrap();
        let mut seen = BTreeSet::new();
        for bucket in &b.buckets {
            for (id, &k) in bucket.member_ids.iter().zip(&bucket.member_k) {
                prop_assert!(bucket.range.contains(k));
                prop_assert!(seen.insert(id.clone()), "{} twice", id);
            }
            let cap = task_cap(share, bucket.len());
            for (task, &count) in &bucket.task_histogram {
                prop_assert!(count <= cap, "task {} has {} > cap {}", task, count, cap);
            }
        }
        for o in &b.overflow {
            prop_assert!(seen.insert(o.example_id.clone()));
        }
        prop_assert_eq!(seen.len(), ks.len());
        // Deeper buckets never hold shallower examples.
        for w in b.buckets.windows(2) {
            if let (Some(a), Some(c)) = (w[0].member_k.iter().max(), w[1].member_k.iter().min()) {
                prop_assert!(a < c);
            }
        }
    }

    #[test]
    fn weights_are_a_nondecreasing_distribution(t in 1usize..64, alpha in 0.0f64..30.0) {
        let w = phase_weights(t, alpha);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!(w.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn largest_remainder_is_exact_and_close(total in 0usize..10_000, t in 1usize..20, alpha in 0.0f64..5.0) {
        let w = phase_weights(t, alpha);
        let parts = largest_remainder(total, &w);
        prop_assert_eq!(parts.iter().sum::<usize>(), total);
        for (p, wi) in parts.iter().zip(&w) {
            prop_assert!((*p as f64 - total as f64 * wi).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn rank_statistics_ignore_monotone_transforms(
        pairs in prop::collection::vec((0i32..30, 0i32..30), 3..80),
    ) {
        let xs: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
        let warped: Vec<f64> = xs.iter().map(|x| (x / 3.0).exp() + 7.0).collect();
        let r = spearman(&xs, &ys).unwrap();
        prop_assert!((r - spearman(&warped, &ys).unwrap()).abs() < 1e-12);
        prop_assert_eq!(kendall_counts(&xs, &ys), kendall_counts(&warped, &ys));
        // Reversing one variable flips the sign.
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        prop_assert!((spearman(&neg, &ys).unwrap() + r).abs() < 1e-12);
        prop_assert_eq!(kendall_counts(&neg, &ys).score, -kendall_counts(&xs, &ys).score);
        prop_assert!((-1.0..=1.0).contains(&r));
    }

    #[test]
    fn spearman_and_kendall_agree_in_sign_on_monotone_data(xs in prop::collection::btree_set(0i32..1000, 3..60)) {
        let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        prop_assert!((spearman(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        prop_assert_eq!(kendall_counts(&xs, &ys).tau_b(), 1.0);
    }

    #[test]
    fn manifests_round_trip_and_never_repeat(
        sizes in prop::collection::vec(20usize..40, 1..5),
        budget in 1usize..5,
        alpha in 0.0f64..4.0,
        seed in any::<u64>(),
    ) {
        let mut examples = Vec::new();
        let mut scores = Vec::new();
        for (b, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                let id = format!("b{b}-{i:02}");
                examples.push(Example::new(id.clone(), "t", "p"));
                scores.push(score(&id, b as u32 + 1, 10));
            }
        }
        let edges: Vec<u32> = (1..=sizes.len() as u32).collect();
        let spec = BucketSpec { edges, max_task_share: 1.0 };
        let b = bucketize(&scores, &examples, &spec).unwrap();
        let plan = SchedulePlan::mixed(sizes.len(), budget, alpha, seed);
        let m = build_curriculum(&b.buckets, &plan).unwrap();
        let all: Vec<&String> = m.phases.iter().flat_map(|p| &p.example_ids).collect();
        let unique: BTreeSet<&String> = all.iter().copied().collect();
        prop_assert_eq!(unique.len(), all.len());
        let back = CurriculumManifest::from_jsonl(&m.to_jsonl()).unwrap();
        prop_assert_eq!(back, m);
    }
}
