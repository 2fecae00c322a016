//! Depth-of-thought (DoT) difficulty scoring and curriculum construction.
//!
//! The pipeline runs harvest → segment → score → bucket → schedule, with
//! rank-statistic analysis on the side:
//!
//! - [`harvester`] collects teacher reasoning traces from chat endpoints.
//! - [`segmenter`] splits each trace into steps.
//! - [`scorer`] turns step counts into `DoT = k` and `k / ln(1 + tok)`.
//! - [`bucketer`] groups examples into depth ranges with task caps.
//! - [`scheduler`] builds staged / mixed manifests and baseline orderings.
//! - [`analyzer`] checks scores against labels and across teachers.

pub mod analyzer;
pub mod bucketer;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod harvester;
pub mod mock;
pub mod scheduler;
pub mod scorer;
pub mod segmenter;
pub mod synthetic;

pub use analyzer::{cross_teacher_agreement, kendall_tau, length_confound, spearman};
pub use bucketer::{bucketize, describe, Bucket, BucketSpec};
pub use corpus::{
    count_tokens, read_corpus, read_manifest, write_manifest, Confidence, DoTScore, Example,
    RawTrace, SegmentationMode, Step, TeacherProfile, Trace,
};
pub use error::{Error, Result};
pub use scheduler::{
    baseline_order, build_curriculum, filter_by_depth, phase_weights, CurriculumManifest,
    SchedulePlan, ScheduleMode,
};
pub use scorer::{aggregate_self_consistency, score, score_corpus};
pub use segmenter::{audit_sample, segment, SegmentationRules};
