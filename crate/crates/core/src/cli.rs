//! `dotc` command-line front end.
//!
//! Exit codes: 0 success, 1 validation failure (bad input, unmet analysis
//! threshold), 2 partial failure (some records could not be harvested,
//! segmented, or scored), 64 usage error.
//!
//! Parameters come from flags, then from the optional TOML config file
//! (`--config`), then from built-in defaults. Relative paths resolve against
//! `--workdir`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use crate::analyzer::{cross_teacher_agreement, length_confound, spearman};
use crate::bucketer::{bucketize, describe, Bucket, BucketSpec};
use crate::corpus::{
    read_corpus, read_jsonl, read_scores, read_traces, write_jsonl, write_manifest,
    write_scores, write_string, write_traces, DoTScore, RawTrace, TeacherProfile,
};
use crate::harvester::{HarvestJob, Harvester, PromptTemplate};
use crate::mock::{MockConfig, MockEndpoint};
use crate::scheduler::{
    baseline_order, build_curriculum, filter_by_depth, MixWindow, Ordering, SchedulePlan,
    ScheduleMode,
};
use crate::scorer::score_corpus;
use crate::segmenter::{audit_sample, segment_trace, MarkerFamily, SegmentationRules};
use crate::synthetic::{planted_corpus, simulate_teacher, TeacherSim, TraceStyle};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "dotc", version, about = "Depth-of-thought difficulty scoring and curriculum building")]
pub struct Cli {
    /// Directory that relative paths resolve against
    #[arg(long, global = true, default_value = ".")]
    pub workdir: PathBuf,
    /// TOML config file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Collect teacher traces from a chat-completion endpoint
    Harvest(HarvestArgs),
    /// Split raw traces into steps
    Segment(SegmentArgs),
    /// Compute DoT scores from segmented traces
    Score(ScoreArgs),
    /// Group scored examples into depth buckets
    Bucket(BucketArgs),
    /// Build a staged or mixed curriculum manifest from buckets
    Schedule(ScheduleArgs),
    /// Build a baseline manifest ordered by token length, judge score, or at random
    Baseline(BaselineArgs),
    /// Rank-correlation reports: labels vs DoT, cross-teacher agreement, length confound
    Analyze(AnalyzeArgs),
    /// List example ids within a step-count range
    Filter(FilterArgs),
    /// Write a synthetic corpus with planted difficulty and simulated traces
    Synth(SynthArgs),
    /// Serve a mock chat-completion endpoint for offline runs
    MockEndpoint(MockArgs),
}

#[derive(Debug, Args)]
pub struct HarvestArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output trace JSONL
    #[arg(long)]
    pub out: PathBuf,
    /// Failure report JSONL [default: harvest_failures.jsonl]
    #[arg(long)]
    pub failures: Option<PathBuf>,
    /// [default: teacher]
    #[arg(long)]
    pub teacher_id: Option<String>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Self-consistency samples per example [default: 1]
    #[arg(long)]
    pub samples: Option<u32>,
    /// [default: 0.7]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Environment variable holding the API key [default: OPENAI_API_KEY]
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// [default: .dotc-cache]
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Requests per second [default: 2]
    #[arg(long)]
    pub rate_limit: Option<f64>,
    /// [default: 4]
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Concurrent requests [default: 4]
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// First retry delay in milliseconds, doubled per retry [default: 500]
    #[arg(long)]
    pub backoff_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// JSONL with example_id, teacher_id, raw_text
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Segmentation error report JSONL
    #[arg(long)]
    pub errors: Option<PathBuf>,
    /// [default: 3]
    #[arg(long)]
    pub min_step_chars: Option<usize>,
    /// Fail traces without markers instead of splitting on blank lines
    #[arg(long)]
    pub no_paragraph_fallback: bool,
    /// Fraction of traces to write to --audit-out [default: 0.05]
    #[arg(long)]
    pub audit_fraction: Option<f64>,
    #[arg(long)]
    pub audit_out: Option<PathBuf>,
    /// [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub errors: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BucketArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Ranges like 1-3,4-6,7+ or lower edges like 1,4,7 [default: 1-3,4-6,7+]
    #[arg(long)]
    pub edges: Option<String>,
    /// [default: 1.0]
    #[arg(long)]
    pub max_task_share: Option<f64>,
    /// Use only this teacher's scores (required when several are present)
    #[arg(long)]
    pub teacher: Option<String>,
    /// Overflow sidecar JSONL [default: <out>.overflow.jsonl]
    #[arg(long)]
    pub overflow: Option<PathBuf>,
    /// Text report file (stdout when omitted)
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub report_json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Staged,
    Mixed,
}

#[derive(Debug, Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowArg {
    Union,
    Adjacent,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub buckets: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// [default: staged]
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Mixed-mode weight sharpness [default: 1.0]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// [default: number of buckets]
    #[arg(long)]
    pub phases: Option<usize>,
    /// Examples per phase (required here or in config)
    #[arg(long)]
    pub budget: Option<usize>,
    /// [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub with_replacement: bool,
    /// [default: union]
    #[arg(long, value_enum)]
    pub mix_window: Option<WindowArg>,
    /// Per-phase text summary file
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaselineKind {
    TokenLength,
    JudgeScore,
    Random,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Segmented traces (needed for token-length)
    #[arg(long)]
    pub traces: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: BaselineKind,
    /// [default: 3]
    #[arg(long)]
    pub phases: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    /// [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Corpus with external_difficulty labels
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// JSON report file
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fail (exit 1) if any teacher's Spearman(k, label) is below this
    #[arg(long)]
    pub min_spearman: Option<f64>,
    /// Fail (exit 1) if any teacher pair's Kendall tau-b(k) is below this
    #[arg(long)]
    pub min_tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub min_k: Option<u32>,
    #[arg(long)]
    pub max_k: Option<u32>,
    #[arg(long)]
    pub teacher: Option<String>,
    /// One id per line (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StyleArg {
    Numbered,
    Labeled,
    Bulleted,
    Mixed,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub samples: u32,
    #[arg(long, value_enum, default_value_t = StyleArg::Mixed)]
    pub style: StyleArg,
    #[arg(long, default_value = "synthetic-teacher")]
    pub teacher_id: String,
    #[arg(long)]
    pub out_corpus: PathBuf,
    #[arg(long)]
    pub out_traces: PathBuf,
}

#[derive(Debug, Args)]
pub struct MockArgs {
    #[arg(long, default_value_t = 8089)]
    pub port: u16,
    #[arg(long, default_value_t = 0.0)]
    pub fail_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Config file layout. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub segment: SegmentConfig,
    pub bucket: BucketConfig,
    pub schedule: ScheduleConfig,
    pub harvest: HarvestConfig,
    pub analyze: AnalyzeConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub marker_patterns: Option<Vec<MarkerFamily>>,
    pub min_step_chars: Option<usize>,
    pub allow_paragraph_fallback: Option<bool>,
    pub audit_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BucketConfig {
    pub edges: Option<String>,
    pub max_task_share: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub mode: Option<ModeArg>,
    pub alpha: Option<f64>,
    pub phases: Option<usize>,
    pub budget: Option<usize>,
    pub with_replacement: Option<bool>,
    pub mix_window: Option<WindowArg>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestConfig {
    pub teacher_id: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub samples: Option<u32>,
    pub temperature: Option<f64>,
    pub api_key_env: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub rate_limit: Option<f64>,
    pub max_retries: Option<u32>,
    pub max_in_flight: Option<usize>,
    pub backoff_ms: Option<u64>,
    pub templates: Option<Vec<PromptTemplate>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub min_spearman: Option<f64>,
    pub min_tau: Option<f64>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn validation(message: impl ToString) -> Self {
        CliError {
            code: EXIT_VALIDATION,
            message: message.to_string(),
        }
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::validation(e)
    }
}

type CliResult = Result<i32, CliError>;

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("dotc: {}", e.message);
            e.code
        }
    }
}

struct Ctx<'a> {
    workdir: &'a Path,
    config: Config,
}

impl Ctx<'_> {
    fn path(&self, p: &Path) -> PathBuf {
        self.workdir.join(p)
    }
}

pub fn execute(cli: &Cli) -> CliResult {
    let config = match &cli.config {
        Some(p) => {
            let path = cli.workdir.join(p);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        }
        None => Config::default(),
    };
    let ctx = Ctx {
        workdir: &cli.workdir,
        config,
    };
    match &cli.command {
        Command::Harvest(a) => cmd_harvest(&ctx, a),
        Command::Segment(a) => cmd_segment(&ctx, a),
        Command::Score(a) => cmd_score(&ctx, a),
        Command::Bucket(a) => cmd_bucket(&ctx, a),
        Command::Schedule(a) => cmd_schedule(&ctx, a),
        Command::Baseline(a) => cmd_baseline(&ctx, a),
        Command::Analyze(a) => cmd_analyze(&ctx, a),
        Command::Filter(a) => cmd_filter(&ctx, a),
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::MockEndpoint(a) => cmd_mock(a),
    }
}

fn cmd_harvest(ctx: &Ctx, a: &HarvestArgs) -> CliResult {
    let c = &ctx.config.harvest;
    let endpoint = a
        .endpoint
        .clone()
        .or_else(|| c.endpoint.clone())
        .ok_or_else(|| CliError::validation("--endpoint (or harvest.endpoint) is required"))?;
    let model = a
        .model
        .clone()
        .or_else(|| c.model.clone())
        .ok_or_else(|| CliError::validation("--model (or harvest.model) is required"))?;
    let templates = c.templates.clone().unwrap_or_else(|| vec![PromptTemplate::numbered()]);
    let teacher = TeacherProfile {
        teacher_id: a
            .teacher_id
            .clone()
            .or_else(|| c.teacher_id.clone())
            .unwrap_or_else(|| "teacher".into()),
        endpoint_url: endpoint,
        model_name: model,
        template_id: templates[0].template_id.clone(),
        samples_per_example: a.samples.or(c.samples).unwrap_or(1),
        temperature: a.temperature.or(c.temperature).unwrap_or(0.7),
    };
    let cache = a
        .cache_dir
        .clone()
        .or_else(|| c.cache_dir.clone())
        .unwrap_or_else(|| PathBuf::from(".dotc-cache"));
    let mut job = HarvestJob::new(ctx.path(&a.corpus), teacher, ctx.path(&cache));
    job.templates = templates;
    if let Some(v) = a.api_key_env.clone().or_else(|| c.api_key_env.clone()) {
        job.api_key_env = v;
    }
    if let Some(v) = a.rate_limit.or(c.rate_limit) {
        job.rate_limit = v;
    }
    if let Some(v) = a.max_retries.or(c.max_retries) {
        job.max_retries = v;
    }
    if let Some(v) = a.max_in_flight.or(c.max_in_flight) {
        job.max_in_flight = v;
    }
    if let Some(v) = a.backoff_ms.or(c.backoff_ms) {
        job.backoff_base_ms = v;
    }
    job.rules = segmentation_rules(ctx, None, false);

    let harvester = Harvester::from_env(job.clone())?;
    let examples = read_corpus(&job.corpus)?;
    let outcome = harvester.run(&examples)?;
    write_traces(ctx.path(&a.out), &outcome.traces)?;
    let failures_path = a
        .failures
        .clone()
        .unwrap_or_else(|| PathBuf::from("harvest_failures.jsonl"));
    write_jsonl(ctx.path(&failures_path), &outcome.failures)?;
    eprintln!(
        "harvest: {} traces, {} failures, {} requests, {} cache hits",
        outcome.traces.len(),
        outcome.failures.len(),
        outcome.stats.requests_sent,
        outcome.stats.cache_hits
    );
    Ok(if outcome.failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    })
}

fn segmentation_rules(ctx: &Ctx, min_chars: Option<usize>, no_fallback: bool) -> SegmentationRules {
    let c = &ctx.config.segment;
    let d = SegmentationRules::default();
    SegmentationRules {
        marker_patterns: c.marker_patterns.clone().unwrap_or(d.marker_patterns),
        min_step_chars: min_chars.or(c.min_step_chars).unwrap_or(d.min_step_chars),
        allow_paragraph_fallback: !no_fallback
            && c.allow_paragraph_fallback.unwrap_or(d.allow_paragraph_fallback),
    }
}

fn cmd_segment(ctx: &Ctx, a: &SegmentArgs) -> CliResult {
    let rules = segmentation_rules(ctx, a.min_step_chars, a.no_paragraph_fallback);
    rules.validate()?;
    let raws: Vec<RawTrace> = read_jsonl(ctx.path(&a.traces))?;
    let mut traces = Vec::with_capacity(raws.len());
    let mut errors = Vec::new();
    for r in &raws {
        match segment_trace(r, &rules) {
            Ok(t) => traces.push(t),
            Err(e) => errors.push(json!({
                "example_id": r.example_id,
                "teacher_id": r.teacher_id,
                "error": e.to_string(),
            })),
        }
    }
    write_traces(ctx.path(&a.out), &traces)?;
    if let Some(p) = &a.errors {
        write_jsonl(ctx.path(p), &errors)?;
    }
    if let Some(p) = &a.audit_out {
        let fraction = a
            .audit_fraction
            .or(ctx.config.segment.audit_fraction)
            .unwrap_or(0.05);
        let seed = a.seed.or(ctx.config.seed).unwrap_or(42);
        let sample = if traces.is_empty() {
            Vec::new()
        } else {
            audit_sample(&traces, fraction, seed)?
        };
        write_traces(ctx.path(p), &sample)?;
    }
    eprintln!("segment: {} traces, {} errors", traces.len(), errors.len());
    Ok(if errors.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

fn cmd_score(ctx: &Ctx, a: &ScoreArgs) -> CliResult {
    let traces = read_traces(ctx.path(&a.traces))?;
    let out = score_corpus(&traces);
    write_scores(ctx.path(&a.out), &out.scores)?;
    if let Some(p) = &a.errors {
        write_jsonl(ctx.path(p), &out.failures)?;
    }
    eprintln!("score: {} scores, {} errors", out.scores.len(), out.failures.len());
    Ok(if out.failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    })
}

fn select_teacher(scores: Vec<DoTScore>, teacher: Option<&str>) -> Result<Vec<DoTScore>, CliError> {
    match teacher {
        Some(t) => Ok(scores.into_iter().filter(|s| s.teacher_id == t).collect()),
        None => {
            let mut teachers: Vec<&str> = scores.iter().map(|s| s.teacher_id.as_str()).collect();
            teachers.sort_unstable();
            teachers.dedup();
            if teachers.len() > 1 {
                return Err(CliError::validation(format!(
                    "scores come from several teachers ({}); pass --teacher",
                    teachers.join(", ")
                )));
            }
            Ok(scores)
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_bucket(ctx: &Ctx, a: &BucketArgs) -> CliResult {
    let c = &ctx.config.bucket;
    let mut spec: BucketSpec = match a.edges.as_ref().or(c.edges.as_ref()) {
        Some(e) => e.parse()?,
        None => BucketSpec::default(),
    };
    spec.max_task_share = a.max_task_share.or(c.max_task_share).unwrap_or(1.0);
    let scores = select_teacher(read_scores(ctx.path(&a.scores))?, a.teacher.as_deref())?;
    let examples = read_corpus(ctx.path(&a.corpus))?;
    let b = bucketize(&scores, &examples, &spec)?;
    write_jsonl(ctx.path(&a.out), &b.buckets)?;
    let overflow = a
        .overflow
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".overflow.jsonl"));
    write_jsonl(ctx.path(&overflow), &b.overflow)?;
    let report = describe(&b.buckets);
    match &a.report {
        Some(p) => write_string(&ctx.path(p), &report.to_text())?,
        None => print!("{}", report.to_text()),
    }
    if let Some(p) = &a.report_json {
        write_string(&ctx.path(p), &report.to_json())?;
    }
    Ok(EXIT_OK)
}

fn cmd_schedule(ctx: &Ctx, a: &ScheduleArgs) -> CliResult {
    let c = &ctx.config.schedule;
    let buckets: Vec<Bucket> = read_jsonl(ctx.path(&a.buckets))?;
    let mode = match a.mode.or(c.mode).unwrap_or(ModeArg::Staged) {
        ModeArg::Staged => ScheduleMode::Staged,
        ModeArg::Mixed => ScheduleMode::Mixed,
    };
    let plan = SchedulePlan {
        mode,
        alpha: a.alpha.or(c.alpha).unwrap_or(1.0),
        phases: a.phases.or(c.phases).unwrap_or(buckets.len()),
        budget_per_phase: a
            .budget
            .or(c.budget)
            .ok_or_else(|| CliError::validation("--budget (or schedule.budget) is required"))?,
        seed: a.seed.or(ctx.config.seed).unwrap_or(42),
        with_replacement: a.with_replacement || c.with_replacement.unwrap_or(false),
        mix_window: match a.mix_window.or(c.mix_window).unwrap_or(WindowArg::Union) {
            WindowArg::Union => MixWindow::Union,
            WindowArg::Adjacent => MixWindow::Adjacent,
        },
    };
    let mut manifest = build_curriculum(&buckets, &plan)?;
    manifest.provenance.config = Some(json!({
        "command": "schedule",
        "buckets": a.buckets,
        "plan": plan,
    }));
    write_manifest(&manifest, ctx.path(&a.out))?;
    if let Some(p) = &a.summary {
        write_string(&ctx.path(p), &manifest.summary_text())?;
    }
    Ok(EXIT_OK)
}

fn cmd_baseline(ctx: &Ctx, a: &BaselineArgs) -> CliResult {
    let c = &ctx.config.schedule;
    let examples = read_corpus(ctx.path(&a.corpus))?;
    let traces = match &a.traces {
        Some(p) => read_traces(ctx.path(p))?,
        None => Vec::new(),
    };
    let kind = match a.kind {
        BaselineKind::TokenLength => Ordering::TokenLength,
        BaselineKind::JudgeScore => Ordering::JudgeScore,
        BaselineKind::Random => Ordering::Random,
    };
    let mut plan = SchedulePlan::staged(
        a.phases.or(c.phases).unwrap_or(3),
        a.budget
            .or(c.budget)
            .ok_or_else(|| CliError::validation("--budget (or schedule.budget) is required"))?,
        a.seed.or(ctx.config.seed).unwrap_or(42),
    );
    plan.alpha = 0.0;
    let mut manifest = baseline_order(&examples, &traces, kind, &plan)?;
    manifest.provenance.config = Some(json!({
        "command": "baseline",
        "corpus": a.corpus,
        "kind": kind,
        "plan": plan,
    }));
    write_manifest(&manifest, ctx.path(&a.out))?;
    Ok(EXIT_OK)
}

fn cmd_analyze(ctx: &Ctx, a: &AnalyzeArgs) -> CliResult {
    let c = &ctx.config.analyze;
    let min_spearman = a.min_spearman.or(c.min_spearman);
    let min_tau = a.min_tau.or(c.min_tau);
    let scores = read_scores(ctx.path(&a.scores))?;
    let mut by_teacher: BTreeMap<String, Vec<DoTScore>> = BTreeMap::new();
    for s in scores {
        by_teacher.entry(s.teacher_id.clone()).or_default().push(s);
    }
    let mut report = serde_json::Map::new();
    let mut text = String::new();
    let mut failed = Vec::new();

    if let Some(corpus) = &a.corpus {
        let labels: BTreeMap<String, f64> = read_corpus(ctx.path(corpus))?
            .into_iter()
            .filter_map(|e| e.external_difficulty.map(|d| (e.id, d)))
            .collect();
        let mut per_teacher = serde_json::Map::new();
        text.push_str(&format!(
            "{:<16} {:>6} {:>12} {:>12} {:>12}\n",
            "teacher", "n", "rho(k,lab)", "rho(tok,lab)", "partial"
        ));
        for (teacher, scores) in &by_teacher {
            let labelled: Vec<&DoTScore> =
                scores.iter().filter(|s| labels.contains_key(&s.example_id)).collect();
            let xs: Vec<DoTScore> = labelled.iter().map(|s| (*s).clone()).collect();
            let ys: Vec<f64> = labelled.iter().map(|s| labels[&s.example_id]).collect();
            let ks: Vec<f64> = xs.iter().map(|s| f64::from(s.k)).collect();
            let rho = spearman(&ks, &ys)?;
            let confound = length_confound(&xs, &ys).ok();
            text.push_str(&format!(
                "{:<16} {:>6} {:>12.4} {:>12} {:>12}\n",
                teacher,
                xs.len(),
                rho,
                confound
                    .as_ref()
                    .map_or("-".into(), |c| format!("{:.4}", c.spearman_tok_label)),
                confound
                    .as_ref()
                    .and_then(|c| c.partial_k_label_given_tok)
                    .map_or("-".into(), |p| format!("{p:.4}")),
            ));
            if let Some(min) = min_spearman {
                if rho < min {
                    failed.push(format!("{teacher}: spearman {rho:.4} < {min}"));
                }
            }
            per_teacher.insert(
                teacher.clone(),
                json!({"n": xs.len(), "spearman_k_label": rho, "confound": confound}),
            );
        }
        report.insert("label_correlation".into(), per_teacher.into());
    } else if min_spearman.is_some() {
        return Err(CliError::validation("--min-spearman needs --corpus with labels"));
    }

    if by_teacher.len() >= 2 {
        let agreement = cross_teacher_agreement(&by_teacher)?;
        text.push_str(&agreement.to_text());
        if let Some(min) = min_tau {
            for p in &agreement.pairs {
                if p.tau_k < min {
                    failed.push(format!(
                        "{}/{}: tau {:.4} < {min}",
                        p.teacher_a, p.teacher_b, p.tau_k
                    ));
                }
            }
        }
        report.insert("agreement".into(), serde_json::to_value(&agreement).unwrap());
    } else if min_tau.is_some() {
        return Err(CliError::validation("--min-tau needs scores from at least two teachers"));
    }

    report.insert(
        "config".into(),
        json!({"scores": a.scores, "corpus": a.corpus, "min_spearman": min_spearman, "min_tau": min_tau}),
    );
    report.insert("failed_thresholds".into(), json!(failed));
    print!("{text}");
    if let Some(p) = &a.out {
        let body = serde_json::to_string_pretty(&serde_json::Value::Object(report)).unwrap() + "\n";
        write_string(&ctx.path(p), &body)?;
    }
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        for f in &failed {
            eprintln!("threshold not met: {f}");
        }
        Ok(EXIT_VALIDATION)
    }
}

fn cmd_filter(ctx: &Ctx, a: &FilterArgs) -> CliResult {
    let scores = select_teacher(read_scores(ctx.path(&a.scores))?, a.teacher.as_deref())?;
    let ids = filter_by_depth(&scores, a.min_k, a.max_k)?;
    let mut body = ids.join("\n");
    if !body.is_empty() {
        body.push('\n');
    }
    match &a.out {
        Some(p) => write_string(&ctx.path(p), &body)?,
        None => print!("{body}"),
    }
    Ok(EXIT_OK)
}

fn cmd_synth(ctx: &Ctx, a: &SynthArgs) -> CliResult {
    let examples = planted_corpus(a.n, a.seed);
    let style = match a.style {
        StyleArg::Numbered => TraceStyle::Numbered,
        StyleArg::Labeled => TraceStyle::Labeled,
        StyleArg::Bulleted => TraceStyle::Bulleted,
        StyleArg::Mixed => TraceStyle::Mixed,
    };
    let teacher = TeacherSim {
        teacher_id: a.teacher_id.clone(),
        style,
        verbosity: 1.0,
        seed: a.seed.wrapping_add(1),
    };
    let traces = simulate_teacher(&examples, &teacher, a.samples);
    crate::corpus::write_corpus(ctx.path(&a.out_corpus), &examples)?;
    write_jsonl(ctx.path(&a.out_traces), &traces)?;
    Ok(EXIT_OK)
}

fn cmd_mock(a: &MockArgs) -> CliResult {
    let endpoint = MockEndpoint::bind(
        &format!("127.0.0.1:{}", a.port),
        MockConfig {
            fail_rate: a.fail_rate,
            seed: a.seed,
            ..Default::default()
        },
    )?;
    eprintln!("mock endpoint listening at {}", endpoint.url());
    endpoint.wait();
    Ok(EXIT_OK)
}
