//! Trace collection from OpenAI-compatible chat-completion endpoints.
//!
//! Every (example, template, sample) triple is one request with `n = 1`.
//! Responses are cached on disk under a SHA-256 of the model, template,
//! prompt, and sample index, so warm re-runs issue no requests. Requests are
//! spaced by a shared rate limiter and retried with exponential backoff on
//! 429, 5xx, and transport errors.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::corpus::{read_corpus, Example, RawTrace, TeacherProfile, Trace};
use crate::error::HarvestError;
use crate::segmenter::{segment_trace, SegmentationRules};

pub const PROMPT_PLACEHOLDER: &str = "{prompt}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub system_text: String,
    /// Must contain `{prompt}` exactly once.
    pub user_text: String,
    /// Human-readable description of the required output format.
    #[serde(default)]
    pub enforces: String,
}

impl PromptTemplate {
    /// Template that asks for one numbered step per line.
    pub fn numbered() -> Self {
        PromptTemplate {
            template_id: "numbered-v1".into(),
            system_text: "You are a careful problem solver. Reason step by step. \
                          Write each reasoning step on its own line as a numbered list \
                          (1., 2., 3., ...), one step per line, with no sub-lists. \
                          Put the final answer in the last step."
                .into(),
            user_text: "Solve the following problem.\n\n{prompt}".into(),
            enforces: "numbered list, one step per line".into(),
        }
    }

    pub fn validate(&self) -> Result<(), HarvestError> {
        if self.user_text.matches(PROMPT_PLACEHOLDER).count() != 1 || self.enforces.trim().is_empty()
        {
            return Err(HarvestError::Template(self.template_id.clone()));
        }
        Ok(())
    }
}

/// Returns `(system_text, user_text)` with the example prompt substituted
/// into the placeholder in a single pass.
pub fn render_prompt(
    template: &PromptTemplate,
    example: &Example,
) -> Result<(String, String), HarvestError> {
    template.validate()?;
    let (head, tail) = template
        .user_text
        .split_once(PROMPT_PLACEHOLDER)
        .expect("validated placeholder");
    Ok((
        template.system_text.clone(),
        format!("{head}{}{tail}", example.prompt),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestJob {
    pub corpus: PathBuf,
    pub teacher: TeacherProfile,
    /// One or more templates; traces from all of them aggregate per example.
    pub templates: Vec<PromptTemplate>,
    pub cache_dir: PathBuf,
    /// Requests per second across all workers.
    pub rate_limit: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub api_key_env: String,
    pub backoff_base_ms: u64,
    pub request_timeout_secs: u64,
    #[serde(default)]
    pub rules: SegmentationRules,
}

impl HarvestJob {
    pub fn new(corpus: impl Into<PathBuf>, teacher: TeacherProfile, cache_dir: impl Into<PathBuf>) -> Self {
        HarvestJob {
            corpus: corpus.into(),
            teacher,
            templates: vec![PromptTemplate::numbered()],
            cache_dir: cache_dir.into(),
            rate_limit: 2.0,
            max_retries: 4,
            max_in_flight: 4,
            api_key_env: "OPENAI_API_KEY".into(),
            backoff_base_ms: 500,
            request_timeout_secs: 120,
            rules: SegmentationRules::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarvestError> {
        self.teacher.validate().map_err(HarvestError::InvalidJob)?;
        if !(self.rate_limit.is_finite() && self.rate_limit > 0.0) {
            return Err(HarvestError::InvalidJob(format!(
                "rate_limit must be > 0, got {}",
                self.rate_limit
            )));
        }
        if self.max_in_flight == 0 {
            return Err(HarvestError::InvalidJob("max_in_flight must be >= 1".into()));
        }
        if self.templates.is_empty() {
            return Err(HarvestError::InvalidJob("at least one template is required".into()));
        }
        for t in &self.templates {
            t.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestFailure {
    pub example_id: String,
    pub teacher_id: String,
    pub template_id: String,
    pub sample_index: u32,
    pub attempts: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HarvestStats {
    pub requests_sent: usize,
    pub cache_hits: usize,
    /// Dispatch time of every request, relative to the start of the run.
    pub request_offsets: Vec<Duration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarvestOutcome {
    /// Ordered by (corpus order, template, sample index).
    pub traces: Vec<Trace>,
    pub failures: Vec<HarvestFailure>,
    pub stats: HarvestStats,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    model: String,
    template_id: String,
    example_id: String,
    sample_index: u32,
    content: String,
}

/// Cache key over (model, template, prompt, sample index).
pub fn cache_key(model: &str, template: &PromptTemplate, prompt: &str, sample_index: u32) -> String {
    let material = json!([
        model,
        template.template_id,
        template.system_text,
        template.user_text,
        prompt,
        sample_index
    ]);
    hex::encode(Sha256::digest(material.to_string().as_bytes()))
}

/// Spaces request starts at least `1 / rate` seconds apart.
struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
    start: Instant,
    log: Mutex<Vec<Duration>>,
}

impl RateLimiter {
    fn new(rate: f64) -> Self {
        RateLimiter {
            interval: Duration::from_secs_f64(1.0 / rate),
            next: Mutex::new(None),
            start: Instant::now(),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Waits for the next slot. Acquisition is serialized and the next slot
    /// is measured from the actual dispatch time, so late wake-ups can never
    /// bunch two requests closer than the interval.
    fn acquire(&self) {
        let mut next = self.next.lock().unwrap();
        if let Some(slot) = *next {
            let now = Instant::now();
            if slot > now {
                thread::sleep(slot - now);
            }
        }
        let now = Instant::now();
        *next = Some(now + self.interval);
        self.log.lock().unwrap().push(now - self.start);
    }
}

enum Attempt {
    Done(String),
    Retry(String),
    Fail(String),
}

pub struct Harvester {
    job: HarvestJob,
    api_key: String,
    agent: ureq::Agent,
}

impl Harvester {
    /// Reads the API key from the environment variable named in the job.
    pub fn from_env(job: HarvestJob) -> Result<Self, HarvestError> {
        let key = std::env::var(&job.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| HarvestError::MissingApiKey(job.api_key_env.clone()))?;
        Self::with_api_key(job, key)
    }

    pub fn with_api_key(job: HarvestJob, api_key: impl Into<String>) -> Result<Self, HarvestError> {
        job.validate()?;
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(job.request_timeout_secs)))
            .build()
            .into();
        Ok(Harvester {
            job,
            api_key: api_key.into(),
            agent,
        })
    }

    pub fn run(&self, examples: &[Example]) -> Result<HarvestOutcome, HarvestError> {
        std::fs::create_dir_all(&self.job.cache_dir).map_err(|source| HarvestError::Cache {
            path: self.job.cache_dir.clone(),
            source,
        })?;
        let samples = self.job.teacher.samples_per_example;
        let mut work = Vec::new();
        for (e, _) in examples.iter().enumerate() {
            for (t, _) in self.job.templates.iter().enumerate() {
                for s in 0..samples {
                    work.push((e, t, s));
                }
            }
        }
        let limiter = RateLimiter::new(self.job.rate_limit);
        let cursor = AtomicUsize::new(0);
        let requests = AtomicUsize::new(0);
        let hits = AtomicUsize::new(0);
        let workers = self.job.max_in_flight.min(work.len().max(1));
        let mut results: Vec<(usize, Result<Trace, HarvestFailure>)> = thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    scope.spawn(|| {
                        let mut done = Vec::new();
                        loop {
                            let i = cursor.fetch_add(1, Ordering::SeqCst);
                            let Some(&(e, t, s)) = work.get(i) else { break };
                            let r = self.one(&examples[e], &self.job.templates[t], s, &limiter, &requests, &hits);
                            done.push((i, r));
                        }
                        done
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("harvest worker panicked"))
                .collect()
        });
        results.sort_by_key(|(i, _)| *i);
        let mut traces = Vec::new();
        let mut failures = Vec::new();
        for (_, r) in results {
            match r {
                Ok(t) => traces.push(t),
                Err(f) => failures.push(f),
            }
        }
        let mut offsets = limiter.log.into_inner().unwrap();
        offsets.sort();
        Ok(HarvestOutcome {
            traces,
            failures,
            stats: HarvestStats {
                requests_sent: requests.into_inner(),
                cache_hits: hits.into_inner(),
                request_offsets: offsets,
            },
        })
    }

    fn one(
        &self,
        example: &Example,
        template: &PromptTemplate,
        sample: u32,
        limiter: &RateLimiter,
        requests: &AtomicUsize,
        hits: &AtomicUsize,
    ) -> Result<Trace, HarvestFailure> {
        let teacher = &self.job.teacher;
        let fail = |attempts, reason: String| HarvestFailure {
            example_id: example.id.clone(),
            teacher_id: teacher.teacher_id.clone(),
            template_id: template.template_id.clone(),
            sample_index: sample,
            attempts,
            reason,
        };
        let key = cache_key(&teacher.model_name, template, &example.prompt, sample);
        let path = self.job.cache_dir.join(format!("{key}.json"));
        let content = match read_cache(&path) {
            Some(c) => {
                hits.fetch_add(1, Ordering::Relaxed);
                c
            }
            None => {
                let (system, user) = render_prompt(template, example).map_err(|e| fail(0, e.to_string()))?;
                let content = self.request(&system, &user, limiter, requests).map_err(|(n, r)| fail(n, r))?;
                let entry = CacheEntry {
                    model: teacher.model_name.clone(),
                    template_id: template.template_id.clone(),
                    example_id: example.id.clone(),
                    sample_index: sample,
                    content,
                };
                write_cache(&path, &entry).map_err(|e| fail(1, format!("cache write: {e}")))?;
                entry.content
            }
        };
        let raw = RawTrace {
            example_id: example.id.clone(),
            teacher_id: teacher.teacher_id.clone(),
            raw_text: content,
        };
        segment_trace(&raw, &self.job.rules).map_err(|e| fail(0, format!("segmentation: {e}")))
    }

    /// Returns the assistant content, or (attempts, reason) on failure.
    fn request(
        &self,
        system: &str,
        user: &str,
        limiter: &RateLimiter,
        requests: &AtomicUsize,
    ) -> Result<String, (u32, String)> {
        let teacher = &self.job.teacher;
        let url = format!("{}/chat/completions", teacher.endpoint_url.trim_end_matches('/'));
        let body = json!({
            "model": teacher.model_name,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": teacher.temperature,
        });
        let mut last = String::new();
        for attempt in 0..=self.job.max_retries {
            if attempt > 0 {
                let backoff = self.job.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                thread::sleep(Duration::from_millis(backoff.min(60_000)));
            }
            limiter.acquire();
            requests.fetch_add(1, Ordering::Relaxed);
            match self.attempt(&url, &body) {
                Attempt::Done(c) => return Ok(c),
                Attempt::Fail(r) => return Err((attempt + 1, r)),
                Attempt::Retry(r) => last = r,
            }
        }
        Err((self.job.max_retries + 1, format!("retries exhausted: {last}")))
    }

    fn attempt(&self, url: &str, body: &serde_json::Value) -> Attempt {
        let resp = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body);
        let mut resp = match resp {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport: {e}")),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string();
        match status {
            200..=299 => {}
            429 | 500..=599 => return Attempt::Retry(format!("HTTP {status}")),
            _ => return Attempt::Fail(format!("HTTP {status}")),
        }
        let text = match text {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("reading body: {e}")),
        };
        match extract_content(&text) {
            Some(c) => Attempt::Done(c),
            None => Attempt::Fail("malformed response body".into()),
        }
    }
}

/// Reads `choices[0].message.content` from a chat-completion response.
pub fn extract_content(body: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(body).ok()?;
    v.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

fn read_cache(path: &Path) -> Option<String> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str::<CacheEntry>(&text).ok().map(|e| e.content)
}

fn write_cache(path: &Path, entry: &CacheEntry) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("tmp.{:?}", thread::current().id()).replace(['(', ')'], ""));
    std::fs::write(&tmp, serde_json::to_string(entry)?)?;
    std::fs::rename(&tmp, path)
}

/// Reads the job's corpus and harvests it with the API key from the
/// environment.
pub fn harvest(job: &HarvestJob) -> Result<HarvestOutcome, HarvestError> {
    let harvester = Harvester::from_env(job.clone())?;
    let examples = read_corpus(&job.corpus)?;
    harvester.run(&examples)
}
