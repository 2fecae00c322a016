//! Domain types and JSONL persistence.
//!
//! Every file the toolkit reads or writes is UTF-8 JSONL with LF line endings.
//! Optional fields are omitted rather than written as `null`, and struct
//! fields serialize in declaration order, so equal values always produce
//! byte-identical files.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CorpusError;
use crate::scheduler::CurriculumManifest;

/// One training item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExampleRecord")]
pub struct Example {
    pub id: String,
    pub task: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_answer: Option<String>,
    /// Conventional difficulty label from a benchmark, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_difficulty: Option<f64>,
    /// Judge rating in `[0, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_score: Option<f64>,
    #[serde(skip)]
    token_length_prompt: usize,
}

#[derive(Deserialize)]
struct ExampleRecord {
    id: String,
    task: String,
    prompt: String,
    #[serde(default)]
    reference_answer: Option<String>,
    #[serde(default)]
    external_difficulty: Option<f64>,
    #[serde(default)]
    judge_score: Option<f64>,
}

impl TryFrom<ExampleRecord> for Example {
    type Error = String;

    fn try_from(r: ExampleRecord) -> Result<Self, String> {
        let mut ex = Example::new(r.id, r.task, r.prompt);
        ex.reference_answer = r.reference_answer;
        ex.external_difficulty = r.external_difficulty;
        ex.judge_score = r.judge_score;
        ex.validate()?;
        Ok(ex)
    }
}

impl Example {
    pub fn new(id: impl Into<String>, task: impl Into<String>, prompt: impl Into<String>) -> Self {
        let prompt = prompt.into();
        let token_length_prompt = count_tokens(&prompt);
        Example {
            id: id.into(),
            task: task.into(),
            prompt,
            reference_answer: None,
            external_difficulty: None,
            judge_score: None,
            token_length_prompt,
        }
    }

    pub fn with_external_difficulty(mut self, d: f64) -> Self {
        self.external_difficulty = Some(d);
        self
    }

    pub fn with_judge_score(mut self, s: f64) -> Self {
        self.judge_score = Some(s);
        self
    }

    pub fn with_reference_answer(mut self, answer: impl Into<String>) -> Self {
        self.reference_answer = Some(answer.into());
        self
    }

    /// Whitespace token count of the prompt, computed once at construction.
    pub fn token_length_prompt(&self) -> usize {
        self.token_length_prompt
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("id must be nonempty".into());
        }
        if self.task.is_empty() {
            return Err(format!("example `{}`: task must be nonempty", self.id));
        }
        if let Some(d) = self.external_difficulty {
            if !d.is_finite() {
                return Err(format!(
                    "example `{}`: external_difficulty must be finite",
                    self.id
                ));
            }
        }
        if let Some(s) = self.judge_score {
            if !(0.0..=1.0).contains(&s) {
                return Err(format!(
                    "example `{}`: judge_score {s} outside [0, 1]",
                    self.id
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentationMode {
    Numbered,
    Labeled,
    Bulleted,
    ParagraphFallback,
}

impl SegmentationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SegmentationMode::Numbered => "numbered",
            SegmentationMode::Labeled => "labeled",
            SegmentationMode::Bulleted => "bulleted",
            SegmentationMode::ParagraphFallback => "paragraph-fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    High,
    Low,
}

/// A teacher's reasoning output for one example, split into steps.
///
/// Deserialization does not enforce the step invariants: trace files may
/// carry broken records and the scorer reports those individually.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub example_id: String,
    pub teacher_id: String,
    pub raw_text: String,
    pub steps: Vec<Step>,
    pub tok: u64,
    pub segmentation_mode: SegmentationMode,
    pub confidence: Confidence,
}

impl Trace {
    pub fn k(&self) -> usize {
        self.steps.len()
    }

    /// Checks that step indices run 1..=k and step texts are nonempty.
    pub fn check_steps(&self) -> Result<(), String> {
        for (i, s) in self.steps.iter().enumerate() {
            if s.index != i + 1 {
                return Err(format!("step {} has index {}", i + 1, s.index));
            }
            if s.text.is_empty() {
                return Err(format!("step {} has empty text", s.index));
            }
        }
        Ok(())
    }
}

/// An unsegmented trace, the input to the `segment` stage. Any JSONL record
/// with these three fields qualifies, including full [`Trace`] records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrace {
    pub example_id: String,
    pub teacher_id: String,
    pub raw_text: String,
}

/// Depth of thought for one (example, teacher) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoTScore {
    pub example_id: String,
    pub teacher_id: String,
    /// Number of reasoning steps.
    pub k: u32,
    /// Whitespace token count of the trace.
    pub tok: u64,
    /// `k / ln(1 + tok)`.
    pub dot_norm: f64,
    /// How many samples were aggregated into this score.
    pub n_samples: u32,
}

/// A configured teacher endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherProfile {
    pub teacher_id: String,
    pub endpoint_url: String,
    pub model_name: String,
    pub template_id: String,
    /// Self-consistency sample count per example.
    pub samples_per_example: u32,
    pub temperature: f64,
}

impl TeacherProfile {
    pub fn validate(&self) -> Result<(), String> {
        if self.teacher_id.is_empty() {
            return Err("teacher_id must be nonempty".into());
        }
        if self.samples_per_example < 1 {
            return Err("samples_per_example must be at least 1".into());
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(format!("temperature {} must be >= 0", self.temperature));
        }
        url::Url::parse(&self.endpoint_url)
            .map_err(|e| format!("endpoint_url `{}`: {e}", self.endpoint_url))?;
        Ok(())
    }
}

/// Counts Unicode-whitespace-delimited runs of non-whitespace characters.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// SHA-256 over the sorted, newline-joined example ids. Identifies the example
/// set independently of file layout or field order.
pub fn fingerprint_ids<'a, I>(ids: I) -> String
where
    I: IntoIterator<Item = &'a str>,
{
    let mut ids: Vec<&str> = ids.into_iter().collect();
    ids.sort_unstable();
    ids.dedup();
    let mut hasher = Sha256::new();
    for id in ids {
        hasher.update(id.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

const EXAMPLE_REQUIRED: [&str; 3] = ["id", "task", "prompt"];

/// Reads a corpus file. Every line must be a valid example; ids must be unique.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Example>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(BufReader::new(file), path)
}

fn parse_corpus(reader: impl BufRead, path: &Path) -> Result<Vec<Example>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|source| {
            CorpusError::Json {
                line: line_no,
                source,
            }
        })?;
        let Some(obj) = value.as_object() else {
            return Err(CorpusError::Invalid {
                line: line_no,
                message: "expected a JSON object".into(),
            });
        };
        for field in EXAMPLE_REQUIRED {
            if !obj.contains_key(field) {
                return Err(CorpusError::MissingField {
                    line: line_no,
                    field,
                });
            }
        }
        let ex: Example = serde_json::from_value(value).map_err(|e| CorpusError::Invalid {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(ex.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: ex.id,
            });
        }
        out.push(ex);
    }
    Ok(out)
}

/// Reads any JSONL file of `T` records, reporting the failing line number.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| CorpusError::Json {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

/// Serializes records one per line, LF-terminated.
pub fn to_jsonl_string<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<(), CorpusError> {
    write_string(path.as_ref(), &to_jsonl_string(items))
}

pub(crate) fn write_string(path: &Path, contents: &str) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(contents.as_bytes()).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_corpus(path: impl AsRef<Path>, examples: &[Example]) -> Result<(), CorpusError> {
    write_jsonl(path, examples)
}

pub fn read_traces(path: impl AsRef<Path>) -> Result<Vec<Trace>, CorpusError> {
    read_jsonl(path)
}

pub fn write_traces(path: impl AsRef<Path>, traces: &[Trace]) -> Result<(), CorpusError> {
    write_jsonl(path, traces)
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<DoTScore>, CorpusError> {
    read_jsonl(path)
}

pub fn write_scores(path: impl AsRef<Path>, scores: &[DoTScore]) -> Result<(), CorpusError> {
    write_jsonl(path, scores)
}

/// Writes a manifest: a header line followed by one line per phase.
pub fn write_manifest(
    manifest: &CurriculumManifest,
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    manifest
        .validate()
        .map_err(|e| CorpusError::InvalidManifest(e.to_string()))?;
    write_string(path.as_ref(), &manifest.to_jsonl())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<CurriculumManifest, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    CurriculumManifest::from_jsonl(&text)
}
