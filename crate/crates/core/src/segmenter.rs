//! Splits raw teacher traces into discrete reasoning steps.
//!
//! Marker families are tried in the configured priority order and the first
//! family with at least one marker wins. Line-anchored families (numbered and
//! bulleted) only count markers at the shallowest indentation present, so
//! nested sub-lists fold into their parent step. Markers inside inline code,
//! fenced code, or `$...$` / `$$...$$` / `\(...\)` / `\[...\]` math spans are
//! ignored. When no family matches, the trace is split on blank lines.

use std::ops::Range;
use std::sync::LazyLock;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{count_tokens, Confidence, RawTrace, SegmentationMode, Step, Trace};
use crate::error::SegmentError;

/// Matches "1.", "1)" or "(1)" at the start of a line, followed by whitespace
/// or end of line.
static NUMBERED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^([ \t]*)(?:(\d{1,3})[.)]|\((\d{1,3})\))(?:[ \t]+|$)").unwrap()
});

/// Matches "Step 1:" (also "Step 1." / "Step 1)") anywhere on a line.
static LABELED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bstep[ \t]+(\d{1,3})[ \t]*[:.)][ \t]*").unwrap());

/// Matches "-", "*", "+" or "•" bullets at the start of a line.
static BULLETED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^([ \t]*)[-*+\u{2022}](?:[ \t]+|$)").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerFamily {
    Numbered,
    Labeled,
    Bulleted,
}

impl MarkerFamily {
    fn mode(self) -> SegmentationMode {
        match self {
            MarkerFamily::Numbered => SegmentationMode::Numbered,
            MarkerFamily::Labeled => SegmentationMode::Labeled,
            MarkerFamily::Bulleted => SegmentationMode::Bulleted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationRules {
    /// Families in priority order.
    pub marker_patterns: Vec<MarkerFamily>,
    /// Segments (marker included) shorter than this many characters are
    /// merged into the preceding step.
    pub min_step_chars: usize,
    pub allow_paragraph_fallback: bool,
}

impl Default for SegmentationRules {
    fn default() -> Self {
        SegmentationRules {
            marker_patterns: vec![
                MarkerFamily::Numbered,
                MarkerFamily::Labeled,
                MarkerFamily::Bulleted,
            ],
            min_step_chars: 3,
            allow_paragraph_fallback: true,
        }
    }
}

impl SegmentationRules {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if self.marker_patterns.is_empty() {
            return Err(SegmentError::InvalidRules(
                "marker_patterns must be nonempty".into(),
            ));
        }
        if self.min_step_chars == 0 {
            return Err(SegmentError::InvalidRules(
                "min_step_chars must be positive".into(),
            ));
        }
        let mut seen = Vec::new();
        for f in &self.marker_patterns {
            if seen.contains(f) {
                return Err(SegmentError::InvalidRules(format!(
                    "family {f:?} listed twice"
                )));
            }
            seen.push(*f);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub steps: Vec<Step>,
    pub mode: SegmentationMode,
    pub confidence: Confidence,
}

/// A recognized step marker. `span` covers the marker and its trailing
/// horizontal whitespace; `number` is absent for bullets.
#[derive(Debug, Clone)]
struct Marker {
    span: Range<usize>,
    number: Option<u32>,
    indent: usize,
}

pub fn segment(raw_text: &str, rules: &SegmentationRules) -> Result<Segmentation, SegmentError> {
    rules.validate()?;
    if raw_text.trim().is_empty() {
        return Err(SegmentError::EmptyTrace);
    }
    let protected = protected_spans(raw_text);

    let found: Vec<(MarkerFamily, Vec<Marker>)> = rules
        .marker_patterns
        .iter()
        .map(|&f| (f, find_markers(raw_text, f, &protected)))
        .collect();
    let top_indent = |f: MarkerFamily| {
        found
            .iter()
            .find(|(g, _)| *g == f)
            .and_then(|(_, ms)| ms.first().map(|m| m.indent))
    };
    for (family, markers) in &found {
        let family = *family;
        if markers.is_empty() {
            continue;
        }
        // A numbered list indented under bullets (or the reverse) is a
        // sub-list; the shallower family carries the steps.
        let other = match family {
            MarkerFamily::Numbered => top_indent(MarkerFamily::Bulleted),
            MarkerFamily::Bulleted => top_indent(MarkerFamily::Numbered),
            MarkerFamily::Labeled => None,
        };
        if other.is_some_and(|o| o < markers[0].indent) {
            continue;
        }
        let markers = markers.as_slice();
        let (steps, merged) = steps_from_markers(raw_text, markers, rules.min_step_chars);
        if steps.is_empty() {
            // Markers with no content at all, e.g. a bare "1.".
            break;
        }
        let explicit = matches!(family, MarkerFamily::Numbered | MarkerFamily::Labeled);
        let consecutive = markers
            .iter()
            .enumerate()
            .all(|(i, m)| m.number == Some(i as u32 + 1));
        let confidence = if explicit && consecutive && !merged {
            Confidence::High
        } else {
            Confidence::Low
        };
        return Ok(Segmentation {
            steps,
            mode: family.mode(),
            confidence,
        });
    }

    if !rules.allow_paragraph_fallback {
        return Err(SegmentError::NoMarkers);
    }
    let pieces: Vec<Piece> = paragraphs(raw_text, &protected)
        .into_iter()
        .map(|r| {
            let text = raw_text[r].trim();
            Piece {
                text: text.to_string(),
                weight: text.chars().count(),
            }
        })
        .collect();
    let (steps, _) = merge_pieces(pieces, rules.min_step_chars);
    Ok(Segmentation {
        steps,
        mode: SegmentationMode::ParagraphFallback,
        confidence: Confidence::Low,
    })
}

/// Segments a raw trace into a full [`Trace`] record.
pub fn segment_trace(raw: &RawTrace, rules: &SegmentationRules) -> Result<Trace, SegmentError> {
    let seg = segment(&raw.raw_text, rules)?;
    Ok(Trace {
        example_id: raw.example_id.clone(),
        teacher_id: raw.teacher_id.clone(),
        raw_text: raw.raw_text.clone(),
        steps: seg.steps,
        tok: count_tokens(&raw.raw_text) as u64,
        segmentation_mode: seg.mode,
        confidence: seg.confidence,
    })
}

/// Renders steps back into an explicitly numbered trace.
pub fn render_numbered(steps: &[Step]) -> String {
    steps
        .iter()
        .map(|s| format!("{}. {}", s.index, s.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Seeded spot-check sample. All low-confidence traces come first (in input
/// order); the remainder of the `ceil(fraction * n)` budget is a uniform draw
/// from the high-confidence traces. Low-confidence traces are always included,
/// even when they alone exceed the budget.
pub fn audit_sample(traces: &[Trace], fraction: f64, seed: u64) -> Result<Vec<Trace>, SegmentError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SegmentError::InvalidFraction(fraction));
    }
    if traces.is_empty() {
        return Err(SegmentError::NoTraces);
    }
    let target = ((fraction * traces.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let (low, high): (Vec<&Trace>, Vec<&Trace>) = traces
        .iter()
        .partition(|t| t.confidence == Confidence::Low);
    let mut out: Vec<Trace> = low.into_iter().cloned().collect();
    let remaining = target.saturating_sub(out.len()).min(high.len());
    if remaining > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, high.len(), remaining).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| high[i].clone()));
    }
    Ok(out)
}

fn find_markers(text: &str, family: MarkerFamily, protected: &[Range<usize>]) -> Vec<Marker> {
    let inside = |pos: usize| protected.iter().any(|r| r.contains(&pos));
    let mut markers: Vec<Marker> = match family {
        MarkerFamily::Numbered => NUMBERED
            .captures_iter(text)
            .filter_map(|c| {
                let whole = c.get(0)?;
                let indent = indent_width(c.get(1).map_or("", |m| m.as_str()));
                let digits = c.get(2).or_else(|| c.get(3))?;
                if inside(digits.start()) {
                    return None;
                }
                Some(Marker {
                    span: digits.start() - usize::from(text[..digits.start()].ends_with('('))
                        ..whole.end(),
                    number: digits.as_str().parse().ok(),
                    indent,
                })
            })
            .collect(),
        MarkerFamily::Labeled => LABELED
            .captures_iter(text)
            .filter_map(|c| {
                let whole = c.get(0)?;
                if inside(whole.start()) {
                    return None;
                }
                Some(Marker {
                    span: whole.range(),
                    number: c.get(1)?.as_str().parse().ok(),
                    indent: 0,
                })
            })
            .collect(),
        MarkerFamily::Bulleted => BULLETED
            .captures_iter(text)
            .filter_map(|c| {
                let whole = c.get(0)?;
                let lead = c.get(1).map_or(0, |m| m.len());
                let start = whole.start() + lead;
                if inside(start) {
                    return None;
                }
                Some(Marker {
                    span: start..whole.end(),
                    number: None,
                    indent: indent_width(c.get(1).map_or("", |m| m.as_str())),
                })
            })
            .collect(),
    };
    if let Some(top) = markers.iter().map(|m| m.indent).min() {
        markers.retain(|m| m.indent == top);
    }
    markers
}

fn indent_width(ws: &str) -> usize {
    ws.chars().map(|c| if c == '\t' { 4 } else { 1 }).sum()
}

struct Piece {
    text: String,
    /// Character length used for the micro-step test (marker included).
    weight: usize,
}

fn steps_from_markers(text: &str, markers: &[Marker], min_chars: usize) -> (Vec<Step>, bool) {
    let preamble = text[..markers[0].span.start].trim();
    let mut pieces = Vec::with_capacity(markers.len());
    for (i, m) in markers.iter().enumerate() {
        let end = markers.get(i + 1).map_or(text.len(), |n| n.span.start);
        let body = text[m.span.end..end].trim();
        let marker = text[m.span.clone()].trim();
        let weight = if body.is_empty() {
            0
        } else {
            marker.chars().count() + 1 + body.chars().count()
        };
        pieces.push(Piece {
            text: body.to_string(),
            weight,
        });
    }
    if !preamble.is_empty() {
        let first = &mut pieces[0];
        first.text = if first.text.is_empty() {
            preamble.to_string()
        } else {
            format!("{preamble}\n{}", first.text)
        };
    }
    merge_pieces(pieces, min_chars)
}

/// Folds micro-pieces (empty, or lighter than `min_chars`) into the preceding
/// piece, or into the following one when there is no predecessor. Returns the
/// steps and whether any merge happened.
fn merge_pieces(pieces: Vec<Piece>, min_chars: usize) -> (Vec<Step>, bool) {
    let mut merged = false;
    let mut kept: Vec<String> = Vec::new();
    let mut carry = String::new();
    for p in pieces {
        let micro = p.text.is_empty() || p.weight < min_chars;
        if micro {
            merged = true;
            if p.text.is_empty() {
                continue;
            }
            match kept.last_mut() {
                Some(prev) => {
                    prev.push('\n');
                    prev.push_str(&p.text);
                }
                None => {
                    if !carry.is_empty() {
                        carry.push('\n');
                    }
                    carry.push_str(&p.text);
                }
            }
        } else if carry.is_empty() {
            kept.push(p.text);
        } else {
            kept.push(format!("{}\n{}", std::mem::take(&mut carry), p.text));
        }
    }
    if !carry.is_empty() {
        // Everything was micro; keep what content exists as one step.
        kept.push(carry);
    }
    let steps = kept
        .into_iter()
        .enumerate()
        .map(|(i, text)| Step { index: i + 1, text })
        .collect();
    (steps, merged)
}

/// Byte ranges of code and math spans whose contents must not yield markers.
fn protected_spans(text: &str) -> Vec<Range<usize>> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    let find_from = |pat: &str, from: usize| text[from..].find(pat).map(|p| p + from);
    let line_end = |from: usize| text[from..].find('\n').map_or(text.len(), |p| p + from);
    while i < bytes.len() {
        let rest = &text[i..];
        let (open, close, single_line) = if rest.starts_with("```") {
            ("```", "```", false)
        } else if rest.starts_with("$$") {
            ("$$", "$$", false)
        } else if rest.starts_with("\\[") {
            ("\\[", "\\]", false)
        } else if rest.starts_with("\\(") {
            ("\\(", "\\)", true)
        } else if rest.starts_with('`') {
            ("`", "`", true)
        } else if rest.starts_with('$') {
            ("$", "$", true)
        } else {
            i += rest.chars().next().map_or(1, char::len_utf8);
            continue;
        };
        let body = i + open.len();
        let close_at = find_from(close, body).filter(|&c| !single_line || c < line_end(body));
        match close_at {
            Some(c) => {
                spans.push(i..c + close.len());
                i = c + close.len();
            }
            None => i = body,
        }
    }
    spans
}

/// Splits on blank lines outside protected spans.
fn paragraphs(text: &str, protected: &[Range<usize>]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        let blank = line.trim().is_empty() && !protected.iter().any(|r| r.contains(&pos));
        if blank {
            if let Some(s) = start.take() {
                out.push(s..pos);
            }
        } else if start.is_none() {
            start = Some(pos);
        }
        pos += line.len();
    }
    if let Some(s) = start {
        out.push(s..text.len());
    }
    out
}
