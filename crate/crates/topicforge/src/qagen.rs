//! Question generation from document chunks.
//!
//! A chunk flows through a relevance gate, then through up to two
//! generation branches: multiple-choice (generate → grade) and freeform
//! extraction (extract → grade). Every model response is parsed from the
//! labeled-field formats the prompts demand, every rejection is logged
//! with its stage and reason, and grades are capped by the chunk's
//! relevance band in code — the grading prompt asks the model to do the
//! same, but the cap here is the one that counts.
//!
//! Parsers are strict about structure and tolerant about layout: fields
//! may be reordered, values may span lines, and choice markers may be
//! written `1:` or `1.)`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::classify::{BackendError, ClassifierBackend, PromptTranscript, TranscriptSink};
use crate::corpus::{AnswerFormat, QARecord};
use crate::prompt::{render, PromptError, TemplateId};
use crate::verify::{extract_boxed, ExtractionMethod, VerifyError};

/// A span of source text, addressed by document and position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub position: u64,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum QagenError {
    #[error(transparent)]
    Template(#[from] PromptError),
    #[error(transparent)]
    Transport(#[from] BackendError),
    #[error("transcript sink failed: {0}")]
    Sink(#[from] std::io::Error),
    #[error("chunk {doc_id}:{position} has no text")]
    InvalidChunk { doc_id: String, position: u64 },
    #[error("response is missing the {field} field")]
    MissingField { field: &'static str },
    #[error("{field} is not a number: {value:?}")]
    ScoreNotNumeric { field: &'static str, value: String },
    #[error("{field} {value} outside {min}..={max}")]
    ScoreOutOfRange {
        field: &'static str,
        value: u64,
        min: u8,
        max: u8,
    },
    #[error("malformed draft: {reason}")]
    MalformedDraft { reason: String },
    #[error("draft declares {declared} choices, expected {expected}")]
    ChoiceCountMismatch { declared: usize, expected: usize },
    #[error("correct answer declared at position {declared}, requested {requested}")]
    PositionalControlViolation { declared: usize, requested: usize },
    #[error("ANSWER field carries no boxed span")]
    MissingBoxedAnswer,
    #[error("ANSWER field has unbalanced braces after the boxed marker")]
    UnbalancedBoxed,
}

/// Relevance gate verdict for one chunk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceVerdict {
    /// 1–10; 8 and up is question-worthy core content.
    pub score: u8,
    pub content_type: String,
    pub reasoning: String,
}

/// A parsed multiple-choice draft.
///
/// `correct_position` is 1-based, matching how choices are numbered in
/// the wire format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MCQDraft {
    pub context: String,
    pub question: String,
    pub choices: Vec<String>,
    pub correct_position: usize,
}

impl MCQDraft {
    /// Canonical wire form; [`parse_mcq`] inverts this exactly.
    pub fn to_text(&self) -> String {
        let mut out = format!("CONTEXT: {}\n\nQUESTION: {}\n", self.context, self.question);
        for (i, choice) in self.choices.iter().enumerate() {
            out.push_str(&format!("\n{}: {}\n", i + 1, choice));
        }
        out.push_str(&format!("\nCORRECT ANSWER: {}", self.correct_position));
        out
    }
}

/// Grader verdict for a draft.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeVerdict {
    pub score: u8,
    pub critique: String,
}

/// A parsed freeform exam draft; the answer is the content of the boxed
/// span, trimmed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeformDraft {
    pub context: String,
    pub question: String,
    pub answer: String,
    pub reasoning: String,
}

impl FreeformDraft {
    /// Canonical wire form; [`parse_freeform`] recovers the draft.
    pub fn to_text(&self) -> String {
        format!(
            "CONTEXT: {}\n\nQUESTION: {}\n\nANSWER: $$\\boxed{{{}}}$$\n\nREASONING: {}",
            self.context, self.question, self.answer, self.reasoning
        )
    }
}

/// Render a template by its kebab-case name. Unknown names are an error,
/// not a panic — template ids travel through config files.
pub fn render_prompt(
    template_name: &str,
    substitutions: &[(&str, &str)],
) -> Result<String, QagenError> {
    let id = TemplateId::from_name(template_name)?;
    Ok(render(id, substitutions)?)
}

// ---------------------------------------------------------------------------
// Labeled-field response scanning
// ---------------------------------------------------------------------------

struct ScannedResponse {
    /// Uppercased label → value; a repeated label keeps its last value.
    fields: BTreeMap<&'static str, String>,
    /// Numbered items (`1: …`, `2.) …`) in encounter order.
    numbered: Vec<(usize, String)>,
}

/// Split `LABEL: value` off a line if it opens one of the known labels.
fn match_label<'a>(line: &'a str, labels: &[&'static str]) -> Option<(&'static str, &'a str)> {
    for &label in labels {
        // `get` rather than indexing: label.len() may fall inside a
        // multibyte character on arbitrary input.
        let Some(head) = line.get(..label.len()) else {
            continue;
        };
        if head.eq_ignore_ascii_case(label) {
            let rest = line[label.len()..].trim_start();
            if let Some(value) = rest.strip_prefix(':') {
                return Some((label, value.trim()));
            }
        }
    }
    None
}

/// Split `N: value` / `N.) value` off a line.
fn match_numbered(line: &str) -> Option<(usize, &str)> {
    let digits: usize = line.find(|c: char| !c.is_ascii_digit())?;
    if digits == 0 {
        return None;
    }
    let number: usize = line[..digits].parse().ok()?;
    let rest = &line[digits..];
    let after_marker = rest.trim_start_matches([':', '.', ')']);
    if after_marker.len() == rest.len() {
        return None; // no marker at all, e.g. "2019 was the year…"
    }
    // "3.5 mg" is a decimal mid-sentence, not item 3.
    if rest.starts_with('.') && after_marker.starts_with(|c: char| c.is_ascii_digit()) {
        return None;
    }
    Some((number, after_marker.trim()))
}

/// Scan a response into labeled fields and (optionally) numbered items.
///
/// Lines that open nothing extend the current field; blank lines are
/// separators. Text before the first label is ignored.
fn scan_response(response: &str, labels: &[&'static str], number_items: bool) -> ScannedResponse {
    enum Target {
        None,
        Field(&'static str),
        Numbered,
    }
    let mut scanned = ScannedResponse {
        fields: BTreeMap::new(),
        numbered: Vec::new(),
    };
    let mut target = Target::None;
    for line in response.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some((label, value)) = match_label(line, labels) {
            scanned.fields.insert(label, value.to_string());
            target = Target::Field(label);
            continue;
        }
        if number_items {
            if let Some((number, value)) = match_numbered(line) {
                scanned.numbered.push((number, value.to_string()));
                target = Target::Numbered;
                continue;
            }
        }
        match target {
            Target::None => {} // preamble chatter
            Target::Field(label) => {
                let value = scanned.fields.get_mut(label).expect("field opened");
                if !value.is_empty() {
                    value.push(' ');
                }
                value.push_str(line);
            }
            Target::Numbered => {
                let (_, value) = scanned.numbered.last_mut().expect("item opened");
                if !value.is_empty() {
                    value.push(' ');
                }
                value.push_str(line);
            }
        }
    }
    scanned
}

fn require<'a>(
    scanned: &'a ScannedResponse,
    field: &'static str,
) -> Result<&'a str, QagenError> {
    scanned
        .fields
        .get(field)
        .map(String::as_str)
        .ok_or(QagenError::MissingField { field })
}

/// Parse the leading digit run of a score field; range-check inclusive.
fn parse_score(field: &'static str, value: &str, min: u8, max: u8) -> Result<u8, QagenError> {
    let digits = value
        .trim()
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .count();
    if digits == 0 {
        return Err(QagenError::ScoreNotNumeric {
            field,
            value: value.to_string(),
        });
    }
    let parsed: u64 = value.trim()[..digits].parse().map_err(|_| {
        QagenError::ScoreNotNumeric {
            field,
            value: value.to_string(),
        }
    })?;
    if parsed < u64::from(min) || parsed > u64::from(max) {
        return Err(QagenError::ScoreOutOfRange {
            field,
            value: parsed,
            min,
            max,
        });
    }
    Ok(parsed as u8)
}

/// Parse a relevance response: `RELEVANCE_SCORE` (1–10), `CONTENT_TYPE`,
/// `REASONING`, in any order.
pub fn parse_relevance(response: &str) -> Result<RelevanceVerdict, QagenError> {
    let scanned = scan_response(
        response,
        &["RELEVANCE_SCORE", "REASONING", "CONTENT_TYPE"],
        false,
    );
    let score = parse_score("RELEVANCE_SCORE", require(&scanned, "RELEVANCE_SCORE")?, 1, 10)?;
    Ok(RelevanceVerdict {
        score,
        content_type: require(&scanned, "CONTENT_TYPE")?.to_string(),
        reasoning: require(&scanned, "REASONING")?.to_string(),
    })
}

/// Parse a grading response: `SCORE` and `CRITIQUE`.
///
/// Scores down to 0 are accepted — the freeform rubric sums criteria and
/// can legitimately award nothing.
pub fn parse_grade(response: &str) -> Result<GradeVerdict, QagenError> {
    let scanned = scan_response(response, &["SCORE", "CRITIQUE"], false);
    let score = parse_score("SCORE", require(&scanned, "SCORE")?, 0, 10)?;
    Ok(GradeVerdict {
        score,
        critique: require(&scanned, "CRITIQUE")?.to_string(),
    })
}

/// Parse a multiple-choice draft and enforce the request contract.
///
/// Three distinct failures, checked in this order: structural problems
/// ([`QagenError::MalformedDraft`]), a choice count other than the one
/// requested ([`QagenError::ChoiceCountMismatch`]), and a declared
/// correct position different from the one the prompt demanded
/// ([`QagenError::PositionalControlViolation`]).
pub fn parse_mcq(
    response: &str,
    expected_choices: usize,
    requested_position: usize,
) -> Result<MCQDraft, QagenError> {
    let scanned = scan_response(response, &["CONTEXT", "QUESTION", "CORRECT ANSWER"], true);
    let malformed = |reason: &str| QagenError::MalformedDraft {
        reason: reason.to_string(),
    };
    let context = require(&scanned, "CONTEXT")?.to_string();
    let question = require(&scanned, "QUESTION")?.to_string();
    if context.is_empty() {
        return Err(malformed("empty CONTEXT"));
    }
    if question.is_empty() {
        return Err(malformed("empty QUESTION"));
    }
    if scanned.numbered.is_empty() {
        return Err(malformed("no numbered answer choices"));
    }
    let mut choices = Vec::with_capacity(scanned.numbered.len());
    for (slot, (number, text)) in scanned.numbered.iter().enumerate() {
        if *number != slot + 1 {
            return Err(malformed(&format!(
                "choices must be numbered consecutively from 1, found {number} in slot {}",
                slot + 1
            )));
        }
        if text.is_empty() {
            return Err(malformed(&format!("choice {number} has no text")));
        }
        choices.push(text.clone());
    }
    let declared_raw = require(&scanned, "CORRECT ANSWER")?;
    let declared: usize = declared_raw
        .trim()
        .parse()
        .map_err(|_| malformed(&format!("CORRECT ANSWER is not a number: {declared_raw:?}")))?;
    if choices.len() != expected_choices {
        return Err(QagenError::ChoiceCountMismatch {
            declared: choices.len(),
            expected: expected_choices,
        });
    }
    if declared != requested_position {
        return Err(QagenError::PositionalControlViolation {
            declared,
            requested: requested_position,
        });
    }
    Ok(MCQDraft {
        context,
        question,
        choices,
        correct_position: declared,
    })
}

/// Cap a draft grade by the chunk's relevance band: low-relevance source
/// text (1–4) caps at 4, mixed (5–7) at 7, core content grades freely.
/// The cap only ever lowers a score.
pub fn cap_grade(raw_grade: u8, relevance_score: u8) -> u8 {
    match relevance_score {
        1..=4 => raw_grade.min(4),
        5..=7 => raw_grade.min(7),
        _ => raw_grade,
    }
}

/// Parse a freeform extraction response.
///
/// `Ok(None)` means the model declined: any of the four fields reading
/// `NONE` (case-insensitive) is a declination, per the prompt contract.
/// Otherwise the ANSWER field must carry a balanced boxed span, whose
/// trimmed content becomes the answer.
pub fn parse_freeform(response: &str) -> Result<Option<FreeformDraft>, QagenError> {
    let scanned = scan_response(
        response,
        &["CONTEXT", "QUESTION", "ANSWER", "REASONING"],
        false,
    );
    let context = require(&scanned, "CONTEXT")?;
    let question = require(&scanned, "QUESTION")?;
    let answer_field = require(&scanned, "ANSWER")?;
    let reasoning = require(&scanned, "REASONING")?;
    if [context, question, answer_field, reasoning]
        .iter()
        .any(|v| v.trim().eq_ignore_ascii_case("none"))
    {
        return Ok(None);
    }
    let extracted = extract_boxed(answer_field).map_err(|error| match error {
        VerifyError::UnbalancedBoxed => QagenError::UnbalancedBoxed,
        other => QagenError::MalformedDraft {
            reason: other.to_string(),
        },
    })?;
    if extracted.method == ExtractionMethod::None {
        return Err(QagenError::MissingBoxedAnswer);
    }
    Ok(Some(FreeformDraft {
        context: context.to_string(),
        question: question.to_string(),
        answer: extracted.raw_span.trim().to_string(),
        reasoning: reasoning.to_string(),
    }))
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

/// Acceptance thresholds and run shape for [`run_pipeline`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Minimum relevance score for a chunk to reach generation.
    pub relevance_min: u8,
    /// Minimum capped grade for a multiple-choice draft.
    pub mcq_grade_min: u8,
    /// Exact grade floor for freeform drafts; the freeform rubric sums
    /// nine criteria, so 9 means "all of them".
    pub freeform_required_score: u8,
    /// Choices per multiple-choice question.
    pub num_answers: usize,
    /// Seed for drawing correct-answer positions; positions are drawn per
    /// chunk in input order before any generation, so runs are repeatable
    /// at any concurrency.
    pub seed: u64,
    pub generate_mcq: bool,
    pub generate_freeform: bool,
    /// Maximum concurrent chunks in flight.
    pub max_in_flight: usize,
    /// `source` value stamped on produced records.
    pub source: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            relevance_min: 8,
            mcq_grade_min: 8,
            freeform_required_score: 9,
            num_answers: 7,
            seed: 0,
            generate_mcq: true,
            generate_freeform: true,
            max_in_flight: 4,
            source: "generated".to_string(),
        }
    }
}

/// Where in the pipeline a chunk or draft was turned away.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Relevance,
    McqGenerate,
    McqGrade,
    FreeformExtract,
    FreeformGrade,
}

/// One logged rejection. Nothing leaves the pipeline silently: every
/// chunk or draft that does not become a record appears here.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub doc_id: String,
    pub position: u64,
    pub stage: Stage,
    pub reason: String,
}

/// Pipeline output: accepted records (sorted by document and position)
/// plus the full rejection ledger.
///
/// Bookkeeping invariant: each chunk either fails the relevance gate
/// (one rejection) or passes it, and each enabled branch of a passing
/// chunk lands exactly one record or one rejection.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub records: Vec<QARecord>,
    pub rejections: Vec<Rejection>,
    pub chunks_processed: usize,
    pub chunks_passed_gate: usize,
}

struct ChunkOutput {
    /// Records keyed by chunk position so the final sort is numeric.
    records: Vec<(u64, QARecord)>,
    rejections: Vec<Rejection>,
    passed_gate: bool,
}

fn transcribe(
    sink: &dyn TranscriptSink,
    backend: &dyn ClassifierBackend,
    prompt: String,
    raw_response: String,
    parsed: Option<Value>,
) -> std::io::Result<()> {
    sink.record(PromptTranscript {
        prompt,
        raw_response,
        parsed,
        backend_id: backend.identity().to_string(),
        timestamp_unix_secs: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    })
}

/// One prompt → response → parse exchange, transcribed either way.
fn exchange<T: Serialize>(
    backend: &dyn ClassifierBackend,
    sink: &dyn TranscriptSink,
    prompt: String,
    parse: impl FnOnce(&str) -> Result<T, QagenError>,
) -> Result<Result<T, QagenError>, QagenError> {
    let response = backend.complete(&prompt)?;
    let outcome = parse(&response);
    let parsed = outcome
        .as_ref()
        .ok()
        .map(|value| serde_json::to_value(value).expect("verdict serializes"));
    transcribe(sink, backend, prompt, response, parsed)?;
    Ok(outcome)
}

fn process_chunk(
    chunk: &Chunk,
    target_position: usize,
    backend: &dyn ClassifierBackend,
    sink: &dyn TranscriptSink,
    config: &PipelineConfig,
) -> Result<ChunkOutput, QagenError> {
    let mut output = ChunkOutput {
        records: Vec::new(),
        rejections: Vec::new(),
        passed_gate: false,
    };
    let reject = |stage: Stage, reason: String, output: &mut ChunkOutput| {
        output.rejections.push(Rejection {
            doc_id: chunk.doc_id.clone(),
            position: chunk.position,
            stage,
            reason,
        });
    };

    let relevance_prompt = render(TemplateId::ContentRelevance, &[("chunk_text", &chunk.text)])?;
    let relevance = match exchange(backend, sink, relevance_prompt, parse_relevance)? {
        Ok(verdict) => verdict,
        Err(error) => {
            reject(Stage::Relevance, error.to_string(), &mut output);
            return Ok(output);
        }
    };
    if relevance.score < config.relevance_min {
        reject(
            Stage::Relevance,
            format!(
                "relevance {} below threshold {}",
                relevance.score, config.relevance_min
            ),
            &mut output,
        );
        return Ok(output);
    }
    output.passed_gate = true;

    if config.generate_mcq {
        let num_answers = config.num_answers.to_string();
        let position = target_position.to_string();
        let generate_prompt = render(
            TemplateId::McqGenerate,
            &[
                ("num_answers", num_answers.as_str()),
                ("text_chunk", &chunk.text),
                ("target_correct_position", position.as_str()),
            ],
        )?;
        let draft = exchange(backend, sink, generate_prompt, |response| {
            parse_mcq(response, config.num_answers, target_position)
        })?;
        match draft {
            Err(error) => reject(Stage::McqGenerate, error.to_string(), &mut output),
            Ok(draft) => {
                let relevance_score = relevance.score.to_string();
                let grade_prompt = render(
                    TemplateId::McqGrade,
                    &[
                        ("chunk_text", &chunk.text),
                        ("question", &draft.to_text()),
                        ("relevance_check['relevance_score']", relevance_score.as_str()),
                        ("relevance_check['content_type']", &relevance.content_type),
                        ("relevance_check['reasoning']", &relevance.reasoning),
                    ],
                )?;
                match exchange(backend, sink, grade_prompt, parse_grade)? {
                    Err(error) => reject(Stage::McqGrade, error.to_string(), &mut output),
                    Ok(grade) => {
                        let capped = cap_grade(grade.score, relevance.score);
                        if capped < config.mcq_grade_min {
                            reject(
                                Stage::McqGrade,
                                format!(
                                    "grade {} (capped from {}) below threshold {}",
                                    capped, grade.score, config.mcq_grade_min
                                ),
                                &mut output,
                            );
                        } else {
                            output.records.push((
                                chunk.position,
                                mcq_record(chunk, &draft, &relevance, capped, config),
                            ));
                        }
                    }
                }
            }
        }
    }

    if config.generate_freeform {
        let extract_prompt =
            render(TemplateId::FreeformExtract, &[("augmented_chunk", &chunk.text)])?;
        let extraction = exchange(backend, sink, extract_prompt, parse_freeform)?;
        match extraction {
            Err(error) => reject(Stage::FreeformExtract, error.to_string(), &mut output),
            Ok(None) => reject(
                Stage::FreeformExtract,
                "declined: text does not support an exam-level problem".to_string(),
                &mut output,
            ),
            Ok(Some(draft)) => {
                let grade_prompt = render(
                    TemplateId::FreeformGrade,
                    &[("exam_problem", &draft.to_text())],
                )?;
                match exchange(backend, sink, grade_prompt, parse_grade)? {
                    Err(error) => reject(Stage::FreeformGrade, error.to_string(), &mut output),
                    Ok(grade) => {
                        let capped = cap_grade(grade.score, relevance.score);
                        if capped < config.freeform_required_score {
                            reject(
                                Stage::FreeformGrade,
                                format!(
                                    "grade {} below required {}",
                                    capped, config.freeform_required_score
                                ),
                                &mut output,
                            );
                        } else {
                            output.records.push((
                                chunk.position,
                                freeform_record(chunk, &draft, &relevance, capped, config),
                            ));
                        }
                    }
                }
            }
        }
    }

    Ok(output)
}

fn mcq_record(
    chunk: &Chunk,
    draft: &MCQDraft,
    relevance: &RelevanceVerdict,
    grade: u8,
    config: &PipelineConfig,
) -> QARecord {
    let mut extra = BTreeMap::new();
    extra.insert(
        "context".to_string(),
        Value::String(draft.context.clone()),
    );
    QARecord {
        id: format!("{}:{}:mcq", chunk.doc_id, chunk.position),
        source: config.source.clone(),
        doc_id: chunk.doc_id.clone(),
        question: draft.question.clone(),
        choices: Some(draft.choices.clone()),
        answer: draft.correct_position.to_string(),
        answer_format: AnswerFormat::Mc,
        labels: None,
        relevance_score: Some(relevance.score),
        grade_score: Some(u32::from(grade)),
        extra,
    }
}

fn freeform_record(
    chunk: &Chunk,
    draft: &FreeformDraft,
    relevance: &RelevanceVerdict,
    grade: u8,
    config: &PipelineConfig,
) -> QARecord {
    let mut extra = BTreeMap::new();
    extra.insert(
        "context".to_string(),
        Value::String(draft.context.clone()),
    );
    extra.insert(
        "reasoning".to_string(),
        Value::String(draft.reasoning.clone()),
    );
    QARecord {
        id: format!("{}:{}:ff", chunk.doc_id, chunk.position),
        source: config.source.clone(),
        doc_id: chunk.doc_id.clone(),
        question: draft.question.clone(),
        choices: None,
        answer: draft.answer.clone(),
        answer_format: AnswerFormat::Freeform,
        labels: None,
        relevance_score: Some(relevance.score),
        grade_score: Some(u32::from(grade)),
        extra,
    }
}

/// Run the full gate-generate-grade pipeline over a batch of chunks.
///
/// Correct-answer positions are drawn for every chunk up front from the
/// configured seed, so results do not depend on scheduling. Records come
/// back sorted by `(doc_id, position, id)`; rejections stay in input
/// order. Transport failures abort the run — a dead backend must never
/// look like a round of rejections.
pub fn run_pipeline(
    chunks: &[Chunk],
    backend: &dyn ClassifierBackend,
    sink: &dyn TranscriptSink,
    config: &PipelineConfig,
) -> Result<PipelineOutcome, QagenError> {
    for chunk in chunks {
        if chunk.text.trim().is_empty() {
            return Err(QagenError::InvalidChunk {
                doc_id: chunk.doc_id.clone(),
                position: chunk.position,
            });
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let positions: Vec<usize> = chunks
        .iter()
        .map(|_| rng.random_range(1..=config.num_answers.max(1)))
        .collect();

    let process = |(chunk, &position): (&Chunk, &usize)| {
        process_chunk(chunk, position, backend, sink, config)
    };
    let outputs: Vec<ChunkOutput> = if config.max_in_flight <= 1 || chunks.len() <= 1 {
        chunks
            .iter()
            .zip(&positions)
            .map(process)
            .collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.max_in_flight)
            .build()
            .expect("thread pool construction");
        pool.install(|| {
            use rayon::prelude::*;
            chunks
                .par_iter()
                .zip(&positions)
                .map(process)
                .collect::<Result<_, _>>()
        })?
    };

    let mut outcome = PipelineOutcome {
        records: Vec::new(),
        rejections: Vec::new(),
        chunks_processed: chunks.len(),
        chunks_passed_gate: 0,
    };
    let mut keyed: Vec<(u64, QARecord)> = Vec::new();
    for output in outputs {
        outcome.chunks_passed_gate += usize::from(output.passed_gate);
        keyed.extend(output.records);
        outcome.rejections.extend(output.rejections);
    }
    keyed.sort_by(|(ap, a), (bp, b)| {
        (&a.doc_id, ap, &a.id).cmp(&(&b.doc_id, bp, &b.id))
    });
    outcome.records = keyed.into_iter().map(|(_, record)| record).collect();
    Ok(outcome)
}
