//! Record model and streaming JSON Lines I/O.
//!
//! A corpus is a newline-delimited file of JSON objects, one question-answer
//! record per line. Readers are lazy (memory bounded by one line, not file
//! size), keep line numbers for error reporting, and skip blank lines with a
//! counter instead of failing — concatenated shards often leave them behind.
//! Unknown fields round-trip untouched so later pipeline stages can attach
//! metadata without breaking earlier ones.

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::taxonomy::LabelSet;

/// How a record's gold answer should be interpreted and checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerFormat {
    /// Multiple choice: `answer` names one position in `choices`.
    Mc,
    /// Short free-form entity or value.
    Freeform,
    /// Ternary: `answer` is `yes`, `no`, or `maybe`.
    Yesno,
}

impl fmt::Display for AnswerFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnswerFormat::Mc => "mc",
            AnswerFormat::Freeform => "freeform",
            AnswerFormat::Yesno => "yesno",
        })
    }
}

/// One question-answer record.
///
/// Construction is plain struct syntax; [`QARecord::validate`] checks the
/// cross-field rules (readers and writers apply it automatically).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QARecord {
    /// Opaque identifier, unique within a dataset.
    pub id: String,
    /// Originating corpus name.
    pub source: String,
    /// Source article identifier.
    pub doc_id: String,
    pub question: String,
    /// Ordered answer choices (2–10 entries) for multiple-choice records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    /// Gold answer: a choice position (number, letter, or verbatim text)
    /// for `mc`, a short value for `freeform`, `yes`/`no`/`maybe` for `yesno`.
    pub answer: String,
    pub answer_format: AnswerFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelSet>,
    /// Gate score from content screening, 1–10.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance_score: Option<u8>,
    /// Grader score for generated questions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade_score: Option<u32>,
    /// Fields we don't model, preserved verbatim on round-trip.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// A single-field validation failure; readers and writers wrap it with
/// record and line context.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("field \"{field}\" {reason}")]
pub struct ValidationIssue {
    pub field: &'static str,
    pub reason: String,
}

impl ValidationIssue {
    fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self {
            field,
            reason: reason.into(),
        }
    }
}

impl QARecord {
    /// Check all record invariants, reporting the first offending field.
    pub fn validate(&self) -> Result<(), ValidationIssue> {
        if self.id.is_empty() {
            return Err(ValidationIssue::new("id", "must be nonempty"));
        }
        if self.question.trim().is_empty() {
            return Err(ValidationIssue::new("question", "must be nonempty"));
        }
        if let Some(choices) = &self.choices {
            if !(2..=10).contains(&choices.len()) {
                return Err(ValidationIssue::new(
                    "choices",
                    format!("has {} entries; expected 2..=10", choices.len()),
                ));
            }
        }
        match self.answer_format {
            AnswerFormat::Mc => {
                self.mc_answer_position()?;
            }
            AnswerFormat::Yesno => {
                let normalized = self.answer.trim().to_ascii_lowercase();
                if !matches!(normalized.as_str(), "yes" | "no" | "maybe") {
                    return Err(ValidationIssue::new(
                        "answer",
                        format!("is {:?}; expected yes, no, or maybe", self.answer),
                    ));
                }
            }
            AnswerFormat::Freeform => {}
        }
        if let Some(score) = self.relevance_score {
            if !(1..=10).contains(&score) {
                return Err(ValidationIssue::new(
                    "relevance_score",
                    format!("is {score}; expected 1..=10"),
                ));
            }
        }
        Ok(())
    }

    /// Resolve a multiple-choice answer to its zero-based choice position.
    ///
    /// Accepted spellings, in precedence order: a one-based number (`"3"`),
    /// a choice letter (`"C"`, case-insensitive), or text equal to exactly
    /// one choice. Anything else — including text matching several
    /// choices — is a validation error on `answer`.
    pub fn mc_answer_position(&self) -> Result<usize, ValidationIssue> {
        let choices = self.choices.as_ref().ok_or_else(|| {
            ValidationIssue::new("choices", "must be present for mc records")
        })?;
        if !(2..=10).contains(&choices.len()) {
            return Err(ValidationIssue::new(
                "choices",
                format!("has {} entries; expected 2..=10", choices.len()),
            ));
        }
        let answer = self.answer.trim();
        if answer.is_empty() {
            return Err(ValidationIssue::new("answer", "is empty"));
        }
        if let Ok(number) = answer.parse::<usize>() {
            if (1..=choices.len()).contains(&number) {
                return Ok(number - 1);
            }
            return Err(ValidationIssue::new(
                "answer",
                format!("choice number {number} is out of range 1..={}", choices.len()),
            ));
        }
        let mut chars = answer.chars();
        if let (Some(letter), None) = (chars.next(), chars.next()) {
            if letter.is_ascii_alphabetic() {
                let position = (letter.to_ascii_uppercase() as u8 - b'A') as usize;
                if position < choices.len() {
                    return Ok(position);
                }
                return Err(ValidationIssue::new(
                    "answer",
                    format!(
                        "choice letter {letter:?} is out of range for {} choices",
                        choices.len()
                    ),
                ));
            }
        }
        let matches: Vec<usize> = choices
            .iter()
            .enumerate()
            .filter(|(_, choice)| choice.trim() == answer)
            .map(|(position, _)| position)
            .collect();
        match matches.as_slice() {
            [position] => Ok(*position),
            [] => Err(ValidationIssue::new("answer", "matches no choice")),
            many => Err(ValidationIssue::new(
                "answer",
                format!("matches {} choices; ambiguous", many.len()),
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: record {id:?}: {issue}")]
    Invalid {
        line: u64,
        id: String,
        issue: ValidationIssue,
    },
    #[error("refusing to write record {id:?}: {issue}")]
    RefusedWrite { id: String, issue: ValidationIssue },
}

/// Lazy line-by-line reader. Iterate to get `Result<QARecord, CorpusError>`
/// in file order; errors carry one-based line numbers.
pub struct RecordReader<R> {
    inner: R,
    line_number: u64,
    blank_lines_skipped: u64,
    buffer: String,
}

impl<R: Read> RecordReader<BufReader<R>> {
    pub fn new(reader: R) -> Self {
        Self::from_buffered(BufReader::new(reader))
    }
}

impl<R: BufRead> RecordReader<R> {
    pub fn from_buffered(inner: R) -> Self {
        Self {
            inner,
            line_number: 0,
            blank_lines_skipped: 0,
            buffer: String::new(),
        }
    }

    /// Blank lines silently skipped so far.
    pub fn blank_lines_skipped(&self) -> u64 {
        self.blank_lines_skipped
    }

    /// One-based number of the last line read.
    pub fn line_number(&self) -> u64 {
        self.line_number
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<QARecord, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buffer.clear();
            match self.inner.read_line(&mut self.buffer) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(error) => return Some(Err(error.into())),
            }
            self.line_number += 1;
            let line = self.buffer.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                self.blank_lines_skipped += 1;
                continue;
            }
            let record: QARecord = match serde_json::from_str(line) {
                Ok(record) => record,
                Err(error) => {
                    return Some(Err(CorpusError::Malformed {
                        line: self.line_number,
                        reason: error.to_string(),
                    }))
                }
            };
            if let Err(issue) = record.validate() {
                return Some(Err(CorpusError::Invalid {
                    line: self.line_number,
                    id: record.id,
                    issue,
                }));
            }
            return Some(Ok(record));
        }
    }
}

/// Open a lazy record stream over any byte reader.
pub fn read_records<R: Read>(reader: R) -> RecordReader<BufReader<R>> {
    RecordReader::new(reader)
}

/// Serialize records as JSON Lines (LF framing), validating each first.
/// Returns the number of records written. Output is deterministic: the same
/// records serialize to the same bytes on every pass.
pub fn write_records<W, I>(mut writer: W, records: I) -> Result<u64, CorpusError>
where
    W: Write,
    I: IntoIterator,
    I::Item: Borrow<QARecord>,
{
    let mut written = 0;
    for record in records {
        let record = record.borrow();
        if let Err(issue) = record.validate() {
            return Err(CorpusError::RefusedWrite {
                id: record.id.clone(),
                issue,
            });
        }
        let line = serde_json::to_string(record)
            .expect("record serialization is infallible for valid records");
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
        written += 1;
    }
    writer.flush()?;
    Ok(written)
}

/// Corpus composition counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub total: u64,
    pub per_source: BTreeMap<String, u64>,
    pub per_format: BTreeMap<AnswerFormat, u64>,
    /// Records carrying a label set (possibly empty).
    pub labeled: u64,
}

/// Tally totals, per-source and per-format partitions, and labeled count.
pub fn summarize<I>(records: I) -> DatasetSummary
where
    I: IntoIterator,
    I::Item: Borrow<QARecord>,
{
    let mut summary = DatasetSummary::default();
    for record in records {
        let record = record.borrow();
        summary.total += 1;
        *summary
            .per_source
            .entry(record.source.clone())
            .or_insert(0) += 1;
        *summary.per_format.entry(record.answer_format).or_insert(0) += 1;
        if record.labels.is_some() {
            summary.labeled += 1;
        }
    }
    summary
}
