//! Topic classification through a text-completion backend.
//!
//! Two prompts drive labeling: a binary domain gate (is this question
//! biology at all?) and a multi-label topic classifier returning a JSON
//! array of category names. Both run against anything implementing
//! [`ClassifierBackend`] — an HTTP endpoint in production, a scripted fake
//! in tests — and every single call is persisted verbatim through a
//! [`TranscriptSink`] so labeling runs stay auditable.
//!
//! Parsing is strict: the gate accepts exactly two words, the topic call
//! accepts exactly a JSON string array. [`label_records`] retries a
//! failed parse twice with the identical prompt, then records the item as
//! unlabeled with a flag rather than guessing.

use std::collections::VecDeque;
use std::io::{self, Write};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::QARecord;
use crate::prompt::{render, PromptError, TemplateId};
use crate::taxonomy::{parse_labels, LabelSet};

/// Transport-level failure talking to a backend.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("backend {backend}: {message}")]
pub struct BackendError {
    pub backend: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Transport(#[from] BackendError),
    #[error("unparseable response {response:?}: {reason}")]
    Parse { response: String, reason: String },
    #[error(transparent)]
    Template(#[from] PromptError),
    #[error("transcript sink failed: {0}")]
    Sink(#[from] io::Error),
    #[error("gold and prediction lists differ in length ({golds} vs {preds})")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("cannot evaluate zero items")]
    NoItems,
}

/// A text-completion model: one prompt in, one completion out.
///
/// Implementations must be stateless as far as callers can observe — the
/// same prompt may be retried verbatim and may arrive from several threads
/// at once.
pub trait ClassifierBackend: Sync {
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
    /// Stable name recorded in transcripts.
    fn identity(&self) -> &str;
}

/// One backend call, recorded verbatim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptTranscript {
    pub prompt: String,
    /// Exactly what the backend returned, before any trimming or parsing.
    pub raw_response: String,
    /// The parsed verdict, when parsing succeeded.
    pub parsed: Option<Value>,
    pub backend_id: String,
    pub timestamp_unix_secs: u64,
}

/// Receives transcripts; implementations serialize their own appends.
pub trait TranscriptSink: Sync {
    fn record(&self, transcript: PromptTranscript) -> io::Result<()>;
}

/// Appends transcripts to a JSON Lines stream, flushing per line so a
/// crashed run keeps its audit trail.
pub struct JsonlSink<W: Write + Send> {
    writer: Mutex<W>,
}

impl<W: Write + Send> JsonlSink<W> {
    pub fn new(writer: W) -> Self {
        Self {
            writer: Mutex::new(writer),
        }
    }

    pub fn into_inner(self) -> W {
        self.writer.into_inner().expect("sink lock poisoned")
    }
}

impl<W: Write + Send> TranscriptSink for JsonlSink<W> {
    fn record(&self, transcript: PromptTranscript) -> io::Result<()> {
        let line = serde_json::to_string(&transcript)?;
        let mut writer = self.writer.lock().expect("sink lock poisoned");
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()
    }
}

/// Keeps transcripts in memory; for tests and small runs.
#[derive(Default)]
pub struct MemorySink {
    transcripts: Mutex<Vec<PromptTranscript>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn transcripts(&self) -> Vec<PromptTranscript> {
        self.transcripts.lock().expect("sink lock poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.transcripts.lock().expect("sink lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl TranscriptSink for MemorySink {
    fn record(&self, transcript: PromptTranscript) -> io::Result<()> {
        self.transcripts
            .lock()
            .expect("sink lock poisoned")
            .push(transcript);
        Ok(())
    }
}

/// Discards transcripts.
pub struct NullSink;

impl TranscriptSink for NullSink {
    fn record(&self, _transcript: PromptTranscript) -> io::Result<()> {
        Ok(())
    }
}

fn now_unix_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn transcribe(
    sink: &dyn TranscriptSink,
    backend: &dyn ClassifierBackend,
    prompt: &str,
    raw_response: &str,
    parsed: Option<Value>,
) -> io::Result<()> {
    sink.record(PromptTranscript {
        prompt: prompt.to_string(),
        raw_response: raw_response.to_string(),
        parsed,
        backend_id: backend.identity().to_string(),
        timestamp_unix_secs: now_unix_secs(),
    })
}

/// Domain gate outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainVerdict {
    Biology,
    NotBiology,
}

/// Ask the backend whether a question-answer pair is biology.
///
/// The response is trimmed and case-folded; anything but the two expected
/// words is a parse error (the transcript still records it verbatim).
pub fn classify_domain(
    record: &QARecord,
    backend: &dyn ClassifierBackend,
    sink: &dyn TranscriptSink,
) -> Result<DomainVerdict, ClassifyError> {
    let prompt = render(
        TemplateId::DomainGate,
        &[("question", &record.question), ("answer", &record.answer)],
    )?;
    let response = backend.complete(&prompt)?;
    let verdict = match response.trim().to_lowercase().as_str() {
        "biology" => Ok(DomainVerdict::Biology),
        "not_biology" => Ok(DomainVerdict::NotBiology),
        other => Err(ClassifyError::Parse {
            response: response.clone(),
            reason: format!("expected \"biology\" or \"not_biology\", got {other:?}"),
        }),
    };
    let parsed = verdict
        .as_ref()
        .ok()
        .map(|v| serde_json::to_value(v).expect("verdict serializes"));
    transcribe(sink, backend, &prompt, &response, parsed)?;
    verdict
}

/// Ask the backend for topic labels on a question-answer pair.
///
/// `few_shot_examples` is the worked-example block pasted into the prompt;
/// pass an empty string for zero-shot. The response must be a JSON array
/// of strings; canonical names become the label set and anything else is
/// returned as dropped names. An empty array is a valid "no topics"
/// answer.
pub fn classify_topics(
    record: &QARecord,
    few_shot_examples: &str,
    backend: &dyn ClassifierBackend,
    sink: &dyn TranscriptSink,
) -> Result<(LabelSet, Vec<String>), ClassifyError> {
    let prompt = render(
        TemplateId::TopicLabels,
        &[
            ("few_shot_examples", few_shot_examples),
            ("question", &record.question),
            ("answer", &record.answer),
        ],
    )?;
    let response = backend.complete(&prompt)?;
    let names: Result<Vec<String>, _> = serde_json::from_str(response.trim());
    let outcome = match names {
        Ok(names) => Ok(parse_labels(&names)),
        Err(error) => Err(ClassifyError::Parse {
            response: response.clone(),
            reason: format!("expected a JSON array of category names: {error}"),
        }),
    };
    let parsed = outcome.as_ref().ok().map(|(labels, _)| {
        Value::Array(
            labels
    .names()
                .map(|name| Value::String(name.to_string()))
                .collect(),
        )
    });
    transcribe(sink, backend, &prompt, &response, parsed)?;
    outcome
}

/// Substring → category rules for offline, deterministic labeling.
///
/// This is a stand-in for environments with no model endpoint: useful for
/// exercising the full pipeline and for tests, not a faithful classifier.
#[derive(Clone, Debug, Default)]
pub struct RuleTable {
    rules: Vec<(String, usize)>,
}

impl RuleTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a case-insensitive keyword rule targeting a category index.
    pub fn rule(mut self, keyword: &str, category_index: usize) -> Self {
        self.rules.push((keyword.to_lowercase(), category_index));
        self
    }

    /// A small default table covering unmistakable keywords.
    pub fn builtin() -> Self {
        Self::new()
            .rule("algorithm", 0)
            .rule("sequence alignment", 0)
            .rule("genome", 1)
            .rule("gene", 1)
            .rule("bacteri", 2)
            .rule("virus", 2)
            .rule("ecosystem", 3)
            .rule("habitat", 3)
            .rule("protein", 4)
            .rule("enzyme", 4)
            .rule("neuron", 9)
            .rule("parasite", 12)
            .rule("cell membrane", 13)
    }
}

/// Apply keyword rules to a record's question text; hits union.
pub fn rule_stub_classify(record: &QARecord, rules: &RuleTable) -> LabelSet {
    let haystack = record.question.to_lowercase();
    rules
        .rules
        .iter()
        .filter(|(keyword, _)| haystack.contains(keyword))
        .map(|&(_, index)| index)
        .collect()
}

/// Pooled multi-label evaluation counts and derived metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub precision: f64,
    pub recall: f64,
    pub micro_f1: f64,
    pub n_items: u64,
}

/// Micro-averaged F1 over per-(item, category) decisions:
/// `2·tp / (2·tp + fp + fn)`, defined as 0 when the denominator is 0.
pub fn micro_f1(golds: &[LabelSet], preds: &[LabelSet]) -> Result<EvalReport, ClassifyError> {
    if golds.len() != preds.len() {
        return Err(ClassifyError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    if golds.is_empty() {
        return Err(ClassifyError::NoItems);
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for (gold, pred) in golds.iter().zip(preds) {
        tp += gold.intersection(*pred).len() as u64;
        fp += (pred.len() - gold.intersection(*pred).len()) as u64;
        fn_ += (gold.len() - gold.intersection(*pred).len()) as u64;
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(EvalReport {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        micro_f1: ratio(2 * tp, 2 * tp + fp + fn_),
        n_items: golds.len() as u64,
    })
}

/// Options for [`label_records`].
#[derive(Clone, Debug)]
pub struct LabelOptions {
    /// Skip the biology gate — appropriate for corpora already known to be
    /// in-domain.
    pub skip_domain_gate: bool,
    /// Worked-example block for the topic prompt; empty for zero-shot.
    pub few_shot_examples: String,
    /// Maximum concurrent backend calls.
    pub max_in_flight: usize,
    /// Additional attempts after a parse failure, with the identical
    /// prompt.
    pub parse_retries: u32,
}

impl Default for LabelOptions {
    fn default() -> Self {
        Self {
            skip_domain_gate: false,
            few_shot_examples: String::new(),
            max_in_flight: 4,
            parse_retries: 2,
        }
    }
}

/// Labeling outcome for one record, in input order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelOutcome {
    pub index: usize,
    pub labels: LabelSet,
    /// Non-canonical names the backend produced, in response order.
    pub dropped: Vec<String>,
    /// Present unless the gate was skipped.
    pub domain: Option<DomainVerdict>,
    /// True when every parse attempt failed and the record was recorded
    /// unlabeled.
    pub parse_failed: bool,
}

fn retry_parse<T>(
    attempts: u32,
    mut call: impl FnMut() -> Result<T, ClassifyError>,
) -> Result<Option<T>, ClassifyError> {
    for _ in 0..attempts {
        match call() {
            Ok(value) => return Ok(Some(value)),
            Err(ClassifyError::Parse { .. }) => continue,
            Err(other) => return Err(other),
        }
    }
    Ok(None)
}

/// Label a batch of records with bounded concurrency.
///
/// Output order always matches input order regardless of completion order.
/// Parse failures are retried (`parse_retries` extra attempts), and a
/// record whose every attempt fails to parse comes back unlabeled with
/// `parse_failed` set. Transport errors abort the run — a dead backend
/// should stop the batch, not silently unlabel it.
pub fn label_records(
    records: &[QARecord],
    backend: &dyn ClassifierBackend,
    sink: &dyn TranscriptSink,
    options: &LabelOptions,
) -> Result<Vec<LabelOutcome>, ClassifyError> {
    let attempts = options.parse_retries + 1;
    let label_one = |(index, record): (usize, &QARecord)| -> Result<LabelOutcome, ClassifyError> {
        let domain = if options.skip_domain_gate {
            None
        } else {
            match retry_parse(attempts, || classify_domain(record, backend, sink))? {
                Some(verdict) => Some(verdict),
                None => {
                    return Ok(LabelOutcome {
                        index,
                        labels: LabelSet::EMPTY,
                        dropped: Vec::new(),
                        domain: None,
                        parse_failed: true,
                    })
                }
            }
        };
        if domain == Some(DomainVerdict::NotBiology) {
            return Ok(LabelOutcome {
                index,
                labels: LabelSet::EMPTY,
                dropped: Vec::new(),
                domain,
                parse_failed: false,
            });
        }
        match retry_parse(attempts, || {
            classify_topics(record, &options.few_shot_examples, backend, sink)
        })? {
            Some((labels, dropped)) => Ok(LabelOutcome {
                index,
                labels,
                dropped,
                domain,
                parse_failed: false,
            }),
            None => Ok(LabelOutcome {
                index,
                labels: LabelSet::EMPTY,
                dropped: Vec::new(),
                domain,
                parse_failed: true,
            }),
        }
    };

    let workers = options.max_in_flight.max(1);
    if workers == 1 || records.len() <= 1 {
        return records.iter().enumerate().map(label_one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool construction");
    pool.install(|| {
        use rayon::prelude::*;
        records
            .par_iter()
            .enumerate()
            .map(label_one)
            .collect::<Result<Vec<_>, _>>()
    })
}

/// Text-completion backend over a single HTTP endpoint.
///
/// Requests are `POST {url}` with body `{"prompt": …, "temperature": …}`
/// and an optional bearer credential; responses must carry the completion
/// under a top-level `"text"` field.
pub struct HttpBackend {
    url: String,
    api_key: Option<String>,
    temperature: f64,
    identity: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    /// Defaults to temperature 0 so labeling runs are as repeatable as the
    /// serving stack allows.
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Self {
        let url = url.into();
        Self {
            identity: format!("http:{url}"),
            url,
            api_key,
            temperature: 0.0,
            agent: ureq::Agent::new_with_defaults(),
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    fn transport_error(&self, message: impl Into<String>) -> BackendError {
        BackendError {
            backend: self.identity.clone(),
            message: message.into(),
        }
    }
}

impl ClassifierBackend for HttpBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let body = serde_json::json!({
            "prompt": prompt,
            "temperature": self.temperature,
        });
        let mut request = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            request = request.header("authorization", format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|error| self.transport_error(error.to_string()))?;
        let value: Value = response
            .body_mut()
            .read_json()
            .map_err(|error| self.transport_error(format!("reading response body: {error}")))?;
        value
            .get("text")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| self.transport_error("response missing string field \"text\""))
    }

    fn identity(&self) -> &str {
        &self.identity
    }
}

/// Replays a fixed response queue; for tests. Prompts are logged so tests
/// can assert how many calls were made and with what.
pub struct ScriptedBackend {
    responses: Mutex<VecDeque<Result<String, String>>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            responses: Mutex::new(responses.into_iter().map(|s| Ok(s.into())).collect()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    /// Queue a transport failure.
    pub fn push_error(&self, message: impl Into<String>) {
        self.responses
            .lock()
            .expect("script lock poisoned")
            .push_back(Err(message.into()));
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("script lock poisoned").clone()
    }

    pub fn calls(&self) -> usize {
        self.prompts.lock().expect("script lock poisoned").len()
    }
}

impl ClassifierBackend for ScriptedBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.prompts
            .lock()
            .expect("script lock poisoned")
            .push(prompt.to_string());
        match self
            .responses
            .lock()
            .expect("script lock poisoned")
            .pop_front()
        {
            Some(Ok(response)) => Ok(response),
            Some(Err(message)) => Err(BackendError {
                backend: "scripted".to_string(),
                message,
            }),
            None => Err(BackendError {
                backend: "scripted".to_string(),
                message: "response script exhausted".to_string(),
            }),
        }
    }

    fn identity(&self) -> &str {
        "scripted"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnswerFormat;
    use std::collections::BTreeMap;

    fn record(question: &str, answer: &str) -> QARecord {
        QARecord {
            id: "q1".to_string(),
            source: "test".to_string(),
            doc_id: "d1".to_string(),
            question: question.to_string(),
            choices: None,
            answer: answer.to_string(),
            answer_format: AnswerFormat::Freeform,
            labels: None,
            relevance_score: None,
            grade_score: None,
            extra: BTreeMap::new(),
        }
    }

    fn set(indices: &[usize]) -> LabelSet {
        LabelSet::from_indices(indices.iter().copied())
    }

    #[test]
    fn domain_gate_accepts_both_words_after_folding() {
        let sink = MemorySink::new();
        let backend = ScriptedBackend::new(["biology", "  Not_Biology\n"]);
        let rec = record("What unwinds DNA?", "Helicase");
        assert_eq!(
            classify_domain(&rec, &backend, &sink).unwrap(),
            DomainVerdict::Biology
        );
        assert_eq!(
            classify_domain(&rec, &backend, &sink).unwrap(),
            DomainVerdict::NotBiology
        );
        let transcripts = sink.transcripts();
        assert_eq!(transcripts.len(), 2);
        // Raw responses are stored before any trimming.
        assert_eq!(transcripts[1].raw_response, "  Not_Biology\n");
        assert!(transcripts[0].prompt.contains("What unwinds DNA?"));
        assert!(transcripts[0].prompt.contains("Helicase"));
        assert_eq!(transcripts[0].backend_id, "scripted");
    }

    #[test]
    fn domain_gate_rejects_near_misses() {
        let near_misses = [
            "This is biology.",
            "biology!",
            "not biology",
            "BIOLOGY or not_biology",
            "",
        ];
        let sink = MemorySink::new();
        let rec = record("Q?", "A");
        for response in near_misses {
            let backend = ScriptedBackend::new([response]);
            let result = classify_domain(&rec, &backend, &sink);
            assert!(
                matches!(result, Err(ClassifyError::Parse { .. })),
                "{response:?} accepted"
            );
        }
        // Failed parses still leave a verbatim transcript.
        assert_eq!(sink.len(), near_misses.len());
        assert!(sink.transcripts().iter().all(|t| t.parsed.is_none()));
    }

    #[test]
    fn topic_labels_parse_canonical_and_report_dropped() {
        let sink = MemorySink::new();
        let rec = record("Q?", "A");
        let backend = ScriptedBackend::new([r#"["Microbiology", "Genetics"]"#, "[]", r#"["Toxicology"]"#]);

        let (labels, dropped) = classify_topics(&rec, "", &backend, &sink).unwrap();
        assert_eq!(labels, set(&[1, 2]));
        assert!(dropped.is_empty());

        let (labels, dropped) = classify_topics(&rec, "", &backend, &sink).unwrap();
        assert!(labels.is_empty());
        assert!(dropped.is_empty());

        let (labels, dropped) = classify_topics(&rec, "", &backend, &sink).unwrap();
        assert!(labels.is_empty());
        assert_eq!(dropped, ["Toxicology"]);
    }

    #[test]
    fn topic_labels_reject_non_arrays() {
        let sink = NullSink;
        let rec = record("Q?", "A");
        for response in ["not json", "\"Genetics\"", "[1, 2]", "{\"labels\": []}"] {
            let backend = ScriptedBackend::new([response]);
            let result = classify_topics(&rec, "", &backend, &sink);
            assert!(
                matches!(result, Err(ClassifyError::Parse { .. })),
                "{response:?} accepted"
            );
        }
    }

    #[test]
    fn few_shot_block_lands_in_the_prompt() {
        let sink = NullSink;
        let backend = ScriptedBackend::new(["[]"]);
        let rec = record("Q?", "A");
        classify_topics(&rec, "EXAMPLE BLOCK HERE", &backend, &sink).unwrap();
        assert!(backend.prompts()[0].contains("EXAMPLE BLOCK HERE"));
    }

    #[test]
    fn rule_stub_unions_keyword_hits() {
        let rules = RuleTable::builtin();
        let hit = rule_stub_classify(&record("How large is the human genome?", "3 Gb"), &rules);
        assert_eq!(hit, set(&[1]));
        let none = rule_stub_classify(&record("What is the speed of light?", "c"), &rules);
        assert!(none.is_empty());
        let both = rule_stub_classify(
            &record("Which algorithm assembles bacterial genomes?", "OLC"),
            &rules,
        );
        assert_eq!(both, set(&[0, 1, 2]));
    }

    #[test]
    fn micro_f1_hand_cases() {
        let perfect = micro_f1(&[set(&[0, 1]), set(&[2])], &[set(&[0, 1]), set(&[2])]).unwrap();
        assert_eq!(perfect.micro_f1, 1.0);
        assert_eq!(perfect.true_positives, 3);

        let half = micro_f1(&[set(&[0, 1])], &[set(&[0, 2])]).unwrap();
        assert_eq!(
            (half.true_positives, half.false_positives, half.false_negatives),
            (1, 1, 1)
        );
        assert_eq!(half.micro_f1, 0.5);
        assert_eq!(half.precision, 0.5);
        assert_eq!(half.recall, 0.5);

        let degenerate = micro_f1(&[LabelSet::EMPTY; 3], &[LabelSet::EMPTY; 3]).unwrap();
        assert_eq!(degenerate.micro_f1, 0.0);
        assert_eq!(degenerate.precision, 0.0);

        assert!(matches!(
            micro_f1(&[LabelSet::EMPTY], &[]),
            Err(ClassifyError::LengthMismatch { golds: 1, preds: 0 })
        ));
        assert!(matches!(micro_f1(&[], &[]), Err(ClassifyError::NoItems)));
    }

    #[test]
    fn label_records_gates_retries_and_flags() {
        let records = vec![
            record("first?", "a"),
            record("second?", "b"),
            record("third?", "c"),
        ];
        // First record: clean gate + labels. Second: gated out — no topic
        // call spent. Third: gate ok, topic parse fails three times → ∅
        // with the flag.
        let backend = ScriptedBackend::new([
            "biology",
            r#"["Genetics"]"#,
            "not_biology",
            "biology",
            "oops",
            "still not json",
            "nope",
        ]);
        let sink = MemorySink::new();
        let options = LabelOptions {
            max_in_flight: 1,
            ..LabelOptions::default()
        };
        let outcomes = label_records(&records, &backend, &sink, &options).unwrap();

        assert_eq!(outcomes[0].labels, set(&[1]));
        assert_eq!(outcomes[0].domain, Some(DomainVerdict::Biology));
        assert!(!outcomes[0].parse_failed);

        assert!(outcomes[1].labels.is_empty());
        assert_eq!(outcomes[1].domain, Some(DomainVerdict::NotBiology));
        assert!(!outcomes[1].parse_failed);

        assert!(outcomes[2].labels.is_empty());
        assert!(outcomes[2].parse_failed);

        // 7 calls total; every one left a transcript.
        assert_eq!(backend.calls(), 7);
        assert_eq!(sink.len(), 7);
    }

    #[test]
    fn label_records_propagates_transport_errors() {
        let backend = ScriptedBackend::new(Vec::<String>::new());
        backend.push_error("connection refused");
        let sink = NullSink;
        let options = LabelOptions {
            max_in_flight: 1,
            ..LabelOptions::default()
        };
        let result = label_records(&[record("Q?", "A")], &backend, &sink, &options);
        assert!(matches!(result, Err(ClassifyError::Transport(_))));
    }

    /// Deterministic backend keyed on prompt content, usable concurrently.
    struct KeywordBackend;

    impl ClassifierBackend for KeywordBackend {
        fn complete(&self, prompt: &str) -> Result<String, BackendError> {
            if prompt.contains("Respond with ONLY one word") {
                return Ok("biology".to_string());
            }
            Ok(if prompt.contains("mitochondria") {
                r#"["Cell Biology"]"#.to_string()
            } else {
                r#"["Ecology"]"#.to_string()
            })
        }

        fn identity(&self) -> &str {
            "keyword"
        }
    }

    #[test]
    fn concurrent_labeling_preserves_input_order() {
        let records: Vec<QARecord> = (0..40)
            .map(|i| {
                if i % 3 == 0 {
                    record(&format!("{i}: role of mitochondria?"), "ATP")
                } else {
                    record(&format!("{i}: reef dynamics?"), "complex")
                }
            })
            .collect();
        let sink = MemorySink::new();
        let options = LabelOptions {
            max_in_flight: 8,
            ..LabelOptions::default()
        };
        let outcomes = label_records(&records, &KeywordBackend, &sink, &options).unwrap();
        assert_eq!(outcomes.len(), 40);
        for (i, outcome) in outcomes.iter().enumerate() {
            assert_eq!(outcome.index, i);
            let expected = if i % 3 == 0 { set(&[13]) } else { set(&[3]) };
            assert_eq!(outcome.labels, expected, "record {i}");
        }
        // Gate + topics per record.
        assert_eq!(sink.len(), 80);
    }

    #[test]
    fn http_backend_reports_transport_failures() {
        // Port 9 is the discard service; nothing listens there in this
        // environment, so the connection fails fast.
        let backend = HttpBackend::new("http://127.0.0.1:9/complete", None);
        let error = backend.complete("ping").unwrap_err();
        assert_eq!(error.backend, "http:http://127.0.0.1:9/complete");
        assert!(!error.message.is_empty());
    }

    #[test]
    fn jsonl_sink_writes_one_line_per_transcript() {
        let sink = JsonlSink::new(Vec::new());
        for i in 0..3 {
            sink.record(PromptTranscript {
                prompt: format!("p{i}"),
                raw_response: "r".to_string(),
                parsed: None,
                backend_id: "test".to_string(),
                timestamp_unix_secs: 1,
            })
            .unwrap();
        }
        let bytes = sink.into_inner();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 3);
        for line in text.lines() {
            let back: PromptTranscript = serde_json::from_str(line).unwrap();
            assert_eq!(back.backend_id, "test");
        }
    }
}
