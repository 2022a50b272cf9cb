use serde::Serialize;
use topicforge::classify::JsonlSink;
use topicforge::qagen::{run_pipeline, PipelineConfig, QagenError};

use super::common;
use crate::artifacts::RunDir;
use crate::fail::Failure;
use crate::seed::stream_seed;
use crate::settings::Settings;

#[derive(Serialize)]
struct QagenSummary {
    chunks: usize,
    chunks_passed_gate: usize,
    records: usize,
    rejections: usize,
}

/// Draft multiple-choice and freeform questions from text chunks.
///
/// Correct-answer positions are drawn from a stream seeded off the run
/// seed, so two runs over the same chunks place answers identically
/// regardless of backend or concurrency.
pub fn run(settings: &Settings) -> Result<(), Failure> {
    let backend = common::build_backend(settings, "scripted")?;
    let classifier = backend.as_classifier().ok_or_else(|| {
        Failure::config("the rule-stub backend cannot draft questions; use scripted or http")
    })?;
    let input = settings.require_path("input")?;
    let out_dir = settings.require_path("out_dir")?;

    let chunks = common::read_chunks(&input)?;
    let mut run_dir = RunDir::create(&out_dir)?;
    run_dir.note_input(&input)?;

    let defaults = PipelineConfig::default();
    let config = PipelineConfig {
        relevance_min: settings.u8("relevance_min")?.unwrap_or(defaults.relevance_min),
        mcq_grade_min: settings.u8("mcq_grade_min")?.unwrap_or(defaults.mcq_grade_min),
        freeform_required_score: settings
            .u8("freeform_required_score")?
            .unwrap_or(defaults.freeform_required_score),
        num_answers: settings.usize("num_answers")?.unwrap_or(defaults.num_answers),
        seed: stream_seed(settings.u64("seed")?.unwrap_or(0), "qagen.positions"),
        generate_mcq: !settings.bool("skip_mcq")?,
        generate_freeform: !settings.bool("skip_freeform")?,
        max_in_flight: settings.usize("max_in_flight")?.unwrap_or(defaults.max_in_flight),
        source: settings
            .get("source")
            .unwrap_or(&defaults.source)
            .to_string(),
    };

    let sink = JsonlSink::new(Vec::new());
    let outcome = run_pipeline(&chunks, classifier, &sink, &config).map_err(|e| match e {
        QagenError::Transport(inner) => Failure::Transport(inner.to_string()),
        QagenError::InvalidChunk { .. } => Failure::Validation(e.to_string()),
        other => Failure::Io(other.to_string()),
    })?;
    let transcripts = sink.into_inner();

    let mut records = Vec::new();
    topicforge::corpus::write_records(&mut records, &outcome.records)
        .map_err(|e| Failure::Io(e.to_string()))?;
    run_dir.write("records.jsonl", &records)?;
    run_dir.write("rejections.jsonl", &common::jsonl(&outcome.rejections)?)?;
    run_dir.write("transcripts.jsonl", &transcripts)?;
    run_dir.finish(settings.echo())?;

    let summary = QagenSummary {
        chunks: outcome.chunks_processed,
        chunks_passed_gate: outcome.chunks_passed_gate,
        records: outcome.records.len(),
        rejections: outcome.rejections.len(),
    };
    let rendered = serde_json::to_string(&summary).map_err(|e| Failure::Io(e.to_string()))?;
    println!("{rendered}");
    Ok(())
}
