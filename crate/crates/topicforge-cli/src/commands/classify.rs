use serde::Serialize;
use topicforge::classify::{
    label_records, rule_stub_classify, DomainVerdict, JsonlSink, LabelOptions, RuleTable,
};

use super::common::{self, Backend};
use crate::artifacts::RunDir;
use crate::fail::Failure;
use crate::settings::Settings;

#[derive(Serialize)]
struct ClassifySummary {
    backend: &'static str,
    total: usize,
    relabeled: usize,
    skipped_already_labeled: usize,
    gated_out: usize,
    parse_failures: usize,
    dropped_label_names: usize,
}

/// Attach topic labels to every record of a dataset.
///
/// With `--resume`, records that already carry labels are left untouched,
/// so an interrupted run can be finished by rerunning with the prior
/// output as input. The labeled dataset, the raw backend transcripts, and
/// a manifest land in `out_dir`.
pub fn run(settings: &Settings, resume: bool) -> Result<(), Failure> {
    let backend = common::build_backend(settings, "rule-stub")?;
    let input = settings.require_path("input")?;
    let out_dir = settings.require_path("out_dir")?;

    let mut records = common::read_dataset(&input)?;
    let mut run_dir = RunDir::create(&out_dir)?;
    run_dir.note_input(&input)?;

    let subset: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| !resume || r.labels.is_none())
        .map(|(i, _)| i)
        .collect();
    let mut summary = ClassifySummary {
        backend: backend.kind(),
        total: records.len(),
        relabeled: subset.len(),
        skipped_already_labeled: records.len() - subset.len(),
        gated_out: 0,
        parse_failures: 0,
        dropped_label_names: 0,
    };

    let mut transcripts: Vec<u8> = Vec::new();
    match &backend {
        Backend::RuleStub => {
            let rules = RuleTable::builtin();
            for &index in &subset {
                let labels = rule_stub_classify(&records[index], &rules);
                records[index].labels = Some(labels);
            }
        }
        _ if subset.is_empty() => {}
        _ => {
            let classifier = backend.as_classifier().expect("non-stub backend");
            let batch: Vec<_> = subset.iter().map(|&i| records[i].clone()).collect();
            let options = LabelOptions {
                skip_domain_gate: settings.bool("skip_gate")?,
                max_in_flight: settings.usize("max_in_flight")?.unwrap_or(4),
                ..LabelOptions::default()
            };
            let sink = JsonlSink::new(Vec::new());
            let outcomes = label_records(&batch, classifier, &sink, &options)
                .map_err(common::map_classify)?;
            transcripts = sink.into_inner();
            for outcome in outcomes {
                summary.gated_out += (outcome.domain == Some(DomainVerdict::NotBiology)) as usize;
                summary.parse_failures += outcome.parse_failed as usize;
                summary.dropped_label_names += outcome.dropped.len();
                // Parse failures stay unlabeled so a resumed run retries them.
                if !outcome.parse_failed {
                    records[subset[outcome.index]].labels = Some(outcome.labels);
                }
            }
        }
    }

    let mut labeled = Vec::new();
    topicforge::corpus::write_records(&mut labeled, &records)
        .map_err(|e| Failure::Io(e.to_string()))?;
    run_dir.write("labeled.jsonl", &labeled)?;
    run_dir.write("transcripts.jsonl", &transcripts)?;
    run_dir.finish(settings.echo())?;

    let rendered =
        serde_json::to_string(&summary).map_err(|e| Failure::Io(e.to_string()))?;
    println!("{rendered}");
    Ok(())
}
