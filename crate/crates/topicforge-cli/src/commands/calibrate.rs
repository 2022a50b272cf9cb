use serde::Serialize;
use topicforge::distmatch::{smooth, tau_bound, SmoothingAlpha};
use topicforge::pubmed::parse_snapshot;
use topicforge::report::{
    alignment_report, alignment_tsv, smoothing_report, smoothing_tsv, CalibrationSummary,
};
use topicforge::sampler::{run_calibration, SamplerConfig, SamplerError, StopReason};
use topicforge::taxonomy::LabelSet;

use super::common;
use crate::artifacts::RunDir;
use crate::fail::Failure;
use crate::settings::Settings;

#[derive(Serialize)]
struct CalibrateSummary {
    valid: usize,
    kept: usize,
    yield_fraction: f64,
    initial_tvd: f64,
    final_tvd: f64,
    tau: f64,
    iterations: usize,
    stop_reason: StopReason,
}

/// Prune a labeled dataset until its topic shares sit within `tau` of the
/// smoothed reference distribution.
///
/// Exactly one of `tau` and `error_rate` must be set; an error rate is
/// converted to the distance bound it implies against the chosen target.
/// All artifacts — kept ids, the removal trace, result and report tables —
/// are written even when the run stops infeasible, so a failed calibration
/// can be inspected; only the exit code differs.
pub fn run(settings: &Settings) -> Result<(), Failure> {
    let tau_setting = settings.f64("tau")?;
    let error_rate = settings.f64("error_rate")?;
    match (tau_setting, error_rate) {
        (Some(_), Some(_)) => {
            return Err(Failure::config(
                "tau and error_rate are mutually exclusive; set exactly one",
            ))
        }
        (None, None) => {
            return Err(Failure::config("set one of tau or error_rate"));
        }
        _ => {}
    }
    let alpha_value = settings.f64("alpha")?.unwrap_or(1.0);
    let alpha = SmoothingAlpha::new(alpha_value)
        .map_err(|e| Failure::config(format!("alpha: {e}")))?;

    let input = settings.require_path("input")?;
    let counts_path = settings.require_path("counts")?;
    let out_dir = settings.require_path("out_dir")?;

    let records = common::read_dataset(&input)?;
    let counts_text = std::fs::read_to_string(&counts_path)
        .map_err(|e| Failure::Io(format!("{}: {e}", counts_path.display())))?;
    let counts = parse_snapshot(&counts_text)
        .map_err(|e| Failure::Validation(format!("{}: {e}", counts_path.display())))?;
    let target = smooth(&counts, alpha)
        .map_err(|e| Failure::Validation(format!("{}: {e}", counts_path.display())))?;

    let tau = match tau_setting {
        Some(t) => t,
        None => tau_bound(error_rate.expect("checked above"), &target)
            .map_err(|e| Failure::config(format!("error_rate: {e}")))?,
    };

    let valid = records
        .iter()
        .filter(|r| r.labels.as_ref().is_some_and(|l| !l.is_empty()))
        .count();
    if valid == 0 {
        return Err(Failure::Validation(format!(
            "{}: no records carry labels; run classify first",
            input.display()
        )));
    }

    let mut config = SamplerConfig::for_size(valid, tau);
    if let Some(lambda) = settings.f64("lambda")? {
        config.lambda = lambda;
    }
    if let Some(k) = settings.usize("k")? {
        config.k = k;
    }
    if let Some(n_min) = settings.usize("n_min")? {
        config.n_min = n_min;
    }
    if let Some(max_iters) = settings.usize("max_iters")? {
        config.max_iters = max_iters;
    }

    let result = run_calibration(&records, &counts, alpha, &config).map_err(|e| match e {
        SamplerError::NoValidItems | SamplerError::Dist(_) => Failure::Validation(e.to_string()),
        SamplerError::InvalidTau(_)
        | SamplerError::InvalidLambda(_)
        | SamplerError::InvalidK => Failure::config(e.to_string()),
    })?;

    let mut run_dir = RunDir::create(&out_dir)?;
    run_dir.note_input(&input)?;
    run_dir.note_input(&counts_path)?;

    let mut kept_ids = result.kept_ids.join("\n");
    kept_ids.push('\n');
    run_dir.write("kept_ids.txt", kept_ids.as_bytes())?;
    run_dir.write("trace.jsonl", &common::jsonl(&result.sample.trace)?)?;
    let result_json =
        serde_json::to_vec_pretty(&result).map_err(|e| Failure::Io(e.to_string()))?;
    run_dir.write("result.json", &result_json)?;

    let mut smoothing = smoothing_report(&counts, &[alpha_value])
        .map_err(|e| Failure::Validation(e.to_string()))?;
    smoothing.attach_calibration(
        alpha_value,
        CalibrationSummary {
            dataset_size: valid,
            yield_fraction: result.sample.yield_fraction,
            final_tvd: result.sample.final_tvd,
        },
    );
    run_dir.write("smoothing.tsv", smoothing_tsv(&smoothing).as_bytes())?;

    let labelsets: Vec<LabelSet> = records
        .iter()
        .map(|r| r.labels.unwrap_or(LabelSet::EMPTY))
        .collect();
    let alignment = alignment_report(&[("input".to_string(), labelsets)], "target", &target)
        .map_err(|e| Failure::Validation(e.to_string()))?;
    run_dir.write("alignment.tsv", alignment_tsv(&alignment).as_bytes())?;

    run_dir.finish(settings.echo())?;

    let summary = CalibrateSummary {
        valid,
        kept: result.kept_ids.len(),
        yield_fraction: result.sample.yield_fraction,
        initial_tvd: result
            .sample
            .trace
            .first()
            .map_or(result.sample.final_tvd, |step| step.tvd_before),
        final_tvd: result.sample.final_tvd,
        tau,
        iterations: result.sample.trace.len(),
        stop_reason: result.sample.stop_reason,
    };
    let rendered = serde_json::to_string(&summary).map_err(|e| Failure::Io(e.to_string()))?;
    println!("{rendered}");

    match result.sample.stop_reason {
        StopReason::Converged => Ok(()),
        StopReason::SizeFloor => Err(Failure::Infeasible(format!(
            "size floor {} reached at distance {:.4}, above tau {:.4}",
            config.n_min, result.sample.final_tvd, tau
        ))),
        StopReason::IterationCap => Err(Failure::Infeasible(format!(
            "iteration cap {} reached at distance {:.4}, above tau {:.4}",
            config.max_iters, result.sample.final_tvd, tau
        ))),
    }
}
