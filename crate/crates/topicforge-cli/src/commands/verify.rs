use std::io::{BufRead, BufReader};

use serde::{Deserialize, Serialize};
use topicforge::corpus::AnswerFormat;
use topicforge::verify::{
    judge, RewardConfig, VerifyError, DEFAULT_REPETITION_THRESHOLD, DEFAULT_REPETITION_WINDOW,
};

use crate::artifacts::RunDir;
use crate::fail::Failure;
use crate::settings::Settings;

#[derive(Deserialize)]
struct VerifyItem {
    #[serde(default)]
    id: Option<String>,
    response: String,
    gold: String,
    answer_format: AnswerFormat,
}

#[derive(Serialize)]
struct VerdictLine {
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    correct: bool,
    format_ok: bool,
    repeated: bool,
    reward: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    extracted: Option<String>,
    /// Set when the response could not be judged at all (for example an
    /// unbalanced boxed span); such items count as incorrect.
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct VerifySummary {
    items: usize,
    correct: usize,
    accuracy: f64,
    mean_reward: f64,
    unjudgeable: usize,
}

/// Judge a file of `{response, gold, answer_format}` items and write one
/// verdict per line.
pub fn run(settings: &Settings) -> Result<(), Failure> {
    let cfg = RewardConfig {
        correct_weight: settings
            .f64("correct_weight")?
            .unwrap_or(RewardConfig::default().correct_weight),
        format_bonus: settings
            .f64("format_bonus")?
            .unwrap_or(RewardConfig::default().format_bonus),
        repetition_penalty: settings
            .f64("repetition_penalty")?
            .unwrap_or(RewardConfig::default().repetition_penalty),
    };
    cfg.validate().map_err(|e| Failure::config(e.to_string()))?;
    let window = settings
        .usize("repetition_window")?
        .unwrap_or(DEFAULT_REPETITION_WINDOW);
    let threshold = settings
        .usize("repetition_threshold")?
        .unwrap_or(DEFAULT_REPETITION_THRESHOLD);

    let input = settings.require_path("input")?;
    let out_dir = settings.require_path("out_dir")?;
    let file = std::fs::File::open(&input)
        .map_err(|e| Failure::Io(format!("{}: {e}", input.display())))?;

    let mut run_dir = RunDir::create(&out_dir)?;
    run_dir.note_input(&input)?;

    let mut lines: Vec<VerdictLine> = Vec::new();
    let mut summary = VerifySummary {
        items: 0,
        correct: 0,
        accuracy: 0.0,
        mean_reward: 0.0,
        unjudgeable: 0,
    };
    let mut reward_total = 0.0;
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Failure::Io(format!("{}: {e}", input.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: VerifyItem = serde_json::from_str(&line).map_err(|e| {
            Failure::Validation(format!("{}:{}: {e}", input.display(), index + 1))
        })?;
        summary.items += 1;
        let verdict = match judge(&item.response, &item.gold, item.answer_format, &cfg, window, threshold) {
            Ok(verdict) => VerdictLine {
                id: item.id,
                correct: verdict.correct,
                format_ok: verdict.format_ok,
                repeated: verdict.repeated,
                reward: verdict.reward,
                extracted: Some(verdict.extracted.normalized),
                error: None,
            },
            Err(err @ VerifyError::UnbalancedBoxed) => {
                summary.unjudgeable += 1;
                VerdictLine {
                    id: item.id,
                    correct: false,
                    format_ok: false,
                    repeated: topicforge::verify::detect_repetition(
                        &item.response,
                        window,
                        threshold,
                    ),
                    reward: 0.0,
                    extracted: None,
                    error: Some(err.to_string()),
                }
            }
            Err(other) => return Err(Failure::Io(other.to_string())),
        };
        summary.correct += verdict.correct as usize;
        reward_total += verdict.reward;
        lines.push(verdict);
    }
    if summary.items > 0 {
        summary.accuracy = summary.correct as f64 / summary.items as f64;
        summary.mean_reward = reward_total / summary.items as f64;
    }

    run_dir.write("verdicts.jsonl", &super::common::jsonl(&lines)?)?;
    run_dir.finish(settings.echo())?;

    let rendered = serde_json::to_string(&summary).map_err(|e| Failure::Io(e.to_string()))?;
    println!("{rendered}");
    Ok(())
}
