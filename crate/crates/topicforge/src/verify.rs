//! Deterministic answer extraction and reward computation.
//!
//! Evaluation responses carry their final answer either between
//! `[ANSWER]…[/ANSWER]` tags or inside a LaTeX `\boxed{…}` marker. Both
//! extractors take the *last* occurrence — the prompts ask for a final
//! answer, and models that think out loud often emit earlier candidates.
//! Extraction, matching, and reward shaping are pure functions so many
//! rollout evaluators can call them concurrently.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

use crate::corpus::AnswerFormat;

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("unbalanced braces after the final boxed marker")]
    UnbalancedBoxed,
    #[error(
        "invalid reward weights (correct {correct_weight}, format {format_bonus}, \
         repetition {repetition_penalty}): all must be nonnegative and finite, \
         and correct + format must not exceed the ceiling of 2"
    )]
    InvalidRewardConfig {
        correct_weight: f64,
        format_bonus: f64,
        repetition_penalty: f64,
    },
}

/// How an answer span was located.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMethod {
    Tag,
    Boxed,
    None,
}

/// An answer span pulled out of a model response. `method` is
/// [`ExtractionMethod::None`] exactly when no span was found — an empty
/// span between markers counts as not found.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedAnswer {
    /// The span as it appeared, untrimmed.
    pub raw_span: String,
    /// Trimmed; single letters upper-cased.
    pub normalized: String,
    pub method: ExtractionMethod,
}

impl ExtractedAnswer {
    fn absent() -> Self {
        Self {
            raw_span: String::new(),
            normalized: String::new(),
            method: ExtractionMethod::None,
        }
    }

    fn found(raw_span: &str, method: ExtractionMethod) -> Self {
        if raw_span.is_empty() {
            return Self::absent();
        }
        let trimmed = raw_span.trim();
        let mut normalized = trimmed.to_string();
        let mut chars = trimmed.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if c.is_ascii_alphabetic() {
                normalized = c.to_ascii_uppercase().to_string();
            }
        }
        Self {
            raw_span: raw_span.to_string(),
            normalized,
            method,
        }
    }
}

const OPEN_TAG: &str = "[ANSWER]";
const CLOSE_TAG: &str = "[/ANSWER]";
const BOXED_MARKER: &str = "\\boxed{";

/// Extract the content of the last `[ANSWER]…[/ANSWER]` pair. Pairs are
/// matched left to right without nesting; a missing pair is a value, not
/// an error.
pub fn extract_tagged(response: &str) -> ExtractedAnswer {
    let mut last: Option<&str> = None;
    let mut cursor = 0;
    while let Some(open) = response[cursor..].find(OPEN_TAG) {
        let content_start = cursor + open + OPEN_TAG.len();
        match response[content_start..].find(CLOSE_TAG) {
            Some(close) => {
                last = Some(&response[content_start..content_start + close]);
                cursor = content_start + close + CLOSE_TAG.len();
            }
            None => break,
        }
    }
    match last {
        Some(span) => ExtractedAnswer::found(span, ExtractionMethod::Tag),
        None => ExtractedAnswer::absent(),
    }
}

/// Extract the balanced-brace content of the last `\boxed{…}` marker.
/// Inner braces are preserved (`\boxed{10^{5}}` yields `10^{5}`); running
/// out of input before the braces balance is an error.
pub fn extract_boxed(response: &str) -> Result<ExtractedAnswer, VerifyError> {
    let Some(marker) = response.rfind(BOXED_MARKER) else {
        return Ok(ExtractedAnswer::absent());
    };
    let content_start = marker + BOXED_MARKER.len();
    let mut depth = 1usize;
    for (offset, c) in response[content_start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    let span = &response[content_start..content_start + offset];
                    return Ok(ExtractedAnswer::found(span, ExtractionMethod::Boxed));
                }
            }
            _ => {}
        }
    }
    Err(VerifyError::UnbalancedBoxed)
}

/// Number of complete `[ANSWER]…[/ANSWER]` pairs.
pub fn count_tagged(response: &str) -> usize {
    let mut count = 0;
    let mut cursor = 0;
    while let Some(open) = response[cursor..].find(OPEN_TAG) {
        let content_start = cursor + open + OPEN_TAG.len();
        match response[content_start..].find(CLOSE_TAG) {
            Some(close) => {
                count += 1;
                cursor = content_start + close + CLOSE_TAG.len();
            }
            None => break,
        }
    }
    count
}

/// Number of `\boxed{` markers, balanced or not.
pub fn count_boxed(response: &str) -> usize {
    response.matches(BOXED_MARKER).count()
}

/// A response is well-formatted when it contains exactly one hit of the
/// expected marker kind. Multiple hits still extract (last wins) but
/// forfeit the format bonus.
pub fn format_ok(response: &str, expected: ExtractionMethod) -> bool {
    match expected {
        ExtractionMethod::Tag => count_tagged(response) == 1,
        ExtractionMethod::Boxed => count_boxed(response) == 1,
        ExtractionMethod::None => false,
    }
}

/// Normalization applied to both sides before comparison: trim, lower-case,
/// drop one trailing period, trim again.
pub fn normalize_answer(text: &str) -> String {
    let trimmed = text.trim();
    let without_period = trimmed.strip_suffix('.').unwrap_or(trimmed);
    without_period.trim().to_lowercase()
}

/// Reduce a normalized answer to a bare choice letter if it is one of the
/// letter spellings: `c`, `c)`, `(c)`.
fn choice_letter(normalized: &str) -> Option<char> {
    let inner = normalized.strip_prefix('(').unwrap_or(normalized);
    let inner = inner.strip_suffix(')').unwrap_or(inner);
    let mut chars = inner.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_alphabetic() => Some(c),
        _ => None,
    }
}

/// Compare an extracted answer against the gold answer under
/// [`normalize_answer`]. For multiple choice, letter spellings (`C`, `c)`,
/// `(c)`) are interchangeable. An absent extraction never matches.
pub fn exact_match(pred: &ExtractedAnswer, gold: &str, format: AnswerFormat) -> bool {
    if pred.method == ExtractionMethod::None || gold.trim().is_empty() {
        return false;
    }
    let pred_norm = normalize_answer(&pred.normalized);
    let gold_norm = normalize_answer(gold);
    if pred_norm == gold_norm {
        return true;
    }
    if format == AnswerFormat::Mc {
        if let (Some(p), Some(g)) = (choice_letter(&pred_norm), choice_letter(&gold_norm)) {
            return p == g;
        }
    }
    false
}

/// Reward shaping weights. The reward lives on a fixed `[0, 2]` scale, so
/// the correctness weight plus the format bonus may not exceed 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub correct_weight: f64,
    pub format_bonus: f64,
    pub repetition_penalty: f64,
}

impl Default for RewardConfig {
    /// 1.5 for a correct answer, 0.5 for clean formatting, −0.25 for
    /// degenerate repetition. These splits are operational defaults (the
    /// scale is the contract, not the split) and are echoed in run
    /// reports.
    fn default() -> Self {
        Self {
            correct_weight: 1.5,
            format_bonus: 0.5,
            repetition_penalty: 0.25,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        let ok = [
            self.correct_weight,
            self.format_bonus,
            self.repetition_penalty,
        ]
        .iter()
        .all(|w| w.is_finite() && *w >= 0.0)
            && self.correct_weight + self.format_bonus <= 2.0;
        if ok {
            Ok(())
        } else {
            Err(VerifyError::InvalidRewardConfig {
                correct_weight: self.correct_weight,
                format_bonus: self.format_bonus,
                repetition_penalty: self.repetition_penalty,
            })
        }
    }
}

/// `clamp(correct_weight·correct + format_bonus·format_ok −
/// repetition_penalty·repeated, 0, 2)`.
pub fn compute_reward(correct: bool, format_ok: bool, repeated: bool, cfg: &RewardConfig) -> f64 {
    debug_assert!(cfg.validate().is_ok());
    let mut reward = 0.0;
    if correct {
        reward += cfg.correct_weight;
    }
    if format_ok {
        reward += cfg.format_bonus;
    }
    if repeated {
        reward -= cfg.repetition_penalty;
    }
    reward.clamp(0.0, 2.0)
}

/// True when any whitespace-token n-gram of length `window` occurs at
/// least `threshold` times. A window of 0 never fires; a threshold of 0
/// always does.
pub fn detect_repetition(response: &str, window: usize, threshold: usize) -> bool {
    if threshold == 0 {
        return true;
    }
    let tokens: Vec<&str> = response.split_whitespace().collect();
    if window == 0 || tokens.len() < window {
        return false;
    }
    let mut seen: HashMap<&[&str], usize> = HashMap::new();
    for gram in tokens.windows(window) {
        let count = seen.entry(gram).or_insert(0);
        *count += 1;
        if *count >= threshold {
            return true;
        }
    }
    false
}

pub const DEFAULT_REPETITION_WINDOW: usize = 4;
pub const DEFAULT_REPETITION_THRESHOLD: usize = 3;

/// Full judgment for one response: extraction, match, format check,
/// repetition check, reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub extracted: ExtractedAnswer,
    pub correct: bool,
    pub format_ok: bool,
    pub repeated: bool,
    pub reward: f64,
}

/// Judge a response against its gold answer. Tagged extraction is tried
/// first; when no tag pair exists the boxed form is expected instead, and
/// the format bonus is judged against whichever kind applied.
pub fn judge(
    response: &str,
    gold: &str,
    format: AnswerFormat,
    cfg: &RewardConfig,
    repetition_window: usize,
    repetition_threshold: usize,
) -> Result<Verdict, VerifyError> {
    cfg.validate()?;
    let tagged = extract_tagged(response);
    let (extracted, expected) = if tagged.method == ExtractionMethod::Tag {
        (tagged, ExtractionMethod::Tag)
    } else {
        (extract_boxed(response)?, ExtractionMethod::Boxed)
    };
    let correct = exact_match(&extracted, gold, format);
    let well_formatted = format_ok(response, expected);
    let repeated = detect_repetition(response, repetition_window, repetition_threshold);
    let reward = compute_reward(correct, well_formatted, repeated, cfg);
    Ok(Verdict {
        extracted,
        correct,
        format_ok: well_formatted,
        repeated,
        reward,
    })
}
