//! Embedded prompt templates and their renderer.
//!
//! Every LLM-facing string in this crate comes from a text asset compiled
//! into the binary, addressed by [`TemplateId`]. The renderer performs a
//! single substitution pass with these rules:
//!
//! * `{{` and `}}` are escapes for literal braces.
//! * `{name}` where `name` is declared for the template substitutes the
//!   supplied value; a declared name with no value is an error, as is a
//!   supplied key the template never declared.
//! * Any other brace group — `{}`, `${reasoning}` and similar strings the
//!   templates ask the *model* to emit — passes through verbatim.
//! * A lone unmatched brace is a malformed-template error.
//!
//! Values are inserted as-is, never escaped or re-scanned, so rendering is
//! byte-predictable: output equals the template with declared groups
//! replaced and escapes collapsed, nothing else.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("unknown template {name:?}")]
    UnknownTemplate { name: String },
    #[error("template {template}: missing value for placeholder {name:?}")]
    MissingPlaceholder { template: &'static str, name: String },
    #[error("template {template}: unexpected substitution key {name:?}")]
    UnexpectedKey { template: &'static str, name: String },
    #[error("template {template}: key {name:?} supplied twice")]
    DuplicateKey { template: &'static str, name: String },
    #[error("template {template}: unmatched brace at byte {position}")]
    MalformedBrace { template: &'static str, position: usize },
}

macro_rules! asset {
    ($file:literal) => {
        include_str!(concat!("../assets/prompts/", $file))
    };
}

/// Identifies one shipped prompt template.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TemplateId {
    /// Binary biology / not-biology gate over a question-answer pair.
    DomainGate,
    /// Multi-label topic classification of a question-answer pair,
    /// including the few-shot example block.
    TopicLabels,
    /// Chain-of-thought topic classification of an article abstract.
    AbstractLabels,
    /// Scores a text chunk's scientific usefulness 1–10.
    ContentRelevance,
    /// Drafts one multiple-choice question with a controlled answer
    /// position.
    McqGenerate,
    /// Grades a drafted question 1–10 with relevance-based caps.
    McqGrade,
    /// Converts a chunk into an exam-style free-form problem, or NONE.
    FreeformExtract,
    /// Grades a free-form problem against a 9-point rubric.
    FreeformGrade,
    /// Answer-tag evaluation prompt for multiple-choice questions.
    EvalMcTagged,
    /// Boxed-answer evaluation prompt for four-option questions.
    EvalMcBoxed,
    /// Boxed-answer evaluation prompt for abstract yes/no/maybe questions.
    EvalAbstractBoxed,
}

impl TemplateId {
    pub const ALL: [TemplateId; 11] = [
        TemplateId::DomainGate,
        TemplateId::TopicLabels,
        TemplateId::AbstractLabels,
        TemplateId::ContentRelevance,
        TemplateId::McqGenerate,
        TemplateId::McqGrade,
        TemplateId::FreeformExtract,
        TemplateId::FreeformGrade,
        TemplateId::EvalMcTagged,
        TemplateId::EvalMcBoxed,
        TemplateId::EvalAbstractBoxed,
    ];

    /// Stable external name, used by the CLI and in transcripts.
    pub fn name(self) -> &'static str {
        match self {
            TemplateId::DomainGate => "domain-gate",
            TemplateId::TopicLabels => "topic-labels",
            TemplateId::AbstractLabels => "abstract-labels",
            TemplateId::ContentRelevance => "content-relevance",
            TemplateId::McqGenerate => "mcq-generate",
            TemplateId::McqGrade => "mcq-grade",
            TemplateId::FreeformExtract => "freeform-extract",
            TemplateId::FreeformGrade => "freeform-grade",
            TemplateId::EvalMcTagged => "eval-mc-tagged",
            TemplateId::EvalMcBoxed => "eval-mc-boxed",
            TemplateId::EvalAbstractBoxed => "eval-abstract-boxed",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, PromptError> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == name)
            .ok_or_else(|| PromptError::UnknownTemplate {
                name: name.to_string(),
            })
    }

    /// The template text. Assets are stored with a single trailing newline
    /// for editor friendliness; it is not part of the prompt.
    pub fn text(self) -> &'static str {
        let raw = match self {
            TemplateId::DomainGate => asset!("domain_gate.txt"),
            TemplateId::TopicLabels => asset!("topic_labels.txt"),
            TemplateId::AbstractLabels => asset!("abstract_labels.txt"),
            TemplateId::ContentRelevance => asset!("content_relevance.txt"),
            TemplateId::McqGenerate => asset!("mcq_generate.txt"),
            TemplateId::McqGrade => asset!("mcq_grade.txt"),
            TemplateId::FreeformExtract => asset!("freeform_extract.txt"),
            TemplateId::FreeformGrade => asset!("freeform_grade.txt"),
            TemplateId::EvalMcTagged => asset!("eval_mc_tagged.txt"),
            TemplateId::EvalMcBoxed => asset!("eval_mc_boxed.txt"),
            TemplateId::EvalAbstractBoxed => asset!("eval_abstract_boxed.txt"),
        };
        raw.strip_suffix('\n').unwrap_or(raw)
    }

    /// Placeholder names the template declares, i.e. the keys [`render`]
    /// requires.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateId::DomainGate => &["question", "answer"],
            TemplateId::TopicLabels => &["few_shot_examples", "question", "answer"],
            TemplateId::AbstractLabels => &["abstract"],
            TemplateId::ContentRelevance => &["chunk_text"],
            TemplateId::McqGenerate => &["num_answers", "text_chunk", "target_correct_position"],
            TemplateId::McqGrade => &[
                "chunk_text",
                "question",
                "relevance_check['relevance_score']",
                "relevance_check['content_type']",
                "relevance_check['reasoning']",
            ],
            TemplateId::FreeformExtract => &["augmented_chunk"],
            TemplateId::FreeformGrade => &["exam_problem"],
            TemplateId::EvalMcTagged => &["question", "answers"],
            TemplateId::EvalMcBoxed => &[
                "question",
                "option_a",
                "option_b",
                "option_c",
                "option_d",
            ],
            TemplateId::EvalAbstractBoxed => &["abstract_text", "question"],
        }
    }
}

/// Render a template with `(key, value)` substitutions.
pub fn render(template: TemplateId, values: &[(&str, &str)]) -> Result<String, PromptError> {
    render_text(template.name(), template.text(), template.placeholders(), values)
}

fn render_text(
    template: &'static str,
    text: &str,
    declared: &[&str],
    values: &[(&str, &str)],
) -> Result<String, PromptError> {
    for (i, (key, _)) in values.iter().enumerate() {
        if !declared.contains(key) {
            return Err(PromptError::UnexpectedKey {
                template,
                name: key.to_string(),
            });
        }
        if values[..i].iter().any(|(prior, _)| prior == key) {
            return Err(PromptError::DuplicateKey {
                template,
                name: key.to_string(),
            });
        }
    }

    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' => {
                if bytes.get(i + 1) == Some(&b'{') {
                    out.push('{');
                    i += 2;
                    continue;
                }
                let mut j = i + 1;
                while j < bytes.len() && bytes[j] != b'}' && bytes[j] != b'{' {
                    j += 1;
                }
                if j >= bytes.len() || bytes[j] == b'{' {
                    return Err(PromptError::MalformedBrace {
                        template,
                        position: i,
                    });
                }
                let name = &text[i + 1..j];
                if declared.contains(&name) {
                    match values.iter().find(|(key, _)| *key == name) {
                        Some((_, value)) => out.push_str(value),
                        None => {
                            return Err(PromptError::MissingPlaceholder {
                                template,
                                name: name.to_string(),
                            })
                        }
                    }
                } else {
                    out.push_str(&text[i..=j]);
                }
                i = j + 1;
            }
            b'}' => {
                if bytes.get(i + 1) == Some(&b'}') {
                    out.push('}');
                    i += 2;
                    continue;
                }
                return Err(PromptError::MalformedBrace {
                    template,
                    position: i,
                });
            }
            _ => {
                let start = i;
                while i < bytes.len() && bytes[i] != b'{' && bytes[i] != b'}' {
                    i += 1;
                }
                out.push_str(&text[start..i]);
            }
        }
    }
    Ok(out)
}
