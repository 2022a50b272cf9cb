//! Helpers shared by the subcommands: dataset/chunk loading and backend
//! construction.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::Serialize;
use topicforge::classify::{ClassifierBackend, ClassifyError, HttpBackend, ScriptedBackend};
use topicforge::corpus::{read_records, QARecord};
use topicforge::qagen::Chunk;

use crate::fail::Failure;
use crate::settings::Settings;

pub fn read_dataset(path: &Path) -> Result<Vec<QARecord>, Failure> {
    let file = File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for item in read_records(BufReader::new(file)) {
        records
            .push(item.map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?);
    }
    Ok(records)
}

/// Chunks arrive as JSON Lines; blank lines are allowed and skipped.
pub fn read_chunks(path: &Path) -> Result<Vec<Chunk>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut chunks = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let chunk: Chunk = serde_json::from_str(line).map_err(|e| {
            Failure::Validation(format!("{}:{}: {e}", path.display(), index + 1))
        })?;
        chunks.push(chunk);
    }
    Ok(chunks)
}

pub fn jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>, Failure> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| Failure::Io(e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}

pub enum Backend {
    RuleStub,
    Scripted(ScriptedBackend),
    Http(HttpBackend),
}

impl Backend {
    pub fn kind(&self) -> &'static str {
        match self {
            Backend::RuleStub => "rule-stub",
            Backend::Scripted(_) => "scripted",
            Backend::Http(_) => "http",
        }
    }

    /// The trait object for backends that actually complete prompts;
    /// callers handle `RuleStub` themselves.
    pub fn as_classifier(&self) -> Option<&dyn ClassifierBackend> {
        match self {
            Backend::RuleStub => None,
            Backend::Scripted(backend) => Some(backend),
            Backend::Http(backend) => Some(backend),
        }
    }
}

/// Build the backend named by the `backend` setting.
///
/// The `http` backend refuses to start without `TOPICFORGE_LLM_API_KEY`,
/// and checks it before any file is opened so a missing key fails fast.
pub fn build_backend(settings: &Settings, default_kind: &str) -> Result<Backend, Failure> {
    let kind = settings.get("backend").unwrap_or(default_kind);
    match kind {
        "rule-stub" => Ok(Backend::RuleStub),
        "scripted" => {
            let path = settings.path("script").ok_or_else(|| {
                Failure::config("the scripted backend needs a script file (set script)")
            })?;
            let file = File::open(&path)
                .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            let responses: Vec<String> = serde_json::from_reader(BufReader::new(file))
                .map_err(|e| {
                    Failure::Validation(format!(
                        "{}: expected a JSON array of response strings: {e}",
                        path.display()
                    ))
                })?;
            Ok(Backend::Scripted(ScriptedBackend::new(responses)))
        }
        "http" => {
            let api_key = std::env::var("TOPICFORGE_LLM_API_KEY").map_err(|_| {
                Failure::config("the http backend needs TOPICFORGE_LLM_API_KEY in the environment")
            })?;
            let url = settings
                .get("backend_url")
                .ok_or_else(|| Failure::config("the http backend needs an endpoint (set backend_url)"))?;
            Ok(Backend::Http(HttpBackend::new(url, Some(api_key))))
        }
        other => Err(Failure::config(format!(
            "unknown backend {other:?}; expected rule-stub, scripted, or http"
        ))),
    }
}

pub fn map_classify(err: ClassifyError) -> Failure {
    match err {
        ClassifyError::Transport(e) => Failure::Transport(e.to_string()),
        other => Failure::Io(other.to_string()),
    }
}
