use std::collections::BTreeMap;

use serde::Serialize;
use topicforge::pubmed::{
    build_reference_counts, fetch_mesh, ncbi_api_key_from_env, ncbi_transport, search_ids,
    write_snapshot, EntrezQuery, FixtureTransport, PubmedError, Transport, YearMonth,
};

use super::common;
use crate::artifacts::RunDir;
use crate::fail::Failure;
use crate::settings::Settings;

#[derive(Serialize)]
struct FetchSummary {
    ids: usize,
    articles: usize,
    total_mesh_labels: u64,
}

fn parse_year_month(key: &str, value: &str) -> Result<YearMonth, Failure> {
    let (year, month) = value
        .split_once('-')
        .ok_or_else(|| Failure::config(format!("{key}: expected YYYY-MM, got {value:?}")))?;
    let year: u16 = year
        .parse()
        .map_err(|_| Failure::config(format!("{key}: expected YYYY-MM, got {value:?}")))?;
    let month: u8 = month
        .parse()
        .map_err(|_| Failure::config(format!("{key}: expected YYYY-MM, got {value:?}")))?;
    YearMonth::new(year, month).map_err(|e| Failure::config(format!("{key}: {e}")))
}

fn map_pubmed(err: PubmedError) -> Failure {
    match err {
        PubmedError::InvalidQuery { .. } | PubmedError::EmptyRequest => {
            Failure::config(err.to_string())
        }
        other => Failure::Transport(other.to_string()),
    }
}

/// Pull article MeSH indexing for a date window and write the category
/// count snapshot it implies.
///
/// With `fixture` set, requests are answered from a recorded url-to-body
/// map instead of the network and no API key is used, so the request urls
/// are reproducible. Live runs pick up `TOPICFORGE_NCBI_API_KEY` when
/// present; without it the client simply stays under the stricter shared
/// rate limit.
pub fn run(settings: &Settings) -> Result<(), Failure> {
    let term = settings
        .get("term")
        .ok_or_else(|| Failure::config("term is required"))?;
    let from = parse_year_month(
        "date_from",
        settings
            .get("date_from")
            .ok_or_else(|| Failure::config("date_from is required"))?,
    )?;
    let to = parse_year_month(
        "date_to",
        settings
            .get("date_to")
            .ok_or_else(|| Failure::config("date_to is required"))?,
    )?;
    let out_dir = settings.require_path("out_dir")?;

    let mut query = EntrezQuery::new(term, from, to).map_err(map_pubmed)?;
    if let Some(page_size) = settings.usize("page_size")? {
        if page_size == 0 {
            return Err(Failure::config("page_size must be at least 1"));
        }
        query.page_size = page_size;
    }
    let max_ids = settings.usize("max_ids")?;

    let fixture_path = settings.path("fixture");
    let mut run_dir = RunDir::create(&out_dir)?;
    let (transport, api_key): (Box<dyn Transport>, Option<String>) = match &fixture_path {
        Some(path) => {
            run_dir.note_input(path)?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            let bodies: BTreeMap<String, String> = serde_json::from_str(&text).map_err(|e| {
                Failure::Validation(format!(
                    "{}: expected a JSON object mapping urls to response bodies: {e}",
                    path.display()
                ))
            })?;
            let mut fixture = FixtureTransport::new();
            for (url, body) in bodies {
                fixture.insert(url, body);
            }
            (Box::new(fixture), None)
        }
        None => {
            let key = ncbi_api_key_from_env();
            (Box::new(ncbi_transport(key.is_some())), key)
        }
    };

    let ids = search_ids(&query, transport.as_ref(), api_key.as_deref(), max_ids)
        .map_err(map_pubmed)?;
    let articles = if ids.is_empty() {
        Vec::new()
    } else {
        fetch_mesh(
            &ids,
            &query.database,
            query.page_size,
            transport.as_ref(),
            api_key.as_deref(),
        )
        .map_err(map_pubmed)?
    };
    let counts = build_reference_counts(&articles);

    run_dir.write("counts.tsv", write_snapshot(&counts).as_bytes())?;
    run_dir.write("articles.jsonl", &common::jsonl(&articles)?)?;
    run_dir.finish(settings.echo())?;

    let summary = FetchSummary {
        ids: ids.len(),
        articles: articles.len(),
        total_mesh_labels: counts.total(),
    };
    let rendered = serde_json::to_string(&summary).map_err(|e| Failure::Io(e.to_string()))?;
    println!("{rendered}");
    Ok(())
}
