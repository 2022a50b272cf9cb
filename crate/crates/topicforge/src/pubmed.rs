//! Reference-corpus client for the NCBI E-utilities service.
//!
//! Fetches article identifiers and their MeSH descriptor sets, maps
//! descriptors onto the 21 category names, and accumulates the reference
//! count vector. Everything runs against a [`Transport`] abstraction, so
//! the whole module works offline from recorded fixtures; the checked-in
//! count snapshot is the ground truth the rest of the pipeline consumes,
//! and live fetching exists to regenerate it.
//!
//! Requests per second are bounded by a shared [`RateLimiter`]: 10/s when
//! an API key is present, 3/s without — a missing key slows the client
//! down, it never fails it.

use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::distmatch::{counts_from_labelsets, CountVector};
use crate::taxonomy::{canonical_categories, parse_labels, LabelSet, CATEGORY_COUNT};

const EUTILS_BASE: &str = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";

/// Environment variable holding the NCBI API key.
pub const NCBI_API_KEY_VAR: &str = "TOPICFORGE_NCBI_API_KEY";

pub fn ncbi_api_key_from_env() -> Option<String> {
    std::env::var(NCBI_API_KEY_VAR).ok().filter(|k| !k.is_empty())
}

#[derive(Debug, Error)]
#[error("transport failed for {url}: {message}")]
pub struct TransportError {
    pub url: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum PubmedError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("service error: {payload}")]
    Service { payload: String },
    #[error("unparseable search payload: {reason}")]
    Payload { reason: String },
    #[error("unparseable article XML: {0}")]
    Xml(String),
    #[error("invalid query: {reason}")]
    InvalidQuery { reason: String },
    #[error("no ids supplied")]
    EmptyRequest,
    #[error("articles missing from fetch response: {pmids:?}")]
    MissingArticles { pmids: Vec<String> },
    #[error("bad snapshot: {reason}")]
    Snapshot { reason: String },
}

/// Year-month bound for a publication-date window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: u16,
    pub month: u8,
}

impl YearMonth {
    pub fn new(year: u16, month: u8) -> Result<Self, PubmedError> {
        if !(1..=12).contains(&month) {
            return Err(PubmedError::InvalidQuery {
                reason: format!("month {month} outside 1..=12"),
            });
        }
        Ok(Self { year, month })
    }
}

impl std::fmt::Display for YearMonth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}/{:02}", self.year, self.month)
    }
}

/// A search against the citation database.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntrezQuery {
    pub term: String,
    pub date_from: YearMonth,
    pub date_to: YearMonth,
    pub database: String,
    pub page_size: usize,
}

impl EntrezQuery {
    pub fn new(
        term: impl Into<String>,
        date_from: YearMonth,
        date_to: YearMonth,
    ) -> Result<Self, PubmedError> {
        if date_from > date_to {
            return Err(PubmedError::InvalidQuery {
                reason: format!("window starts {date_from} after it ends {date_to}"),
            });
        }
        Ok(Self {
            term: term.into(),
            date_from,
            date_to,
            database: "pubmed".to_string(),
            page_size: 200,
        })
    }
}

/// One article's identity and MeSH indexing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleMeta {
    pub pmid: String,
    pub mesh_descriptors: Vec<String>,
    /// Publication year; 0 when the record carries none.
    pub year: i32,
}

/// Issues one HTTP GET. Implementations decide about the network.
pub trait Transport: Sync {
    fn get(&self, url: &str) -> Result<String, TransportError>;
}

// ---------------------------------------------------------------------------
// Rate limiting
// ---------------------------------------------------------------------------

/// Monotonic time source; swapped out in tests so limiter behavior is
/// assertable without real sleeping.
pub trait Clock: Sync {
    fn monotonic(&self) -> Duration;
    fn sleep(&self, duration: Duration);
}

pub struct SystemClock {
    epoch: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            epoch: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn monotonic(&self) -> Duration {
        self.epoch.elapsed()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Shared token source enforcing a minimum spacing between requests.
pub struct RateLimiter<C: Clock = SystemClock> {
    min_interval: Duration,
    last: Mutex<Option<Duration>>,
    clock: C,
}

impl RateLimiter<SystemClock> {
    /// NCBI-documented budgets: 10 requests/second with a key, 3 without.
    pub fn for_ncbi(has_api_key: bool) -> Self {
        Self::per_second(if has_api_key { 10 } else { 3 }, SystemClock::default())
    }
}

impl<C: Clock> RateLimiter<C> {
    pub fn per_second(requests: u32, clock: C) -> Self {
        assert!(requests > 0, "rate must be positive");
        Self {
            min_interval: Duration::from_secs(1) / requests,
            last: Mutex::new(None),
            clock,
        }
    }

    /// Block until a request may be issued. Holding the slot lock through
    /// the sleep serializes concurrent acquirers.
    pub fn acquire(&self) {
        let mut last = self.last.lock().expect("limiter lock poisoned");
        let now = self.clock.monotonic();
        let ready = match *last {
            Some(prev) => prev + self.min_interval,
            None => now,
        };
        if ready > now {
            self.clock.sleep(ready - now);
        }
        *last = Some(self.clock.monotonic().max(ready));
    }
}

/// Transport wrapper that takes a limiter token before every request.
pub struct RateLimited<T: Transport, C: Clock = SystemClock> {
    inner: T,
    limiter: RateLimiter<C>,
}

impl<T: Transport, C: Clock> RateLimited<T, C> {
    pub fn new(inner: T, limiter: RateLimiter<C>) -> Self {
        Self { inner, limiter }
    }
}

impl<T: Transport, C: Clock> Transport for RateLimited<T, C> {
    fn get(&self, url: &str) -> Result<String, TransportError> {
        self.limiter.acquire();
        self.inner.get(url)
    }
}

/// Live HTTP transport. Compose with [`RateLimited`] for polite use:
/// [`ncbi_transport`] does exactly that.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self {
            agent: ureq::Agent::new_with_defaults(),
        }
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<String, TransportError> {
        let mut response = self
            .agent
            .get(url)
            .call()
            .map_err(|error| TransportError {
                url: url.to_string(),
                message: error.to_string(),
            })?;
        response
            .body_mut()
            .read_to_string()
            .map_err(|error| TransportError {
                url: url.to_string(),
                message: format!("reading body: {error}"),
            })
    }
}

/// The production stack: HTTP behind a limiter sized by key presence.
pub fn ncbi_transport(has_api_key: bool) -> RateLimited<HttpTransport> {
    RateLimited::new(HttpTransport::default(), RateLimiter::for_ncbi(has_api_key))
}

/// Replays recorded URL → body pairs; requests are logged for assertions.
#[derive(Default)]
pub struct FixtureTransport {
    responses: std::collections::BTreeMap<String, String>,
    requests: Mutex<Vec<String>>,
}

impl FixtureTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, url: impl Into<String>, body: impl Into<String>) {
        self.responses.insert(url.into(), body.into());
    }

    pub fn requests(&self) -> Vec<String> {
        self.requests.lock().expect("request log poisoned").clone()
    }
}

impl Transport for FixtureTransport {
    fn get(&self, url: &str) -> Result<String, TransportError> {
        self.requests
            .lock()
            .expect("request log poisoned")
            .push(url.to_string());
        self.responses
            .get(url)
            .cloned()
            .ok_or_else(|| TransportError {
                url: url.to_string(),
                message: "no fixture recorded for this url".to_string(),
            })
    }
}

// ---------------------------------------------------------------------------
// URL construction
// ---------------------------------------------------------------------------

fn percent_encode(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for byte in raw.bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(byte as char)
            }
            _ => out.push_str(&format!("%{byte:02X}")),
        }
    }
    out
}

/// Search URL for one page; exposed so fixtures can key exact URLs.
pub fn esearch_url(query: &EntrezQuery, retstart: usize, api_key: Option<&str>) -> String {
    let mut url = format!(
        "{EUTILS_BASE}/esearch.fcgi?db={}&term={}&retmode=json&retstart={}&retmax={}&datetype=pdat&mindate={}&maxdate={}",
        percent_encode(&query.database),
        percent_encode(&query.term),
        retstart,
        query.page_size,
        percent_encode(&query.date_from.to_string()),
        percent_encode(&query.date_to.to_string()),
    );
    if let Some(key) = api_key {
        url.push_str("&api_key=");
        url.push_str(&percent_encode(key));
    }
    url
}

/// Fetch URL for one id batch; ids travel comma-joined, unencoded, as the
/// service expects.
pub fn efetch_url(database: &str, pmids: &[String], api_key: Option<&str>) -> String {
    let mut url = format!(
        "{EUTILS_BASE}/efetch.fcgi?db={}&id={}&retmode=xml",
        percent_encode(database),
        pmids.join(","),
    );
    if let Some(key) = api_key {
        url.push_str("&api_key=");
        url.push_str(&percent_encode(key));
    }
    url
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

/// Page through a search exhaustively (or to `cap`), de-duplicating ids
/// while preserving first-seen order. Service-reported errors surface
/// verbatim.
pub fn search_ids(
    query: &EntrezQuery,
    transport: &dyn Transport,
    api_key: Option<&str>,
    cap: Option<usize>,
) -> Result<Vec<String>, PubmedError> {
    let mut ids: Vec<String> = Vec::new();
    let mut seen: std::collections::HashSet<String> = std::collections::HashSet::new();
    let mut retstart = 0usize;
    let mut fetched = 0usize;
    loop {
        let url = esearch_url(query, retstart, api_key);
        let body = transport.get(&url)?;
        let payload: Value =
            serde_json::from_str(&body).map_err(|error| PubmedError::Payload {
                reason: format!("not JSON: {error}"),
            })?;
        if let Some(error) = payload.get("error") {
            return Err(PubmedError::Service {
                payload: error.to_string(),
            });
        }
        let result = payload
            .get("esearchresult")
            .ok_or_else(|| PubmedError::Payload {
                reason: "missing esearchresult".to_string(),
            })?;
        if let Some(error) = result.get("ERROR") {
            return Err(PubmedError::Service {
                payload: error.to_string(),
            });
        }
        let count: usize = result
            .get("count")
            .and_then(Value::as_str)
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| PubmedError::Payload {
                reason: "missing or non-numeric count".to_string(),
            })?;
        let page: Vec<String> = result
            .get("idlist")
            .and_then(Value::as_array)
            .map(|list| {
                list.iter()
                    .filter_map(Value::as_str)
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default();
        let page_len = page.len();
        fetched += page_len;
        for id in page {
            if seen.insert(id.clone()) {
                ids.push(id);
            }
        }
        retstart += query.page_size;
        let exhausted = page_len == 0 || retstart >= count;
        let capped = cap.is_some_and(|c| fetched >= c);
        if exhausted || capped {
            break;
        }
    }
    if let Some(cap) = cap {
        ids.truncate(cap);
    }
    Ok(ids)
}

// ---------------------------------------------------------------------------
// Fetch
// ---------------------------------------------------------------------------

/// Fetch MeSH descriptor sets for ids, batched by `query.page_size`-sized
/// requests. Articles without MeSH indexing come back with empty
/// descriptor lists; ids absent from the response are an error naming
/// them.
pub fn fetch_mesh(
    pmids: &[String],
    database: &str,
    page_size: usize,
    transport: &dyn Transport,
    api_key: Option<&str>,
) -> Result<Vec<ArticleMeta>, PubmedError> {
    if pmids.is_empty() {
        return Err(PubmedError::EmptyRequest);
    }
    let page_size = page_size.max(1);
    let mut metas = Vec::with_capacity(pmids.len());
    for batch in pmids.chunks(page_size) {
        let url = efetch_url(database, batch, api_key);
        let body = transport.get(&url)?;
        metas.extend(parse_article_set(&body)?);
    }
    let returned: std::collections::HashSet<&str> =
        metas.iter().map(|m| m.pmid.as_str()).collect();
    let missing: Vec<String> = pmids
        .iter()
        .filter(|id| !returned.contains(id.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(PubmedError::MissingArticles { pmids: missing });
    }
    Ok(metas)
}

/// Parse an article-set XML document into metadata entries.
///
/// Elements are matched by path suffix under each article, which keeps
/// the citation's own identifier distinct from identifiers nested in
/// comment/correction blocks.
pub fn parse_article_set(xml: &str) -> Result<Vec<ArticleMeta>, PubmedError> {
    use quick_xml::events::Event;
    let mut reader = quick_xml::Reader::from_str(xml);
    reader.config_mut().trim_text(true);

    let mut articles = Vec::new();
    let mut path: Vec<String> = Vec::new();
    let mut current: Option<ArticleMeta> = None;

    loop {
        match reader
            .read_event()
            .map_err(|error| PubmedError::Xml(error.to_string()))?
        {
            Event::Start(start) => {
                let name = String::from_utf8_lossy(start.local_name().as_ref()).into_owned();
                if name == "PubmedArticle" {
                    current = Some(ArticleMeta {
                        pmid: String::new(),
                        mesh_descriptors: Vec::new(),
                        year: 0,
                    });
                }
                path.push(name);
            }
            Event::End(_) => {
                if path.pop().as_deref() == Some("PubmedArticle") {
                    let article = current.take().expect("article open");
                    if article.pmid.is_empty() {
                        return Err(PubmedError::Xml(
                            "article without a citation identifier".to_string(),
                        ));
                    }
                    articles.push(article);
                }
            }
            Event::Text(text) => {
                let Some(article) = current.as_mut() else {
                    continue;
                };
                let ends_with = |suffix: &[&str]| {
                    path.len() >= suffix.len()
                        && path[path.len() - suffix.len()..]
                            .iter()
                            .zip(suffix)
                            .all(|(a, b)| a == b)
                };
                let value = text
                    .unescape()
                    .map_err(|error| PubmedError::Xml(error.to_string()))?;
                if ends_with(&["PubmedArticle", "MedlineCitation", "PMID"]) {
                    article.pmid = value.into_owned();
                } else if ends_with(&["MeshHeading", "DescriptorName"]) {
                    article.mesh_descriptors.push(value.into_owned());
                } else if ends_with(&["PubDate", "Year"]) && article.year == 0 {
                    article.year = value.trim().parse().unwrap_or(0);
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(articles)
}

// ---------------------------------------------------------------------------
// Mapping and counting
// ---------------------------------------------------------------------------

/// Map descriptor strings onto the canonical categories by exact name;
/// anything else — qualifiers, chemicals, broader headings — is ignored.
pub fn to_biology_labelset(meta: &ArticleMeta) -> LabelSet {
    parse_labels(&meta.mesh_descriptors).0
}

/// Accumulate per-category label counts over a set of articles.
pub fn build_reference_counts<'a, I>(metas: I) -> CountVector
where
    I: IntoIterator<Item = &'a ArticleMeta>,
{
    counts_from_labelsets(metas.into_iter().map(to_biology_labelset))
}

// ---------------------------------------------------------------------------
// Snapshot
// ---------------------------------------------------------------------------

/// Parse a snapshot: 21 lines of `category<TAB>count`, every category
/// exactly once, any order.
pub fn parse_snapshot(text: &str) -> Result<CountVector, PubmedError> {
    let bad = |reason: String| PubmedError::Snapshot { reason };
    let mut counts = [None::<u64>; CATEGORY_COUNT];
    for (number, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let (name, count) = line
            .split_once('\t')
            .ok_or_else(|| bad(format!("line {}: no tab separator", number + 1)))?;
        let category = crate::taxonomy::category_by_name(name)
            .ok_or_else(|| bad(format!("line {}: unknown category {name:?}", number + 1)))?;
        let value: u64 = count
            .trim()
            .parse()
            .map_err(|_| bad(format!("line {}: bad count {count:?}", number + 1)))?;
        if counts[category.index].replace(value).is_some() {
            return Err(bad(format!("line {}: duplicate category {name:?}", number + 1)));
        }
    }
    let mut vector = [0u64; CATEGORY_COUNT];
    for (index, slot) in counts.iter().enumerate() {
        vector[index] = slot.ok_or_else(|| {
            bad(format!(
                "missing category {:?}",
                canonical_categories()[index].name
            ))
        })?;
    }
    Ok(CountVector::new(vector))
}

/// Serialize counts in canonical category order; inverse of
/// [`parse_snapshot`].
pub fn write_snapshot(counts: &CountVector) -> String {
    let mut out = String::new();
    for category in canonical_categories() {
        out.push_str(category.name);
        out.push('\t');
        out.push_str(&counts.get(category.index).to_string());
        out.push('\n');
    }
    out
}

/// The checked-in reference counts the calibration pipeline targets.
pub fn reference_counts() -> &'static CountVector {
    static COUNTS: OnceLock<CountVector> = OnceLock::new();
    COUNTS.get_or_init(|| {
        parse_snapshot(include_str!("../assets/reference_counts.tsv"))
            .expect("shipped snapshot is well-formed")
    })
}
