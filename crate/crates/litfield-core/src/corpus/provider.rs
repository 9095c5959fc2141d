//! Payload providers: an offline fixture directory and a live HTTPS client.
//!
//! Both serve raw JSON payloads in the schema of `RawPayload`; validation is
//! the caller's job. The fixture provider is fully deterministic (ids are
//! served in lexicographic order), which the ingestion determinism contract
//! relies on.

use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("payload not found: {0}")]
    NotFound(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("provider configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// What to fetch.
#[derive(Debug, Clone)]
pub enum Query {
    /// Everything the provider has, in provider order.
    All,
    /// Specific ids, in the given order.
    Ids(Vec<String>),
    /// A free-text search forwarded to the provider.
    Search(String),
}

impl Query {
    pub fn describe(&self) -> String {
        match self {
            Query::All => "all".into(),
            Query::Ids(ids) => format!("ids({})", ids.len()),
            Query::Search(q) => format!("search({q})"),
        }
    }
}

/// One page of raw payloads.
#[derive(Debug, Clone)]
pub struct Page {
    pub payloads: Vec<String>,
    /// Offset of the next page, if any.
    pub next: Option<usize>,
}

pub trait Provider: Sync {
    fn id(&self) -> &str;

    /// Fetch one page starting at `offset` (payload index, not page index).
    fn fetch_page(&self, query: &Query, offset: usize, page_size: usize)
        -> Result<Page, ProviderError>;
}

/// Fetch every page of a query. `page_size` must be at least 1; pages are
/// requested sequentially so provider ordering is preserved, and the result
/// concatenates pages in order.
pub fn fetch_batch<P: Provider + ?Sized>(
    provider: &P,
    query: &Query,
    page_size: usize,
) -> Result<Vec<String>, ProviderError> {
    if page_size == 0 {
        return Err(ProviderError::Config("page_size must be >= 1".into()));
    }
    let mut all = Vec::new();
    let mut offset = Some(0usize);
    while let Some(at) = offset {
        let page = provider.fetch_page(query, at, page_size)?;
        all.extend(page.payloads);
        offset = page.next;
    }
    Ok(all)
}

/// Like [`fetch_batch`], with up to `max_inflight` pages requested
/// concurrently when the page offsets are known upfront (id-addressed
/// queries). Cursor-style queries fall back to sequential paging. Results
/// are assembled in page order, so the output is identical either way.
pub fn fetch_batch_concurrent<P: Provider + ?Sized>(
    provider: &P,
    query: &Query,
    page_size: usize,
    max_inflight: usize,
) -> Result<Vec<String>, ProviderError> {
    if page_size == 0 {
        return Err(ProviderError::Config("page_size must be >= 1".into()));
    }
    let Query::Ids(ids) = query else {
        return fetch_batch(provider, query, page_size);
    };
    if max_inflight <= 1 || ids.len() <= page_size {
        return fetch_batch(provider, query, page_size);
    }
    let offsets: Vec<usize> = (0..ids.len()).step_by(page_size).collect();
    let mut pages: Vec<Option<Vec<String>>> = vec![None; offsets.len()];
    for window in offsets.chunks(max_inflight).zip(pages.chunks_mut(max_inflight)) {
        let (chunk, slots) = window;
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&at| scope.spawn(move || provider.fetch_page(query, at, page_size)))
                .collect();
            for (handle, slot) in handles.into_iter().zip(slots.iter_mut()) {
                let page = handle.join().expect("fetch thread panicked")?;
                *slot = Some(page.payloads);
            }
            Ok::<(), ProviderError>(())
        })?;
    }
    Ok(pages.into_iter().flatten().flatten().collect())
}

/// Serves `<id>.json` files from a directory, mirroring the live API schema.
pub struct FixtureProvider {
    dir: PathBuf,
    ids: Vec<String>,
}

impl FixtureProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, ProviderError> {
        let dir = dir.into();
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(FixtureProvider { dir, ids })
    }

    pub fn available_ids(&self) -> &[String] {
        &self.ids
    }

    fn read(&self, id: &str) -> Result<String, ProviderError> {
        let path = self.dir.join(format!("{id}.json"));
        if !path.is_file() {
            return Err(ProviderError::NotFound(id.to_string()));
        }
        Ok(std::fs::read_to_string(path)?)
    }
}

impl Provider for FixtureProvider {
    fn id(&self) -> &str {
        "fixture"
    }

    fn fetch_page(
        &self,
        query: &Query,
        offset: usize,
        page_size: usize,
    ) -> Result<Page, ProviderError> {
        let ordered: Vec<&String> = match query {
            Query::All | Query::Search(_) => self.ids.iter().collect(),
            Query::Ids(ids) => {
                // Fail fast on unknown ids regardless of pagination.
                if let Some(missing) = ids.iter().find(|id| !self.ids.contains(id)) {
                    return Err(ProviderError::NotFound(missing.to_string()));
                }
                ids.iter().collect()
            }
        };
        let end = (offset + page_size).min(ordered.len());
        let payloads = ordered[offset.min(end)..end]
            .iter()
            .map(|id| self.read(id))
            .collect::<Result<Vec<_>, _>>()?;
        let next = (end < ordered.len()).then_some(end);
        Ok(Page { payloads, next })
    }
}

/// Serves payloads held in memory, in the order given. Used to replay an
/// already-ingested corpus through the expansion machinery and in tests.
pub struct MemoryProvider {
    pub payloads: Vec<(String, String)>,
}

impl Provider for MemoryProvider {
    fn id(&self) -> &str {
        "memory"
    }

    fn fetch_page(
        &self,
        query: &Query,
        offset: usize,
        page_size: usize,
    ) -> Result<Page, ProviderError> {
        let selected: Vec<&String> = match query {
            Query::All | Query::Search(_) => self.payloads.iter().map(|(_, p)| p).collect(),
            Query::Ids(ids) => {
                let mut out = Vec::with_capacity(ids.len());
                for id in ids {
                    match self.payloads.iter().find(|(pid, _)| pid == id) {
                        Some((_, p)) => out.push(p),
                        None => return Err(ProviderError::NotFound(id.clone())),
                    }
                }
                out
            }
        };
        let end = (offset + page_size).min(selected.len());
        let payloads = selected[offset.min(end)..end].iter().map(|p| (*p).clone()).collect();
        let next = (end < selected.len()).then_some(end);
        Ok(Page { payloads, next })
    }
}

/// Settings for the live provider.
#[derive(Debug, Clone)]
pub struct ProviderConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub requests_per_second: f64,
    /// Maximum retries after a 429 or transport failure.
    pub retry_cap: u32,
    /// Initial backoff; doubles per retry.
    pub backoff: Duration,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            base_url: String::new(),
            api_key: None,
            requests_per_second: 1.0,
            retry_cap: 5,
            backoff: Duration::from_millis(200),
        }
    }
}

/// HTTPS JSON API client with rate limiting and retry/backoff.
///
/// Endpoints: `GET {base}/paper/{id}` for one payload and
/// `GET {base}/paper/search?query=..&offset=..&limit=..` returning
/// `{"data": [...], "next": <offset>}`. The API key, when present, is sent
/// as the `x-api-key` header.
pub struct LiveProvider {
    config: ProviderConfig,
    client: reqwest::blocking::Client,
    last_request: Mutex<Option<Instant>>,
}

impl LiveProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        if config.base_url.is_empty() {
            return Err(ProviderError::Config("base_url is empty".into()));
        }
        if config.requests_per_second <= 0.0 {
            return Err(ProviderError::Config("requests_per_second must be > 0".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(LiveProvider { config, client, last_request: Mutex::new(None) })
    }

    /// Block until the configured request interval has elapsed.
    fn throttle(&self) {
        let interval = Duration::from_secs_f64(1.0 / self.config.requests_per_second);
        let mut last = self.last_request.lock().expect("rate limiter poisoned");
        if let Some(at) = *last {
            let elapsed = at.elapsed();
            if elapsed < interval {
                std::thread::sleep(interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn get_with_retry(&self, url: &str) -> Result<String, ProviderError> {
        let mut backoff = self.config.backoff;
        let mut attempts = 0u32;
        loop {
            self.throttle();
            attempts += 1;
            let mut request = self.client.get(url);
            if let Some(key) = &self.config.api_key {
                request = request.header("x-api-key", key);
            }
            let outcome = request.send();
            match outcome {
                Ok(resp) if resp.status().as_u16() == 429 => {
                    if attempts > self.config.retry_cap {
                        return Err(ProviderError::RateLimited { attempts });
                    }
                }
                Ok(resp) if resp.status().as_u16() == 404 => {
                    return Err(ProviderError::NotFound(url.to_string()));
                }
                Ok(resp) if resp.status().is_success() => {
                    return resp.text().map_err(|e| ProviderError::Transport(e.to_string()));
                }
                Ok(resp) => {
                    return Err(ProviderError::Transport(format!(
                        "unexpected status {} for {url}",
                        resp.status()
                    )));
                }
                Err(e) => {
                    if attempts > self.config.retry_cap {
                        return Err(ProviderError::Transport(e.to_string()));
                    }
                }
            }
            std::thread::sleep(backoff);
            backoff = backoff.saturating_mul(2);
        }
    }
}

#[derive(serde::Deserialize)]
struct SearchEnvelope {
    data: Vec<serde_json::Value>,
    #[serde(default)]
    next: Option<usize>,
}

impl Provider for LiveProvider {
    fn id(&self) -> &str {
        "live"
    }

    fn fetch_page(
        &self,
        query: &Query,
        offset: usize,
        page_size: usize,
    ) -> Result<Page, ProviderError> {
        match query {
            Query::Ids(ids) => {
                let end = (offset + page_size).min(ids.len());
                let mut payloads = Vec::with_capacity(end.saturating_sub(offset));
                for id in &ids[offset.min(end)..end] {
                    let url = format!("{}/paper/{}", self.config.base_url, id);
                    payloads.push(self.get_with_retry(&url)?);
                }
                let next = (end < ids.len()).then_some(end);
                Ok(Page { payloads, next })
            }
            Query::All | Query::Search(_) => {
                let term = match query {
                    Query::Search(t) => t.as_str(),
                    _ => "",
                };
                let url = format!(
                    "{}/paper/search?query={}&offset={}&limit={}",
                    self.config.base_url,
                    urlencode(term),
                    offset,
                    page_size
                );
                let body = self.get_with_retry(&url)?;
                let envelope: SearchEnvelope = serde_json::from_str(&body)
                    .map_err(|e| ProviderError::Transport(format!("bad search envelope: {e}")))?;
                let payloads = envelope
                    .data
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>();
                Ok(Page { payloads, next: envelope.next })
            }
        }
    }
}

fn urlencode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(b as char)
            }
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}
