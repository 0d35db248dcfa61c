//! Wikipedia title search and lead-section retrieval.
//!
//! [`MediaWikiClient`] talks to the MediaWiki Action API and keeps every
//! answer, including empty searches and missing pages, in a content-addressed
//! cache directory:
//!
//! ```text
//! <cache>/wiki/search/<aa>/<sha256(normalized query)>.json
//! <cache>/wiki/summary/<aa>/<sha256(normalized title)>.json
//! ```
//!
//! [`FixtureWiki`] serves a frozen snapshot from a JSON file and never touches
//! the network.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::graph::normalize_text;
use crate::store::{atomic_write, content_path};
use crate::transport::Transport;

pub const DEFAULT_ENDPOINT: &str = "https://en.wikipedia.org/w/api.php";

/// Search ranking profile sent with every query and recorded in cache entries.
pub const SEARCH_PROFILE: &str = "engine_autoselect";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarySource {
    Live,
    Cache,
    Fixture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArticleSummary {
    pub title: String,
    pub summary: String,
    pub fetched_at: DateTime<Utc>,
    pub source: SummarySource,
}

pub trait WikiSource: Send + Sync {
    /// Most relevant article title for `query`, or `None` when nothing is found.
    fn search_title(&self, query: &str) -> Result<Option<String>>;

    fn get_summary(&self, title: &str) -> Result<ArticleSummary>;

    fn kind(&self) -> &'static str;
}

/// Text before the first section heading of a plain-text extract.
pub fn lead_section(extract: &str) -> &str {
    let mut offset = 0;
    for line in extract.split_inclusive('\n') {
        let t = line.trim();
        if t.len() >= 4 && t.starts_with("==") && t.ends_with("==") {
            return extract[..offset].trim();
        }
        offset += line.len();
    }
    extract.trim()
}

fn require_query(query: &str) -> Result<String> {
    let key = normalize_text(query);
    if key.is_empty() {
        return Err(Error::Precondition("search query must be non-empty".into()));
    }
    Ok(key)
}

#[derive(Debug, Deserialize)]
struct FixtureFile {
    #[serde(default = "epoch")]
    snapshot: DateTime<Utc>,
    #[serde(default)]
    search: HashMap<String, Option<String>>,
    #[serde(default)]
    articles: HashMap<String, String>,
}

fn epoch() -> DateTime<Utc> {
    DateTime::<Utc>::UNIX_EPOCH
}

/// A frozen wiki snapshot.
///
/// Searches use the recorded table. Unrecorded queries resolve to an article
/// whose title matches the query, or to nothing; in strict mode they are an
/// error instead.
#[derive(Clone, Debug)]
pub struct FixtureWiki {
    snapshot: DateTime<Utc>,
    search: HashMap<String, Option<String>>,
    articles: HashMap<String, (String, String)>,
    strict: bool,
}

impl FixtureWiki {
    pub fn load(path: &Path) -> Result<Self> {
        let file: FixtureFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        let mut wiki = FixtureWiki {
            snapshot: file.snapshot,
            search: HashMap::new(),
            articles: HashMap::new(),
            strict: false,
        };
        for (q, t) in file.search {
            wiki.add_search(&q, t.as_deref());
        }
        for (title, text) in file.articles {
            wiki.add_article(&title, &text);
        }
        Ok(wiki)
    }

    pub fn new() -> Self {
        FixtureWiki {
            snapshot: epoch(),
            search: HashMap::new(),
            articles: HashMap::new(),
            strict: false,
        }
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn add_search(&mut self, query: &str, title: Option<&str>) {
        self.search.insert(normalize_text(query), title.map(str::to_owned));
    }

    pub fn add_article(&mut self, title: &str, text: &str) {
        self.articles
            .insert(normalize_text(title), (title.to_owned(), text.to_owned()));
    }
}

impl Default for FixtureWiki {
    fn default() -> Self {
        Self::new()
    }
}

impl WikiSource for FixtureWiki {
    fn search_title(&self, query: &str) -> Result<Option<String>> {
        let key = require_query(query)?;
        if let Some(hit) = self.search.get(&key) {
            return Ok(hit.clone());
        }
        if self.strict {
            return Err(Error::MissingFixture {
                kind: "search",
                key: query.to_owned(),
            });
        }
        Ok(self.articles.get(&key).map(|(title, _)| title.clone()))
    }

    fn get_summary(&self, title: &str) -> Result<ArticleSummary> {
        let (title, text) = self
            .articles
            .get(&normalize_text(title))
            .ok_or_else(|| Error::NotFound(title.to_owned()))?;
        Ok(ArticleSummary {
            title: title.clone(),
            summary: lead_section(text).to_owned(),
            fetched_at: self.snapshot,
            source: SummarySource::Fixture,
        })
    }

    fn kind(&self) -> &'static str {
        "fixture"
    }
}

#[derive(Clone, Debug)]
pub struct MediaWikiConfig {
    pub endpoint: String,
    pub cache_dir: Option<PathBuf>,
}

impl Default for MediaWikiConfig {
    fn default() -> Self {
        MediaWikiConfig {
            endpoint: DEFAULT_ENDPOINT.to_owned(),
            cache_dir: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    kind: String,
    query: String,
    endpoint: String,
    search_profile: String,
    fetched_at: DateTime<Utc>,
    /// Search: the title or null. Summary: `{"title", "summary"}` or null for a missing page.
    result: Value,
}

pub struct MediaWikiClient {
    transport: Arc<dyn Transport>,
    config: MediaWikiConfig,
    in_flight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl MediaWikiClient {
    pub fn new(transport: Arc<dyn Transport>, config: MediaWikiConfig) -> Self {
        MediaWikiClient {
            transport,
            config,
            in_flight: Mutex::new(HashMap::new()),
        }
    }

    fn cache_path(&self, kind: &str, key: &str) -> Option<PathBuf> {
        self.config
            .cache_dir
            .as_ref()
            .map(|dir| content_path(&dir.join("wiki"), kind, key))
    }

    fn read_cache(&self, kind: &str, key: &str) -> Option<CacheEntry> {
        let path = self.cache_path(kind, key)?;
        let bytes = fs::read(&path).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(entry) => Some(entry),
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {}: {e}", path.display());
                None
            }
        }
    }

    /// Look up `key` in the cache, or run `fetch` once even under concurrent callers.
    fn cached(&self, kind: &str, key: &str, fetch: impl FnOnce() -> Result<Value>) -> Result<(CacheEntry, bool)> {
        if let Some(hit) = self.read_cache(kind, key) {
            return Ok((hit, true));
        }
        let slot = {
            let mut map = self.in_flight.lock().expect("in-flight map poisoned");
            map.entry(format!("{kind}\0{key}")).or_default().clone()
        };
        let _guard = slot.lock().expect("in-flight slot poisoned");
        if let Some(hit) = self.read_cache(kind, key) {
            return Ok((hit, true));
        }
        let entry = CacheEntry {
            kind: kind.to_owned(),
            query: key.to_owned(),
            endpoint: self.config.endpoint.clone(),
            search_profile: SEARCH_PROFILE.to_owned(),
            fetched_at: Utc::now(),
            result: fetch()?,
        };
        if let Some(path) = self.cache_path(kind, key) {
            atomic_write(&path, serde_json::to_string_pretty(&entry)?.as_bytes())?;
        }
        Ok((entry, false))
    }

    fn api(&self, params: &[(&str, &str)]) -> Result<Value> {
        let body = self.transport.get(&self.config.endpoint, params)?;
        let value: Value =
            serde_json::from_str(&body).map_err(|e| Error::Protocol(format!("MediaWiki response: {e}")))?;
        if let Some(err) = value.get("error") {
            return Err(Error::Protocol(format!("MediaWiki error: {err}")));
        }
        Ok(value)
    }
}

impl WikiSource for MediaWikiClient {
    fn search_title(&self, query: &str) -> Result<Option<String>> {
        let key = require_query(query)?;
        let (entry, _) = self.cached("search", &key, || {
            let resp = self.api(&[
                ("action", "query"),
                ("list", "search"),
                ("srsearch", query.trim()),
                ("srlimit", "1"),
                ("srprop", ""),
                ("srqiprofile", SEARCH_PROFILE),
                ("format", "json"),
                ("formatversion", "2"),
            ])?;
            let hits = resp
                .pointer("/query/search")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Protocol("search response lacks query.search".into()))?;
            Ok(hits
                .first()
                .and_then(|h| h.get("title"))
                .cloned()
                .unwrap_or(Value::Null))
        })?;
        Ok(entry.result.as_str().map(str::to_owned))
    }

    fn get_summary(&self, title: &str) -> Result<ArticleSummary> {
        let key = require_query(title)?;
        let (entry, hit) = self.cached("summary", &key, || {
            let resp = self.api(&[
                ("action", "query"),
                ("prop", "extracts"),
                ("exintro", "1"),
                ("explaintext", "1"),
                ("redirects", "1"),
                ("titles", title.trim()),
                ("format", "json"),
                ("formatversion", "2"),
            ])?;
            let page = resp
                .pointer("/query/pages/0")
                .ok_or_else(|| Error::Protocol("extract response lacks query.pages".into()))?;
            if page.get("missing").is_some() || page.get("invalid").is_some() {
                return Ok(Value::Null);
            }
            let resolved = page.get("title").and_then(Value::as_str).unwrap_or(title);
            let extract = page.get("extract").and_then(Value::as_str).unwrap_or("");
            Ok(serde_json::json!({ "title": resolved, "summary": lead_section(extract) }))
        })?;
        let (Some(t), Some(s)) = (
            entry.result.get("title").and_then(Value::as_str),
            entry.result.get("summary").and_then(Value::as_str),
        ) else {
            return Err(Error::NotFound(title.to_owned()));
        };
        Ok(ArticleSummary {
            title: t.to_owned(),
            summary: s.to_owned(),
            fetched_at: entry.fetched_at,
            source: if hit { SummarySource::Cache } else { SummarySource::Live },
        })
    }

    fn kind(&self) -> &'static str {
        "mediawiki"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::OfflineTransport;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn fixture() -> FixtureWiki {
        let mut w = FixtureWiki::new();
        w.add_search("Barack Obama", Some("Barack Obama"));
        w.add_search("starry night", Some("The Starry Night"));
        w.add_search("zqxv-nonexistent-entity-123", None);
        w.add_article("Hawaii", "Hawaii is a state of the United States.\n\n== History ==\nPolynesians.");
        w.add_article("The Starry Night", "The Starry Night is an oil-on-canvas painting.");
        w
    }

    #[test]
    fn fixture_search() {
        let w = fixture();
        assert_eq!(w.search_title("Barack Obama").unwrap().as_deref(), Some("Barack Obama"));
        assert_eq!(w.search_title("Starry  Night").unwrap().as_deref(), Some("The Starry Night"));
        assert_eq!(w.search_title("zqxv-nonexistent-entity-123").unwrap(), None);
        assert_eq!(w.search_title("hawaii").unwrap().as_deref(), Some("Hawaii"));
        assert_eq!(w.search_title("unknown").unwrap(), None);
        assert!(w.search_title(" ").is_err());
        let strict = fixture().strict(true);
        assert!(matches!(strict.search_title("unknown"), Err(Error::MissingFixture { .. })));
    }

    #[test]
    fn fixture_summary_is_lead_only() {
        let w = fixture();
        let s = w.get_summary("Hawaii").unwrap();
        assert_eq!(s.summary, "Hawaii is a state of the United States.");
        assert_eq!(s.source, SummarySource::Fixture);
        assert!(matches!(w.get_summary("Atlantis"), Err(Error::NotFound(_))));
    }

    #[test]
    fn lead_section_cuts_at_first_heading() {
        assert_eq!(lead_section("A.\nB.\n== X ==\nC"), "A.\nB.");
        assert_eq!(lead_section("no sections"), "no sections");
        assert_eq!(lead_section("=== Deep ===\nbody"), "");
    }

    /// Fake MediaWiki endpoint counting requests.
    struct FakeApi {
        calls: AtomicUsize,
    }

    impl Transport for FakeApi {
        fn get(&self, _url: &str, q: &[(&str, &str)]) -> Result<String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(10));
            let param = |k: &str| q.iter().find(|(n, _)| *n == k).map(|(_, v)| *v);
            if let Some(s) = param("srsearch") {
                let hits = if s.starts_with("zqxv") {
                    serde_json::json!([])
                } else {
                    serde_json::json!([{ "title": "Barack Obama" }])
                };
                return Ok(serde_json::json!({ "query": { "search": hits } }).to_string());
            }
            let title = param("titles").unwrap();
            if title == "Nowhere" {
                return Ok(r#"{"query":{"pages":[{"title":"Nowhere","missing":true}]}}"#.into());
            }
            Ok(serde_json::json!({ "query": { "pages": [{
                "title": title,
                "extract": "Hawaii is an island state.\n\n== Etymology ==\nMore."
            }]}})
            .to_string())
        }

        fn post_json(&self, _url: &str, _body: &Value) -> Result<String> {
            unreachable!()
        }
    }

    fn live(dir: &Path, transport: Arc<dyn Transport>) -> MediaWikiClient {
        MediaWikiClient::new(
            transport,
            MediaWikiConfig {
                cache_dir: Some(dir.to_path_buf()),
                ..Default::default()
            },
        )
    }

    #[test]
    fn live_fetch_then_cache_hit() {
        let dir = tempfile::tempdir().unwrap();
        let api = Arc::new(FakeApi { calls: AtomicUsize::new(0) });
        let client = live(dir.path(), api.clone());
        let first = client.get_summary("Hawaii").unwrap();
        assert_eq!(first.source, SummarySource::Live);
        assert_eq!(first.summary, "Hawaii is an island state.");
        let second = client.get_summary("hawaii").unwrap();
        assert_eq!(second.source, SummarySource::Cache);
        assert_eq!(first.summary.as_bytes(), second.summary.as_bytes());
        assert_eq!(api.calls.load(Ordering::SeqCst), 1);

        // a cold client over the warm cache never reaches the network
        let offline = Arc::new(OfflineTransport::new());
        let cold = live(dir.path(), offline.clone());
        assert_eq!(cold.get_summary("Hawaii").unwrap().summary, first.summary);
        assert_eq!(offline.attempts(), 0);
        assert!(cold.get_summary("Oahu").unwrap_err().is_transport());
        assert_eq!(offline.attempts(), 1);
    }

    #[test]
    fn negative_results_are_cached() {
        let dir = tempfile::tempdir().unwrap();
        let api = Arc::new(FakeApi { calls: AtomicUsize::new(0) });
        let client = live(dir.path(), api.clone());
        assert_eq!(client.search_title("zqxv-nonexistent-entity-123").unwrap(), None);
        assert_eq!(client.search_title("zqxv-nonexistent-entity-123").unwrap(), None);
        assert!(matches!(client.get_summary("Nowhere"), Err(Error::NotFound(_))));
        assert!(matches!(client.get_summary("Nowhere"), Err(Error::NotFound(_))));
        assert_eq!(api.calls.load(Ordering::SeqCst), 2);
        assert_eq!(client.search_title("Obama").unwrap().as_deref(), Some("Barack Obama"));
    }

    #[test]
    fn concurrent_duplicate_fetches_coalesce() {
        let dir = tempfile::tempdir().unwrap();
        let api = Arc::new(FakeApi { calls: AtomicUsize::new(0) });
        let client = live(dir.path(), api.clone());
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| client.search_title("Barack Obama").unwrap());
            }
        });
        assert_eq!(api.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn cache_records_search_profile() {
        let dir = tempfile::tempdir().unwrap();
        let client = live(dir.path(), Arc::new(FakeApi { calls: AtomicUsize::new(0) }));
        client.search_title("Barack Obama").unwrap();
        let path = content_path(&dir.path().join("wiki"), "search", "barack obama");
        let entry: CacheEntry = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
        assert_eq!(entry.search_profile, SEARCH_PROFILE);
        assert_eq!(entry.result, Value::String("Barack Obama".into()));
    }
}
