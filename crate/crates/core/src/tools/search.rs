//! Cached web search.
//!
//! Lookup order: exact hit on the normalized query, then the most similar
//! cached entry above the fuzzy threshold, then the backend. Concurrent misses
//! on the same normalized query share one backend call.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::cache::{CacheEntry, CacheError, CacheStore, MemoryStore};
use super::text::{normalize_query, similarity, similarity_upper_bound};
use super::ToolError;

pub const FUZZY_THRESHOLD: f64 = 0.9;
pub const DEFAULT_TOP_K: usize = 5;
pub const SEARCH_API_KEY_ENV: &str = "SEARCH_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DocSource {
    Title,
    KnowledgePanel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchDoc {
    pub source: DocSource,
    pub title: String,
    pub snippet: String,
}

impl SearchDoc {
    pub fn titled(title: impl Into<String>, snippet: impl Into<String>) -> Self {
        Self { source: DocSource::Title, title: title.into(), snippet: snippet.into() }
    }
}

/// Renders `Doc k: (Title: …) snippet` lines, one per document.
pub fn format_docs(docs: &[SearchDoc]) -> String {
    docs.iter()
        .enumerate()
        .map(|(i, d)| {
            let label = match d.source {
                DocSource::Title => "Title",
                DocSource::KnowledgePanel => "Knowledge Panel",
            };
            format!("Doc {}: ({}: {}) {}", i + 1, label, d.title, d.snippet)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub trait SearchBackend: Send + Sync {
    fn search(&self, query: &str, top_k: usize) -> Result<Vec<SearchDoc>, ToolError>;
}

impl<T: SearchBackend + ?Sized> SearchBackend for Arc<T> {
    fn search(&self, query: &str, top_k: usize) -> Result<Vec<SearchDoc>, ToolError> {
        (**self).search(query, top_k)
    }
}

/// JSON-over-HTTP search API: POST `{"q": …}`, key in `X-API-KEY`.
pub struct HttpSearchBackend {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpSearchBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { endpoint: endpoint.into(), api_key, agent }
    }

    /// Reads the API key from `SEARCH_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self::new(endpoint, std::env::var(SEARCH_API_KEY_ENV).ok(), timeout)
    }
}

/// Extracts documents from a search API reply: an optional knowledge panel,
/// then `organic` (or `results`) entries with `title` and `snippet`.
pub fn parse_search_reply(body: &Value, top_k: usize) -> Vec<SearchDoc> {
    let mut docs = Vec::new();
    if let Some(panel) = body.get("knowledgeGraph") {
        if let Some(title) = panel.get("title").and_then(Value::as_str) {
            let snippet = panel.get("description").and_then(Value::as_str).unwrap_or_default();
            docs.push(SearchDoc { source: DocSource::KnowledgePanel, title: title.into(), snippet: snippet.into() });
        }
    }
    let list = body.get("organic").or_else(|| body.get("results")).and_then(Value::as_array);
    for item in list.into_iter().flatten() {
        let title = item.get("title").and_then(Value::as_str).unwrap_or_default();
        let snippet = item.get("snippet").and_then(Value::as_str).unwrap_or_default();
        docs.push(SearchDoc::titled(title, snippet));
    }
    docs.truncate(top_k);
    docs
}

impl SearchBackend for HttpSearchBackend {
    fn search(&self, query: &str, top_k: usize) -> Result<Vec<SearchDoc>, ToolError> {
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("X-API-KEY", key);
        }
        let mut resp = req
            .send_json(serde_json::json!({ "q": query }))
            .map_err(|e| ToolError::Backend(format!("search request failed: {e}")))?;
        let body: Value =
            resp.body_mut().read_json().map_err(|e| ToolError::Backend(format!("search reply not JSON: {e}")))?;
        Ok(parse_search_reply(&body, top_k))
    }
}

/// Offline backend answering from a fixture table keyed by normalized query.
/// Unknown queries get a single placeholder document. Counts every call.
#[derive(Debug, Default)]
pub struct FixtureSearch {
    table: HashMap<String, Vec<SearchDoc>>,
    calls: AtomicUsize,
    fail: bool,
}

impl FixtureSearch {
    pub fn new() -> Self {
        Self::default()
    }

    /// A backend whose every call fails, as an unreachable service would.
    pub fn failing() -> Self {
        Self { fail: true, ..Self::default() }
    }

    pub fn with(mut self, query: &str, docs: Vec<SearchDoc>) -> Self {
        self.insert(query, docs);
        self
    }

    pub fn insert(&mut self, query: &str, docs: Vec<SearchDoc>) {
        self.table.insert(normalize_query(query), docs);
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl SearchBackend for FixtureSearch {
    fn search(&self, query: &str, top_k: usize) -> Result<Vec<SearchDoc>, ToolError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.fail {
            return Err(ToolError::Backend("connection refused".into()));
        }
        let mut docs =
            self.table.get(&normalize_query(query)).cloned().unwrap_or_else(|| {
                vec![SearchDoc::titled("No results", format!("Nothing relevant found for {query}."))]
            });
        docs.truncate(top_k);
        Ok(docs)
    }
}

#[derive(Debug, Default)]
pub struct SearchStats {
    pub exact_hits: AtomicUsize,
    pub fuzzy_hits: AtomicUsize,
    pub backend_calls: AtomicUsize,
    pub coalesced: AtomicUsize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsSnapshot {
    pub exact_hits: usize,
    pub fuzzy_hits: usize,
    pub backend_calls: usize,
    pub coalesced: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    Exact,
    Fuzzy,
    Backend,
}

type Shared = Result<String, String>;

#[derive(Default)]
struct InFlight {
    result: Mutex<Option<Shared>>,
    ready: Condvar,
}

pub struct SearchClient {
    backend: Box<dyn SearchBackend>,
    store: Arc<dyn CacheStore>,
    top_k: usize,
    threshold: f64,
    inflight: Mutex<HashMap<String, Arc<InFlight>>>,
    /// Fuzzy outcomes by key, tagged with the store size they were computed at.
    fuzzy_memo: Mutex<HashMap<String, (usize, Option<String>)>>,
    stats: SearchStats,
    last_stamp: AtomicU64,
}

impl SearchClient {
    pub fn new(backend: Box<dyn SearchBackend>, store: Arc<dyn CacheStore>) -> Self {
        Self {
            backend,
            store,
            top_k: DEFAULT_TOP_K,
            threshold: FUZZY_THRESHOLD,
            inflight: Mutex::new(HashMap::new()),
            fuzzy_memo: Mutex::new(HashMap::new()),
            stats: SearchStats::default(),
            last_stamp: AtomicU64::new(0),
        }
    }

    pub fn in_memory(backend: Box<dyn SearchBackend>) -> Self {
        Self::new(backend, Arc::new(MemoryStore::new()))
    }

    pub fn with_top_k(mut self, top_k: usize) -> Self {
        self.top_k = top_k.max(1);
        self
    }

    pub fn store(&self) -> &Arc<dyn CacheStore> {
        &self.store
    }

    /// Empties the store and the fuzzy memo. Counters are kept.
    pub fn reset(&self) -> Result<(), CacheError> {
        self.store.clear()?;
        self.fuzzy_memo.lock().expect("memo lock").clear();
        Ok(())
    }

    pub fn stats(&self) -> StatsSnapshot {
        StatsSnapshot {
            exact_hits: self.stats.exact_hits.load(Ordering::SeqCst),
            fuzzy_hits: self.stats.fuzzy_hits.load(Ordering::SeqCst),
            backend_calls: self.stats.backend_calls.load(Ordering::SeqCst),
            coalesced: self.stats.coalesced.load(Ordering::SeqCst),
        }
    }

    /// Strictly increasing wall-clock stamp so recency ties cannot occur.
    fn stamp(&self) -> u64 {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
        let mut prev = self.last_stamp.load(Ordering::SeqCst);
        loop {
            let next = now.max(prev + 1);
            match self.last_stamp.compare_exchange(prev, next, Ordering::SeqCst, Ordering::SeqCst) {
                Ok(_) => return next,
                Err(actual) => prev = actual,
            }
        }
    }

    fn exact(&self, key: &str) -> Option<String> {
        match self.store.get(key) {
            Ok(hit) => hit.map(|e| e.response),
            Err(e) => {
                log::warn!("cache read failed, bypassing: {e}");
                None
            }
        }
    }

    /// Best entry strictly above the threshold; ties go to the newest entry.
    fn fuzzy(&self, key: &str) -> Option<String> {
        let size = self.store.len().ok();
        if let Some(size) = size {
            if let Some((at, hit)) = self.fuzzy_memo.lock().expect("memo lock").get(key) {
                if *at == size {
                    return hit.clone();
                }
            }
        }
        let entries = match self.store.entries() {
            Ok(entries) => entries,
            Err(e) => {
                log::warn!("cache scan failed, bypassing: {e}");
                return None;
            }
        };
        let mut best: Option<(f64, CacheEntry)> = None;
        for e in entries {
            let bound = similarity_upper_bound(key, &e.normalized_query);
            if bound <= self.threshold || best.as_ref().is_some_and(|(r, _)| bound < *r) {
                continue;
            }
            let ratio = similarity(key, &e.normalized_query);
            if ratio <= self.threshold {
                continue;
            }
            let better = match &best {
                None => true,
                Some((r, b)) => ratio.total_cmp(r).then(e.created_at.cmp(&b.created_at)).is_gt(),
            };
            if better {
                best = Some((ratio, e));
            }
        }
        let hit = best.map(|(_, e)| e.response);
        if let Some(size) = size {
            self.fuzzy_memo.lock().expect("memo lock").insert(key.to_string(), (size, hit.clone()));
        }
        hit
    }

    /// Looks up `query` and reports which tier answered.
    pub fn lookup(&self, query: &str) -> Result<(String, Tier), ToolError> {
        let key = normalize_query(query);
        if let Some(hit) = self.exact(&key) {
            self.stats.exact_hits.fetch_add(1, Ordering::SeqCst);
            return Ok((hit, Tier::Exact));
        }
        if let Some(hit) = self.fuzzy(&key) {
            self.stats.fuzzy_hits.fetch_add(1, Ordering::SeqCst);
            return Ok((hit, Tier::Fuzzy));
        }

        let (slot, leader) = {
            let mut inflight = self.inflight.lock().expect("inflight lock");
            match inflight.get(&key) {
                Some(slot) => (slot.clone(), false),
                None => {
                    let slot = Arc::new(InFlight::default());
                    inflight.insert(key.clone(), slot.clone());
                    (slot, true)
                }
            }
        };

        if !leader {
            self.stats.coalesced.fetch_add(1, Ordering::SeqCst);
            let mut result = slot.result.lock().expect("slot lock");
            while result.is_none() {
                result = slot.ready.wait(result).expect("slot lock");
            }
            return result.clone().expect("filled").map(|r| (r, Tier::Backend)).map_err(ToolError::Backend);
        }

        // Another leader may have finished between our miss and registration.
        let outcome: Shared = match self.exact(&key) {
            Some(hit) => Ok(hit),
            None => {
                self.stats.backend_calls.fetch_add(1, Ordering::SeqCst);
                match self.backend.search(query, self.top_k) {
                    Ok(docs) => {
                        let response = format_docs(&docs);
                        let entry = CacheEntry::new(query, response.clone(), self.stamp());
                        if let Err(e) = self.store.put(entry) {
                            log::warn!("cache write failed, result not cached: {e}");
                        }
                        Ok(response)
                    }
                    Err(e) => Err(e.to_string()),
                }
            }
        };
        *slot.result.lock().expect("slot lock") = Some(outcome.clone());
        slot.ready.notify_all();
        self.inflight.lock().expect("inflight lock").remove(&key);
        outcome.map(|r| (r, Tier::Backend)).map_err(ToolError::Backend)
    }

    pub fn search(&self, query: &str) -> Result<String, ToolError> {
        self.lookup(query).map(|(r, _)| r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Slow {
        calls: AtomicUsize,
    }

    impl SearchBackend for Slow {
        fn search(&self, query: &str, _top_k: usize) -> Result<Vec<SearchDoc>, ToolError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(50));
            Ok(vec![SearchDoc::titled(query, "s")])
        }
    }

    #[test]
    fn repeat_query_is_cached() {
        let client = SearchClient::in_memory(Box::new(FixtureSearch::new()));
        let (first, tier) = client.lookup("who is x").unwrap();
        assert_eq!(tier, Tier::Backend);
        let (second, tier) = client.lookup("who is x").unwrap();
        assert_eq!(tier, Tier::Exact);
        assert_eq!(first, second);
        assert_eq!(client.stats().backend_calls, 1);
    }

    #[test]
    fn normalization_collision_hits_exact_tier() {
        let client = SearchClient::in_memory(Box::new(FixtureSearch::new()));
        client.search("current us president").unwrap();
        let (_, tier) = client.lookup("Current US  President").unwrap();
        assert_eq!(tier, Tier::Exact);
        assert_eq!(client.stats().fuzzy_hits, 0);
    }

    #[test]
    fn fuzzy_threshold_is_strict() {
        let client = SearchClient::in_memory(Box::new(FixtureSearch::new()));
        client.search("abcdefghijklmnopqrst").unwrap();
        // 19 of 20 characters shared: 0.95
        let (_, tier) = client.lookup("abcdefghijklmnopqrsX").unwrap();
        assert_eq!(tier, Tier::Fuzzy);

        client.search("abcdefghij").unwrap();
        // exactly 0.9 is not enough
        assert_eq!(similarity("abcdefghiX", "abcdefghij"), 0.9);
        let (_, tier) = client.lookup("abcdefghiX").unwrap();
        assert_eq!(tier, Tier::Backend);
    }

    #[test]
    fn below_threshold_calls_backend() {
        let client = SearchClient::in_memory(Box::new(FixtureSearch::new()));
        client.search("abcdefghijklmnopqrst").unwrap();
        // 17 of 20 characters shared: 0.85
        let q = "abcdefghijklmnopqXYZ";
        assert_eq!(similarity(q, "abcdefghijklmnopqrst"), 0.85);
        let (_, tier) = client.lookup(q).unwrap();
        assert_eq!(tier, Tier::Backend);
        assert_eq!(client.stats().backend_calls, 2);
    }

    #[test]
    fn fuzzy_prefers_highest_ratio_then_newest() {
        let store = Arc::new(MemoryStore::new());
        store.put(CacheEntry::new("abcdefghijklmnopqrsX", "older", 1)).unwrap();
        store.put(CacheEntry::new("abcdefghijklmnopqrsY", "newer", 2)).unwrap();
        store.put(CacheEntry::new("abcdefghijklmnopqXYZ", "far", 3)).unwrap();
        let client = SearchClient::new(Box::new(FixtureSearch::new()), store);
        assert_eq!(client.lookup("abcdefghijklmnopqrsZ").unwrap(), ("newer".to_string(), Tier::Fuzzy));
    }

    #[test]
    fn backend_failure_is_an_error_and_not_cached() {
        let client = SearchClient::in_memory(Box::new(FixtureSearch::failing()));
        assert!(client.search("q").is_err());
        assert!(client.search("q").is_err());
        assert_eq!(client.stats().backend_calls, 2);
        assert_eq!(client.store().len().unwrap(), 0);
    }

    #[test]
    fn concurrent_misses_coalesce() {
        let backend = Arc::new(Slow { calls: AtomicUsize::new(0) });
        let client = Arc::new(SearchClient::in_memory(Box::new(backend.clone())));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let c = client.clone();
                std::thread::spawn(move || c.search("same query").unwrap())
            })
            .collect();
        let results: Vec<String> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert!(results.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn doc_formatting() {
        let docs = vec![
            SearchDoc {
                source: DocSource::KnowledgePanel,
                title: "Donald Trump".into(),
                snippet: "47th president.".into(),
            },
            SearchDoc::titled("The White House", "Donald J. Trump."),
        ];
        assert_eq!(
            format_docs(&docs),
            "Doc 1: (Knowledge Panel: Donald Trump) 47th president.\nDoc 2: (Title: The White House) Donald J. Trump."
        );
    }

    #[test]
    fn reply_parsing() {
        let body = serde_json::json!({
            "knowledgeGraph": {"title": "K", "description": "kd"},
            "organic": [{"title": "a", "snippet": "sa"}, {"title": "b", "snippet": "sb"}, {"title": "c"}]
        });
        let docs = parse_search_reply(&body, 3);
        assert_eq!(docs.len(), 3);
        assert_eq!(docs[0].source, DocSource::KnowledgePanel);
        assert_eq!(docs[2].title, "b");
    }
}
