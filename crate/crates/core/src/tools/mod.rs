//! Tool dispatch: a cached search client and a code-interpreter client behind
//! one total `dispatch` call, plus offline mock backends.

pub mod cache;
pub mod interpreter;
pub mod pyeval;
pub mod search;
pub mod text;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::cache::{cache_load, cache_persist, CacheEntry, CacheError, CacheStore, FileStore, MemoryStore};
pub use self::interpreter::{
    CodeExecutor, ExecStatus, ExecutionResult, HttpInterpreter, DEFAULT_GRACE_MS, DEFAULT_TIMEOUT_MS,
};
pub use self::pyeval::MockInterpreter;
pub use self::search::{
    format_docs, FixtureSearch, HttpSearchBackend, SearchBackend, SearchClient, SearchDoc, Tier, FUZZY_THRESHOLD,
};
pub use self::text::{normalize_query, similarity};

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("{0}")]
    Backend(String),
    #[error("tool '{0}' is not registered")]
    NotRegistered(ToolKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    Search,
    Code,
}

impl ToolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ToolKind::Search => "search",
            ToolKind::Code => "code",
        }
    }
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Total dispatch: every failure comes back as an `error: …` string.
pub trait ToolGateway: Send + Sync {
    fn dispatch(&self, tool: ToolKind, payload: &str) -> String;
}

impl<T: ToolGateway + ?Sized> ToolGateway for Arc<T> {
    fn dispatch(&self, tool: ToolKind, payload: &str) -> String {
        (**self).dispatch(tool, payload)
    }
}

pub struct Gateway {
    search: Option<SearchClient>,
    code: Option<Box<dyn CodeExecutor>>,
    timeout_ms: u64,
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new()
    }
}

impl Gateway {
    pub fn new() -> Self {
        Self { search: None, code: None, timeout_ms: DEFAULT_TIMEOUT_MS }
    }

    pub fn with_search(mut self, client: SearchClient) -> Self {
        self.search = Some(client);
        self
    }

    pub fn with_code(mut self, executor: impl CodeExecutor + 'static) -> Self {
        self.code = Some(Box::new(executor));
        self
    }

    pub fn with_timeout_ms(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    /// Fixture search plus the mock interpreter, fully offline.
    pub fn mock(search: FixtureSearch) -> Self {
        Self::new().with_search(SearchClient::in_memory(Box::new(search))).with_code(MockInterpreter::new())
    }

    pub fn search_client(&self) -> Option<&SearchClient> {
        self.search.as_ref()
    }

    pub fn execute_code(&self, code: &str) -> Result<ExecutionResult, ToolError> {
        let exec = self.code.as_ref().ok_or(ToolError::NotRegistered(ToolKind::Code))?;
        Ok(exec.execute(code, self.timeout_ms))
    }

    pub fn search(&self, query: &str) -> Result<String, ToolError> {
        self.search.as_ref().ok_or(ToolError::NotRegistered(ToolKind::Search))?.search(query)
    }
}

impl ToolGateway for Gateway {
    fn dispatch(&self, tool: ToolKind, payload: &str) -> String {
        let outcome = match tool {
            ToolKind::Search => self.search(payload.trim()),
            ToolKind::Code => self.execute_code(payload).map(|r| r.response_text()),
        };
        outcome.unwrap_or_else(|e| format!("error: {e}"))
    }
}
