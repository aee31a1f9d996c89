use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Origin, TokenRecord, TOOL_BODY_ID, TOOL_CLOSE_ID, TOOL_OPEN_ID};
use crate::data::QAItem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("script exhausted after {0} tokens")]
    ScriptExhausted(usize),
    #[error("emitted log-probability {0} is not finite and non-positive")]
    BadLogprob(f64),
    #[error("{0}")]
    Backend(String),
}

/// Everything a policy may condition on when choosing the next token.
pub struct PolicyContext<'a> {
    pub item: &'a QAItem,
    pub history: &'a [TokenRecord],
    /// Concatenated text of `history`.
    pub text: &'a str,
    pub member_index: usize,
    pub seed: u64,
}

impl PolicyContext<'_> {
    pub fn prompt(&self) -> &str {
        &self.item.question
    }

    pub fn model_tokens(&self) -> usize {
        self.history.iter().filter(|r| r.origin == Origin::Model).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub token_id: u32,
    pub text: String,
    pub logprob: f64,
    pub distribution: Option<Vec<f64>>,
}

/// Stand-in for the language model. Must be deterministic given the rng.
pub trait PolicyBackend: Send + Sync {
    fn next_token(&self, ctx: &PolicyContext<'_>, rng: &mut ChaCha8Rng) -> Result<Emission, PolicyError>;

    /// Splits a tool response body into records; the wrapping tags included.
    fn tokenize_tool_response(&self, body: &str) -> Vec<(u32, String)> {
        let mut out = vec![(TOOL_OPEN_ID, "<response>".to_string())];
        if !body.is_empty() {
            out.push((TOOL_BODY_ID, body.to_string()));
        }
        out.push((TOOL_CLOSE_ID, "</response>".to_string()));
        out
    }
}

/// A fixed sequence of text chunks, one chunk per emitted token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Script {
    pub chunks: Vec<String>,
    /// Restart from the first chunk when exhausted instead of failing.
    pub cycle: bool,
}

impl Script {
    pub fn once<S: Into<String>>(chunks: impl IntoIterator<Item = S>) -> Self {
        Self { chunks: chunks.into_iter().map(Into::into).collect(), cycle: false }
    }

    pub fn cycling<S: Into<String>>(chunks: impl IntoIterator<Item = S>) -> Self {
        Self { chunks: chunks.into_iter().map(Into::into).collect(), cycle: true }
    }
}

type Selector = dyn Fn(&QAItem, usize, u64) -> Script + Send + Sync;

/// Emits a script chosen per (item, group member, seed), ignoring tool output.
#[derive(Clone)]
pub struct ScriptedPolicy {
    select: Arc<Selector>,
}

impl fmt::Debug for ScriptedPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScriptedPolicy").finish_non_exhaustive()
    }
}

impl ScriptedPolicy {
    pub fn new(select: impl Fn(&QAItem, usize, u64) -> Script + Send + Sync + 'static) -> Self {
        Self { select: Arc::new(select) }
    }

    /// The same script for every item and member.
    pub fn fixed(script: Script) -> Self {
        Self::new(move |_, _, _| script.clone())
    }
}

impl PolicyBackend for ScriptedPolicy {
    fn next_token(&self, ctx: &PolicyContext<'_>, _rng: &mut ChaCha8Rng) -> Result<Emission, PolicyError> {
        let script = (self.select)(ctx.item, ctx.member_index, ctx.seed);
        let pos = ctx.model_tokens();
        let n = script.chunks.len();
        let idx = match (n, script.cycle) {
            (0, _) => return Err(PolicyError::ScriptExhausted(pos)),
            (_, true) => pos % n,
            (_, false) if pos < n => pos,
            _ => return Err(PolicyError::ScriptExhausted(pos)),
        };
        Ok(Emission { token_id: idx as u32, text: script.chunks[idx].clone(), logprob: 0.0, distribution: None })
    }
}
