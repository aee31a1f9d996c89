//! Interleaved generation and tool dispatch.
//!
//! A rollout appends model tokens until the policy closes an answer, search or
//! code block. Tool output is wrapped in `<response>` and recorded with tool
//! origin so it can be masked out of the objective.

mod engine;
mod export;
mod policy;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::engine::{collect_batch, derive_seed, run_group, run_rollout, BatchOptions, BatchOutcome};
pub use self::export::{export_jsonl, run_length_origins, TrajectoryExport};
pub use self::policy::{Emission, PolicyBackend, PolicyContext, PolicyError, Script, ScriptedPolicy};
use crate::data::QAItem;
use crate::reward::RewardBreakdown;
use crate::tools::ToolKind;

/// Token ids used for tool text by backends without a vocabulary of their own.
pub const TOOL_OPEN_ID: u32 = u32::MAX - 2;
pub const TOOL_BODY_ID: u32 = u32::MAX - 1;
pub const TOOL_CLOSE_ID: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Model,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub token_id: u32,
    pub text: String,
    pub origin: Origin,
    /// Behavior-policy log-probability; absent for tool tokens.
    pub logprob: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Answered,
    TurnBudgetExhausted,
    LengthExhausted,
}

impl Terminal {
    pub fn as_str(self) -> &'static str {
        match self {
            Terminal::Answered => "answered",
            Terminal::TurnBudgetExhausted => "turn_budget_exhausted",
            Terminal::LengthExhausted => "length_exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub tool: ToolKind,
    pub request: String,
    pub response: String,
    #[serde(skip)]
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub item_id: String,
    pub prompt: String,
    pub records: Vec<TokenRecord>,
    pub terminal: Terminal,
    pub tool_calls: Vec<ToolInvocation>,
}

impl Trajectory {
    pub fn text(&self) -> String {
        self.records.iter().map(|r| r.text.as_str()).collect()
    }

    /// Concatenated text of model-origin records only.
    pub fn model_text(&self) -> String {
        self.records.iter().filter(|r| r.origin == Origin::Model).map(|r| r.text.as_str()).collect()
    }

    pub fn model_token_count(&self) -> usize {
        self.records.iter().filter(|r| r.origin == Origin::Model).count()
    }

    /// 1 for model tokens, 0 for tool tokens.
    pub fn mask(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.origin == Origin::Model).collect()
    }

    pub fn calls_of(&self, tool: ToolKind) -> usize {
        self.tool_calls.iter().filter(|c| c.tool == tool).count()
    }

    /// Records and outcome equal, ignoring tool latencies.
    pub fn same_transcript(&self, other: &Trajectory) -> bool {
        self.records == other.records
            && self.terminal == other.terminal
            && self.tool_calls.len() == other.tool_calls.len()
            && self
                .tool_calls
                .iter()
                .zip(&other.tool_calls)
                .all(|(a, b)| a.tool == b.tool && a.request == b.request && a.response == b.response)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutLimits {
    pub max_turns: usize,
    pub max_response_length: usize,
    pub group_size: usize,
    pub batch_size: usize,
    /// Hard cap on total records, tool tokens included.
    pub context_cap: usize,
}

impl RolloutLimits {
    pub fn new(max_turns: usize, max_response_length: usize, group_size: usize, batch_size: usize) -> Self {
        Self { max_turns, max_response_length, group_size, batch_size, context_cap: 4 * max_response_length }
    }

    pub fn validate(&self) -> Result<(), RolloutError> {
        let named = [
            ("max_turns", self.max_turns),
            ("max_response_length", self.max_response_length),
            ("group_size", self.group_size),
            ("batch_size", self.batch_size),
            ("context_cap", self.context_cap),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| *v == 0) {
            return Err(RolloutError::InvalidLimits(format!("{name} must be positive")));
        }
        if self.context_cap < self.max_response_length {
            return Err(RolloutError::InvalidLimits("context_cap must be at least max_response_length".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RolloutGroup {
    pub item: QAItem,
    pub trajectories: Vec<Trajectory>,
    pub rewards: Vec<RewardBreakdown>,
    pub advantages: Option<Vec<f64>>,
}

impl RolloutGroup {
    pub fn totals(&self) -> Vec<f64> {
        self.rewards.iter().map(|r| r.total).collect()
    }
}

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("policy backend failed: {0}")]
    Policy(#[from] PolicyError),
    #[error("invalid rollout limits: {0}")]
    InvalidLimits(String),
    #[error("group size must be at least 2, got {0}")]
    GroupTooSmall(usize),
}
