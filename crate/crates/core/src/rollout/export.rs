use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{Origin, RolloutGroup, Terminal, ToolInvocation, Trajectory};
use crate::reward::RewardBreakdown;

/// One JSONL line per trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryExport {
    pub item_id: String,
    pub text: String,
    /// Run-length encoded origins, e.g. `[["model", 3], ["tool", 3]]`.
    pub origins: Vec<(Origin, usize)>,
    pub tool_calls: Vec<ToolInvocation>,
    pub terminal: Terminal,
    pub reward: Option<RewardBreakdown>,
}

pub fn run_length_origins(t: &Trajectory) -> Vec<(Origin, usize)> {
    let mut runs: Vec<(Origin, usize)> = Vec::new();
    for r in &t.records {
        match runs.last_mut() {
            Some((o, n)) if *o == r.origin => *n += 1,
            _ => runs.push((r.origin, 1)),
        }
    }
    runs
}

impl TrajectoryExport {
    pub fn new(t: &Trajectory, reward: Option<RewardBreakdown>) -> Self {
        Self {
            item_id: t.item_id.clone(),
            text: t.text(),
            origins: run_length_origins(t),
            tool_calls: t.tool_calls.clone(),
            terminal: t.terminal,
            reward,
        }
    }
}

/// Writes every trajectory of `groups` with its reward; returns the line count.
pub fn export_jsonl<W: Write>(groups: &[RolloutGroup], mut out: W) -> io::Result<usize> {
    let mut n = 0;
    for g in groups {
        for (i, t) in g.trajectories.iter().enumerate() {
            let line = TrajectoryExport::new(t, g.rewards.get(i).cloned());
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
            n += 1;
        }
    }
    Ok(n)
}
