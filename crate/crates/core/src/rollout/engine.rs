use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    Emission, Origin, PolicyBackend, PolicyContext, PolicyError, RolloutError, RolloutGroup, RolloutLimits, Terminal,
    TokenRecord, ToolInvocation, Trajectory,
};
use crate::data::QAItem;
use crate::optim::is_valid_group;
use crate::reward::{score, LengthBudget};
use crate::tags::{scan_increment, EventKind};
use crate::tools::{ToolGateway, ToolKind};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for group member `index` of `item_id` under `batch_seed`.
pub fn derive_seed(batch_seed: u64, item_id: &str, index: usize) -> u64 {
    let mut h = FNV_OFFSET;
    for b in item_id.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(FNV_PRIME);
    }
    splitmix(splitmix(batch_seed ^ h).wrapping_add(index as u64))
}

fn checked(emission: Emission) -> Result<Emission, PolicyError> {
    if emission.logprob.is_finite() && emission.logprob <= 0.0 {
        Ok(emission)
    } else {
        Err(PolicyError::BadLogprob(emission.logprob))
    }
}

/// Generates one trajectory for `item`.
///
/// The outer loop runs at most `max_turns + 1` times. A tool call closed in
/// the last iteration is not dispatched, so at most `max_turns` responses are
/// injected.
pub fn run_rollout(
    item: &QAItem,
    policy: &dyn PolicyBackend,
    tools: &dyn ToolGateway,
    limits: &RolloutLimits,
    seed: u64,
    member_index: usize,
) -> Result<Trajectory, RolloutError> {
    limits.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records: Vec<TokenRecord> = Vec::new();
    let mut text = String::new();
    let mut model_tokens = 0usize;
    let mut tool_calls = Vec::new();

    let finish = |records, tool_calls, terminal| Trajectory {
        item_id: item.id.clone(),
        prompt: item.question.clone(),
        records,
        terminal,
        tool_calls,
    };

    for turn in 0..=limits.max_turns {
        let (tool, request) = loop {
            if model_tokens >= limits.max_response_length || records.len() >= limits.context_cap {
                return Ok(finish(records, tool_calls, Terminal::LengthExhausted));
            }
            let ctx = PolicyContext { item, history: &records, text: &text, member_index, seed };
            let emission = checked(policy.next_token(&ctx, &mut rng)?)?;
            let event = scan_increment(&text, &emission.text);
            text.push_str(&emission.text);
            records.push(TokenRecord {
                token_id: emission.token_id,
                text: emission.text,
                origin: Origin::Model,
                logprob: Some(emission.logprob),
            });
            model_tokens += 1;
            match (event.kind, event.payload) {
                (EventKind::AnswerClosed, _) => return Ok(finish(records, tool_calls, Terminal::Answered)),
                (EventKind::SearchClosed, Some(p)) => break (ToolKind::Search, p),
                (EventKind::CodeClosed, Some(p)) => break (ToolKind::Code, p),
                _ => {}
            }
        };
        if turn == limits.max_turns {
            break;
        }
        let started = Instant::now();
        let response = tools.dispatch(tool, &request);
        let latency = started.elapsed();
        for (token_id, piece) in policy.tokenize_tool_response(&response) {
            text.push_str(&piece);
            records.push(TokenRecord { token_id, text: piece, origin: Origin::Tool, logprob: None });
        }
        tool_calls.push(ToolInvocation { tool, request, response, latency });
    }
    Ok(finish(records, tool_calls, Terminal::TurnBudgetExhausted))
}

/// Rolls out `limits.group_size` members for `item` and scores each one.
pub fn run_group(
    item: &QAItem,
    policy: &dyn PolicyBackend,
    tools: &dyn ToolGateway,
    limits: &RolloutLimits,
    budget: LengthBudget,
    batch_seed: u64,
) -> Result<RolloutGroup, RolloutError> {
    if limits.group_size < 2 {
        return Err(RolloutError::GroupTooSmall(limits.group_size));
    }
    let trajectories = (0..limits.group_size)
        .into_par_iter()
        .map(|i| run_rollout(item, policy, tools, limits, derive_seed(batch_seed, &item.id, i), i))
        .collect::<Result<Vec<_>, _>>()?;
    let rewards = trajectories.iter().map(|t| score(t, item, budget)).collect();
    Ok(RolloutGroup { item: item.clone(), trajectories, rewards, advantages: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchOptions {
    pub seed: u64,
    /// Stop after this many groups have been rolled out, full or not.
    pub max_draws: Option<usize>,
    /// Extra attempts with fresh seeds before a degenerate prompt is dropped.
    pub rerolls: usize,
}

impl BatchOptions {
    pub fn seeded(seed: u64) -> Self {
        Self { seed, max_draws: None, rerolls: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub groups: Vec<RolloutGroup>,
    /// Groups rolled out but dropped for zero reward spread.
    pub discarded: usize,
    /// Groups rolled out in total.
    pub drawn: usize,
    /// Sampled groups, kept and discarded, in draw order.
    pub sampled: Vec<RolloutGroup>,
    pub underfilled: bool,
}

/// Draws items until `limits.batch_size` groups with nonzero reward spread are
/// collected, or the source (or draw cap) runs out.
pub fn collect_batch(
    source: impl IntoIterator<Item = QAItem>,
    policy: &dyn PolicyBackend,
    tools: &dyn ToolGateway,
    limits: &RolloutLimits,
    budget: LengthBudget,
    options: BatchOptions,
) -> Result<BatchOutcome, RolloutError> {
    limits.validate()?;
    let mut out = BatchOutcome { groups: Vec::new(), discarded: 0, drawn: 0, sampled: Vec::new(), underfilled: false };
    let mut items = source.into_iter();
    while out.groups.len() < limits.batch_size {
        if options.max_draws.is_some_and(|cap| out.drawn >= cap) {
            break;
        }
        let Some(item) = items.next() else { break };
        for attempt in 0..=options.rerolls {
            if options.max_draws.is_some_and(|cap| out.drawn >= cap) {
                break;
            }
            let group_seed = derive_seed(options.seed, &format!("draw-{}", out.drawn), attempt);
            let group = run_group(&item, policy, tools, limits, budget, group_seed)?;
            out.drawn += 1;
            out.sampled.push(group.clone());
            if is_valid_group(&group.totals()).unwrap_or(false) {
                out.groups.push(group);
                break;
            }
            out.discarded += 1;
            log::debug!("discarding degenerate group for item {} (attempt {attempt})", item.id);
        }
    }
    out.underfilled = out.groups.len() < limits.batch_size;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::QuestionType;
    use crate::rollout::{Script, ScriptedPolicy};
    use crate::tools::{FixtureSearch, Gateway, SearchDoc};

    fn item() -> QAItem {
        QAItem::new("q1", "who?", "42", QuestionType::MathExact, "gsm8k")
    }

    fn limits(max_turns: usize) -> RolloutLimits {
        RolloutLimits::new(max_turns, 64, 2, 1)
    }

    #[test]
    fn direct_answer() {
        let policy = ScriptedPolicy::fixed(Script::once(["<answer>", "42", "</answer>"]));
        let t = run_rollout(&item(), &policy, &Gateway::mock(FixtureSearch::new()), &limits(4), 1, 0).unwrap();
        assert_eq!(t.terminal, Terminal::Answered);
        assert!(t.tool_calls.is_empty());
        assert_eq!(t.text(), "<answer>42</answer>");
    }

    #[test]
    fn search_then_answer() {
        let policy = ScriptedPolicy::fixed(Script::once(["<search>q</search>", "<answer>A</answer>"]));
        let gw = Gateway::mock(FixtureSearch::new().with("q", vec![SearchDoc::titled("T", "s")]));
        let t = run_rollout(&item(), &policy, &gw, &limits(4), 1, 0).unwrap();
        assert_eq!(t.text(), "<search>q</search><response>Doc 1: (Title: T) s</response><answer>A</answer>");
        assert_eq!(t.tool_calls.len(), 1);
        assert_eq!(t.tool_calls[0].request, "q");
        assert_eq!(t.model_text(), "<search>q</search><answer>A</answer>");
    }

    #[test]
    fn endless_search_exhausts_turns() {
        let policy = ScriptedPolicy::fixed(Script::cycling(["<search>q</search>"]));
        let t = run_rollout(&item(), &policy, &Gateway::mock(FixtureSearch::new()), &limits(4), 1, 0).unwrap();
        assert_eq!(t.terminal, Terminal::TurnBudgetExhausted);
        assert_eq!(t.tool_calls.len(), 4);
        assert_eq!(t.text().matches("<response>").count(), 4);
        assert_eq!(t.model_token_count(), 5);
    }

    #[test]
    fn length_cut() {
        let policy = ScriptedPolicy::fixed(Script::cycling(["la "]));
        let lim = RolloutLimits::new(4, 10, 2, 1);
        let t = run_rollout(&item(), &policy, &Gateway::new(), &lim, 1, 0).unwrap();
        assert_eq!(t.terminal, Terminal::LengthExhausted);
        assert_eq!(t.model_token_count(), 10);
    }

    #[test]
    fn policy_failure_propagates() {
        let policy = ScriptedPolicy::fixed(Script::once(["<think>"]));
        let err = run_rollout(&item(), &policy, &Gateway::new(), &limits(4), 1, 0).unwrap_err();
        assert!(matches!(err, RolloutError::Policy(PolicyError::ScriptExhausted(1))));
    }

    #[test]
    fn group_size_one_rejected() {
        let policy = ScriptedPolicy::fixed(Script::once(["<answer>42</answer>"]));
        let lim = RolloutLimits::new(4, 64, 1, 1);
        let err = run_group(&item(), &policy, &Gateway::new(), &lim, LengthBudget::new(64, 8).unwrap(), 0);
        assert!(matches!(err, Err(RolloutError::GroupTooSmall(1))));
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = (0..8).map(|i| derive_seed(7, "item", i)).collect();
        let mut uniq = seeds.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), 8);
        assert_eq!(seeds[3], derive_seed(7, "item", 3));
        assert_ne!(derive_seed(7, "item", 0), derive_seed(8, "item", 0));
        assert_ne!(derive_seed(7, "item", 0), derive_seed(7, "other", 0));
    }
}
