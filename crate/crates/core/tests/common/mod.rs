//! Checks shared by the integration tests and the acceptance runner.
//!
//! Each check returns a one-line summary on success and a description of the
//! first violation on failure.

#![allow(dead_code)]

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toolrl_core::data::{evaluate, gen_calculator, gen_fact_lookup, program_for};
use toolrl_core::optim::{
    grad_check, group_advantages, grpo_objective, tapo_objective, toy_objective, train_toy, ClipBounds,
    ObjectiveInputs, TokenSeries, ToyPolicy, ToySample, ToyVocab, TrainConfig,
};
use toolrl_core::reward::conformance::run_file;
use toolrl_core::rollout::{
    collect_batch, run_rollout, BatchOptions, Emission, Origin, PolicyBackend, PolicyContext, PolicyError, Script,
    ScriptedPolicy, Terminal, TokenRecord, Trajectory,
};
use toolrl_core::tools::{normalize_query, similarity, FixtureSearch, Gateway, SearchClient, SearchDoc, Tier};
use toolrl_core::{LengthBudget, QAItem, QuestionType, RolloutLimits};

pub type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub const VECTORS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/reward_vectors.jsonl");

pub fn reward_conformance() -> Check {
    let report = run_file(VECTORS).map_err(|e| e.to_string())?;
    ensure(report.total >= 60, || format!("only {} vectors", report.total))?;
    if let Some(m) = report.mismatches.first() {
        return Err(format!("{}: expected {}, got {}", m.label, m.expected, m.actual));
    }
    Ok(format!("{} vectors bit-exact", report.total))
}

/// Wraps a policy and counts `next_token` calls.
pub struct Counting<P> {
    pub inner: P,
    pub calls: AtomicUsize,
}

impl<P> Counting<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<P: PolicyBackend> PolicyBackend for Counting<P> {
    fn next_token(&self, ctx: &PolicyContext<'_>, rng: &mut ChaCha8Rng) -> Result<Emission, PolicyError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.next_token(ctx, rng)
    }
}

pub fn math_item(id: &str, answer: &str) -> QAItem {
    QAItem::new(id, "what is 3 + 4?", answer, QuestionType::MathExact, "gsm8k")
}

/// Tool budget: `max_turns` responses, and one more closed call that is
/// emitted but never dispatched.
pub fn fidelity_turn_budget() -> Check {
    for max_turns in 1..=5 {
        let policy = Counting::new(ScriptedPolicy::fixed(Script::cycling(["<search>", "q", "</search>"])));
        let gw = Gateway::mock(FixtureSearch::new().with("q", vec![SearchDoc::titled("T", "s")]));
        let limits = RolloutLimits::new(max_turns, 1000, 2, 1);
        let t = run_rollout(&math_item("a", "7"), &policy, &gw, &limits, 3, 0).map_err(|e| e.to_string())?;
        let responses = t.text().matches("<response>").count();
        ensure(t.terminal == Terminal::TurnBudgetExhausted, || format!("terminal {:?}", t.terminal))?;
        ensure(responses == max_turns && t.tool_calls.len() == max_turns, || {
            format!("max_turns {max_turns}: {responses} responses")
        })?;
        // every iteration of the outer loop emits one full call
        ensure(policy.calls() == 3 * (max_turns + 1), || {
            format!("max_turns {max_turns}: {} policy calls", policy.calls())
        })?;
        ensure(t.model_text().matches("</search>").count() == max_turns + 1, || "undispatched call missing".into())?;
    }
    Ok("max_turns 1..=5: responses = max_turns, iterations = max_turns + 1".into())
}

pub fn fidelity_response_wrapping() -> Check {
    let policy = ScriptedPolicy::fixed(Script::once([
        "<think>",
        "add",
        "</think>",
        "<code>",
        "print(3 + 4)",
        "</code>",
        "<search>",
        "Ada  Lovelace",
        "</search>",
        "<answer>",
        "7",
        "</answer>",
    ]));
    let gw = Gateway::mock(FixtureSearch::new().with(
        "ada lovelace",
        vec![
            SearchDoc::titled("Ada Lovelace", "English mathematician"),
            SearchDoc::titled("Analytical Engine", "proposed computer"),
        ],
    ));
    let t = run_rollout(&math_item("b", "7"), &policy, &gw, &RolloutLimits::new(4, 64, 2, 1), 1, 0)
        .map_err(|e| e.to_string())?;
    let expected = "<think>add</think><code>print(3 + 4)</code><response>7\n</response>\
                    <search>Ada  Lovelace</search><response>Doc 1: (Title: Ada Lovelace) English mathematician\n\
                    Doc 2: (Title: Analytical Engine) proposed computer</response><answer>7</answer>";
    ensure(t.text() == expected, || format!("transcript {:?}", t.text()))?;
    ensure(t.tool_calls[1].request == "Ada  Lovelace", || format!("request {:?}", t.tool_calls[1].request))?;
    Ok("code and search responses wrapped byte-exactly".into())
}

pub fn fidelity_answer_termination() -> Check {
    // chunks after the answer must never be requested
    let policy = Counting::new(ScriptedPolicy::fixed(Script::once(["<answer>", "7", "</ans", "wer>", "<search>"])));
    let t = run_rollout(&math_item("c", "7"), &policy, &Gateway::new(), &RolloutLimits::new(4, 64, 2, 1), 1, 0)
        .map_err(|e| e.to_string())?;
    ensure(t.terminal == Terminal::Answered, || format!("terminal {:?}", t.terminal))?;
    ensure(policy.calls() == 4 && t.text() == "<answer>7</answer>", || format!("text {:?}", t.text()))?;
    Ok("stops on the token completing </answer>".into())
}

pub fn fidelity_origin_mask() -> Check {
    let chunks = ["<search>", "x", "</search>", "<code>", "print(2 ** 10)", "</code>", "<answer>", "1024", "</answer>"];
    let policy = ScriptedPolicy::fixed(Script::once(chunks));
    let t = run_rollout(
        &math_item("d", "1024"),
        &policy,
        &Gateway::mock(FixtureSearch::new()),
        &RolloutLimits::new(4, 64, 2, 1),
        1,
        0,
    )
    .map_err(|e| e.to_string())?;
    let from_mask: String = t.records.iter().zip(t.mask()).filter(|(_, m)| *m).map(|(r, _)| r.text.as_str()).collect();
    ensure(from_mask == chunks.concat(), || format!("masked text {from_mask:?}"))?;
    let tool: String = t.records.iter().filter(|r| r.origin == Origin::Tool).map(|r| r.text.as_str()).collect();
    ensure(tool.matches("<response>").count() == 2 && tool.ends_with("</response>"), || format!("tool text {tool:?}"))?;
    ensure(t.records.iter().all(|r| r.logprob.is_some() == (r.origin == Origin::Model)), || "logprob origin".into())?;
    Ok("mask reconstructs the policy transcript".into())
}

pub fn rollout_fidelity() -> Check {
    let parts =
        [fidelity_turn_budget(), fidelity_response_wrapping(), fidelity_answer_termination(), fidelity_origin_mask()];
    let mut notes = Vec::new();
    for (label, part) in ["a", "b", "c", "d"].iter().zip(parts) {
        part.map_err(|e| format!("({label}) {e}"))?;
        notes.push(*label);
    }
    Ok(format!("({}) hold", notes.join(")(")))
}

/// A random trajectory over the standard toy vocabulary with tool runs.
pub fn random_toy_sample(rng: &mut ChaCha8Rng, policy: &ToyPolicy<f64>, spread: f64) -> ToySample<f64> {
    let len = rng.gen_range(2..12);
    let mut records = Vec::with_capacity(len);
    while records.len() < len {
        if !records.is_empty() && rng.gen_bool(0.2) {
            for id in [13, 14, 14, 15] {
                records.push(TokenRecord { token_id: id, text: String::new(), origin: Origin::Tool, logprob: None });
            }
        } else {
            records.push(TokenRecord {
                token_id: rng.gen_range(0..13),
                text: String::new(),
                origin: Origin::Model,
                logprob: Some(0.0),
            });
        }
    }
    let trajectory = Trajectory {
        item_id: "r".into(),
        prompt: String::new(),
        records,
        terminal: Terminal::Answered,
        tool_calls: vec![],
    };
    let lp = toolrl_core::optim::toy_logprobs(policy, &trajectory).expect("in vocabulary");
    let logp_old = lp.logp.iter().map(|l| l + rng.gen_range(-spread..spread)).collect();
    ToySample { trajectory, advantage: rng.gen_range(-2.0..2.0), logp_old }
}

pub fn random_toy_instance(rng: &mut ChaCha8Rng, spread: f64) -> (ToyPolicy<f64>, Vec<ToySample<f64>>) {
    let policy = ToyPolicy::<f64>::random(ToyVocab::standard(), 1, rng.gen_range(0.5..1.5), 1.0, rng);
    let n = rng.gen_range(1..5);
    let samples = (0..n).map(|_| random_toy_sample(rng, &policy, spread)).collect();
    (policy, samples)
}

pub fn check_grad(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for i in 0..instances {
        let (policy, samples) = random_toy_instance(&mut rng, 0.4);
        let report = grad_check(&policy, &samples, ClipBounds::default(), 1e-5).map_err(|e| e.to_string())?;
        ensure(report.max_rel_error < 1e-4, || format!("instance {i}: {report:?}"))?;
        worst = worst.max(report.max_rel_error);
        checked += report.checked;
    }
    Ok(format!("{instances} instances, {checked} params, max rel err {worst:.2e}"))
}

pub fn check_masking_invariance(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..instances {
        let (policy, samples) = random_toy_instance(&mut rng, 0.4);
        let (j, grad) = toy_objective(&policy, &samples, ClipBounds::default()).map_err(|e| e.to_string())?;
        let mut perturbed = samples.clone();
        for s in &mut perturbed {
            for (pos, r) in s.trajectory.records.iter().enumerate() {
                if r.origin == Origin::Tool {
                    s.logp_old[pos] = rng.gen_range(-50.0..0.0);
                }
            }
        }
        let (j2, grad2) = toy_objective(&policy, &perturbed, ClipBounds::default()).map_err(|e| e.to_string())?;
        ensure(j.to_bits() == j2.to_bits(), || format!("instance {i}: J {j} vs {j2}"))?;
        ensure(grad.iter().zip(&grad2).all(|(a, b)| a.to_bits() == b.to_bits()), || format!("instance {i}: gradient"))?;

        // the same at the objective level, for both log-probability arrays
        let series: Vec<TokenSeries<f64>> = (0..3)
            .map(|_| {
                let n = rng.gen_range(1..10);
                TokenSeries {
                    logp_new: (0..n).map(|_| rng.gen_range(-3.0..0.0)).collect(),
                    logp_old: (0..n).map(|_| rng.gen_range(-3.0..0.0)).collect(),
                    mask: (0..n).map(|t| t == 0 || rng.gen_bool(0.6)).collect(),
                    advantage: rng.gen_range(-2.0..2.0),
                }
            })
            .collect();
        let base = ObjectiveInputs { groups: vec![series.clone()], clip: ClipBounds::default() };
        let mut noisy = base.clone();
        for s in &mut noisy.groups[0] {
            for t in (0..s.mask.len()).filter(|&t| !s.mask[t]) {
                s.logp_new[t] = rng.gen_range(-40.0..0.0);
                s.logp_old[t] = rng.gen_range(-40.0..0.0);
            }
        }
        let (a, b) =
            (tapo_objective(&base).map_err(|e| e.to_string())?, tapo_objective(&noisy).map_err(|e| e.to_string())?);
        ensure(a.value.to_bits() == b.value.to_bits() && a.dlogp == b.dlogp, || format!("instance {i}: objective"))?;
    }
    Ok(format!("{instances} instances bit-identical"))
}

pub fn check_advantage_invariance(groups: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for g in 0..groups {
        let n = rng.gen_range(2..17);
        let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let base = group_advantages(&rewards).map_err(|e| e.to_string())?;
        let shift = rng.gen_range(-10.0..10.0);
        let scale = rng.gen_range(0.01..100.0);
        let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
        let scaled: Vec<f64> = rewards.iter().map(|r| r * scale).collect();
        for other in [group_advantages(&shifted), group_advantages(&scaled)] {
            let other = other.map_err(|e| e.to_string())?;
            for (a, b) in base.iter().zip(&other) {
                worst = worst.max((a - b).abs());
            }
        }
        let mean = base.iter().sum::<f64>() / n as f64;
        let var = base.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        ensure(mean.abs() < 1e-9 && (var.sqrt() - 1.0).abs() < 1e-9, || {
            format!("group {g}: mean {mean} std {}", var.sqrt())
        })?;
    }
    ensure(worst < 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("{groups} groups, max deviation {worst:.1e}"))
}

/// Per-token term by case analysis on the sign of the advantage.
pub fn brute_force_term(logp_new: f64, logp_old: f64, a: f64, low: f64, high: f64) -> f64 {
    let r = (logp_new - logp_old).exp();
    if a >= 0.0 {
        a * r.min(1.0 + high)
    } else {
        a * r.max(1.0 - low)
    }
}

fn random_inputs(rng: &mut ChaCha8Rng, groups: usize, equal_len: Option<usize>) -> ObjectiveInputs<f64> {
    let low = rng.gen_range(0.05..0.4);
    let clip = ClipBounds::new(low, low + rng.gen_range(0.0..0.3)).expect("valid clip");
    let groups = (0..groups)
        .map(|_| {
            (0..rng.gen_range(2..6))
                .map(|_| {
                    let n = equal_len.unwrap_or_else(|| rng.gen_range(1..20));
                    TokenSeries {
                        logp_new: (0..n).map(|_| rng.gen_range(-4.0..0.0)).collect(),
                        logp_old: (0..n).map(|_| rng.gen_range(-4.0..0.0)).collect(),
                        mask: (0..n).map(|t| equal_len.is_some() || t == 0 || rng.gen_bool(0.7)).collect(),
                        advantage: rng.gen_range(-2.0..2.0),
                    }
                })
                .collect()
        })
        .collect();
    ObjectiveInputs { groups, clip }
}

pub fn check_brute_force(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for i in 0..instances {
        let groups = rng.gen_range(1..4);
        let inputs = random_inputs(&mut rng, groups, None);
        let (low, high) = (inputs.clip.low, inputs.clip.high);
        let value = tapo_objective(&inputs).map_err(|e| e.to_string())?;
        let (mut sum, mut count) = (0.0, 0usize);
        for (g, group) in inputs.groups.iter().enumerate() {
            for (k, s) in group.iter().enumerate() {
                for t in 0..s.mask.len() {
                    if !s.mask[t] {
                        ensure(value.terms[g][k][t] == 0.0, || format!("instance {i}: masked term nonzero"))?;
                        continue;
                    }
                    let term = brute_force_term(s.logp_new[t], s.logp_old[t], s.advantage, low, high);
                    let r = (s.logp_new[t] - s.logp_old[t]).exp();
                    let bound = if s.advantage > 0.0 { (1.0 + high) * s.advantage } else { r * s.advantage };
                    ensure(term <= bound + 1e-15, || format!("instance {i}: term {term} above bound {bound}"))?;
                    worst = worst.max((term - value.terms[g][k][t]).abs());
                    sum += term;
                    count += 1;
                }
            }
        }
        worst = worst.max((sum / count as f64 - value.value).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("{instances} batches, max deviation {worst:.1e}"))
}

pub fn check_grpo_equivalence(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let len = rng.gen_range(1..20);
        let mut inputs = random_inputs(&mut rng, 1, Some(len));
        let eps = inputs.clip.low;
        inputs.clip = ClipBounds::symmetric(eps).expect("valid clip");
        let tapo = tapo_objective(&inputs).map_err(|e| e.to_string())?.value;
        let grpo = grpo_objective(&inputs, eps, &[], 0.0).map_err(|e| e.to_string())?;
        worst = worst.max((tapo - grpo).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("{instances} batches, max deviation {worst:.1e}"))
}

pub fn check_flat_regions() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for i in 0..20 {
        let (policy, mut samples) = random_toy_instance(&mut rng, 0.4);
        for s in &mut samples {
            s.advantage = 0.0;
        }
        let (_, grad) = toy_objective(&policy, &samples, ClipBounds::default()).map_err(|e| e.to_string())?;
        ensure(grad.iter().all(|&g| g == 0.0), || format!("instance {i}: zero advantage gives gradient"))?;
        // ratio far above 1 + high with positive advantage: clipped constant selected
        for s in &mut samples {
            s.advantage = rng.gen_range(0.1..2.0);
            s.logp_old.iter_mut().for_each(|l| *l -= 10.0);
        }
        let (_, grad) = toy_objective(&policy, &samples, ClipBounds::default()).map_err(|e| e.to_string())?;
        ensure(grad.iter().all(|&g| g == 0.0), || format!("instance {i}: clipped region gives gradient"))?;
    }
    Ok("zero-advantage and clipped batches have zero gradient".into())
}

pub fn optimization_math() -> Check {
    let parts = [
        ("grad", check_grad(100)),
        ("mask", check_masking_invariance(100)),
        ("advantage", check_advantage_invariance(1000)),
        ("brute force", check_brute_force(200)),
        ("grpo", check_grpo_equivalence(200)),
        ("flat", check_flat_regions()),
    ];
    let mut notes = Vec::new();
    for (label, part) in parts {
        notes.push(format!("{label}: {}", part.map_err(|e| format!("{label}: {e}"))?));
    }
    Ok(notes.join("; "))
}

/// `n` items, exactly half of them (at random positions) forced degenerate.
pub fn degenerate_fixture(n: usize, seed: u64) -> (Vec<QAItem>, HashSet<String>) {
    let items: Vec<QAItem> = (0..n).map(|i| math_item(&format!("ds-{i:04}"), "7")).collect();
    let mut ids: Vec<String> = items.iter().map(|i| i.id.clone()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let degenerate = ids.into_iter().take(n / 2).collect();
    (items, degenerate)
}

/// Every member answers correctly on degenerate items; on the others,
/// member 0 answers wrongly.
pub fn degenerate_policy(degenerate: HashSet<String>) -> ScriptedPolicy {
    ScriptedPolicy::new(move |item, member, _| {
        let answer = if member == 0 && !degenerate.contains(&item.id) { "8" } else { "7" };
        Script::once(["<answer>", answer, "</answer>"])
    })
}

pub fn dynamic_sampling() -> Check {
    let n = 200;
    let (items, degenerate) = degenerate_fixture(n, 5);
    let policy = degenerate_policy(degenerate.clone());
    let limits = RolloutLimits::new(2, 16, 4, n);
    let budget = LengthBudget::new(16, 2).map_err(|e| e.to_string())?;
    let out = collect_batch(items, &policy, &Gateway::new(), &limits, budget, BatchOptions::seeded(9))
        .map_err(|e| e.to_string())?;
    ensure(out.drawn == n, || format!("drew {} groups", out.drawn))?;
    for g in &out.groups {
        let totals = g.totals();
        let mean = totals.iter().sum::<f64>() / totals.len() as f64;
        let var = totals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / totals.len() as f64;
        ensure(var > 0.0, || format!("kept zero-spread group {}", g.item.id))?;
        ensure(!degenerate.contains(&g.item.id), || format!("kept forced-degenerate {}", g.item.id))?;
    }
    let forced = degenerate.len() as f64 / n as f64;
    let rate = out.discarded as f64 / out.drawn as f64;
    ensure((rate - forced).abs() <= 0.1 * forced, || format!("discard rate {rate} vs forced {forced}"))?;
    Ok(format!("{} kept, {} discarded of {} (forced rate {forced})", out.groups.len(), out.discarded, out.drawn))
}

pub fn moving_average(rewards: &[f64], step: usize) -> f64 {
    rewards[step - 10..step].iter().sum::<f64>() / 10.0
}

pub fn toy_training() -> Check {
    let cfg = TrainConfig::default();
    ensure(cfg.task == toolrl_core::optim::ToyTask::Calculator, || "default task".into())?;
    ensure(cfg.group_size == 8 && cfg.batch_size == 16 && cfg.steps >= 100, || "default config changed".into())?;
    ensure(ToyVocab::standard().len() <= 64, || "vocabulary too large".into())?;
    let (history, _) = train_toy::<f64>(&cfg).map_err(|e| e.to_string())?;
    let rewards: Vec<f64> = history.iter().map(|m| m.reward).collect();
    let (early, late) = (moving_average(&rewards, 10), moving_average(&rewards, 100));
    let (h0, h100) = (history[0].entropy, history[99].entropy);
    ensure(late > early, || format!("reward MA10 {early:.3} -> {late:.3}"))?;
    ensure(h100 < h0, || format!("entropy {h0:.3} -> {h100:.3}"))?;
    Ok(format!("reward MA10 {early:.3} -> {late:.3}, entropy {h0:.3} -> {h100:.3}"))
}

pub fn tool_frequency() -> Check {
    let calc = gen_calculator(30, 3);
    let facts = gen_fact_lookup(20, 3);
    // calculator items alternate between one and two code calls
    let policy = ScriptedPolicy::new(|item, _, _| {
        let mut chunks: Vec<String> = Vec::new();
        match program_for(&item.question) {
            Some(program) => {
                let calls = 1 + item.id.bytes().last().map_or(0, |b| usize::from(b % 2));
                for _ in 0..calls {
                    chunks.extend(["<code>".to_string(), program.clone(), "</code>".to_string()]);
                }
            }
            None => chunks.extend(["<search>".to_string(), item.question.clone(), "</search>".to_string()]),
        }
        chunks.extend(["<answer>".to_string(), item.answer.clone(), "</answer>".to_string()]);
        Script::once(chunks)
    });
    let expected_code = calc.iter().map(|i| 1 + usize::from(i.id.bytes().last().unwrap() % 2)).sum::<usize>() as f64
        / calc.len() as f64;
    let items: Vec<QAItem> = calc.iter().chain(&facts.items).cloned().collect();
    let report = evaluate(&policy, &Gateway::mock(facts.search), &items, &RolloutLimits::new(3, 64, 2, 1), 0);
    let c = report.datasets.get("calculator").ok_or("no calculator row")?;
    let f = report.datasets.get("nq").ok_or("no nq row")?;
    ensure(c.mean_code_calls == expected_code && c.mean_search_calls == 0.0, || format!("calculator {c:?}"))?;
    ensure(f.mean_search_calls == 1.0 && f.mean_code_calls == 0.0, || format!("nq {f:?}"))?;
    ensure(c.errors == 0 && f.errors == 0, || "rollout errors".into())?;
    Ok(format!("calculator code {:.3} search 0, nq search 1 code 0", c.mean_code_calls))
}

/// 1,000 queries drawn from `clusters` well-separated bases: verbatim
/// repeats, case and spacing variants, and single-character edits.
pub fn cache_queries(clusters: usize, total: usize, seed: u64) -> (Vec<String>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = [
        "river", "quantum", "baroque", "glacier", "senate", "violin", "harbor", "enzyme", "comet", "pharaoh", "tundra",
        "sonnet", "magnet", "orchid", "canyon", "treaty", "falcon", "opera", "volcano", "alloy",
    ];
    let mut bases: Vec<String> = Vec::new();
    while bases.len() < clusters {
        let picked: Vec<&str> = words.choose_multiple(&mut rng, 5).copied().collect();
        let candidate = picked.join(" ");
        let key = normalize_query(&candidate);
        if bases.iter().all(|b| similarity(&normalize_query(b), &key) < 0.7) {
            bases.push(candidate);
        }
    }
    let mut queries: Vec<String> = bases.clone();
    while queries.len() < total {
        let base = &bases[rng.gen_range(0..bases.len())];
        let q = match rng.gen_range(0..3) {
            0 => base.clone(),
            1 => format!("  {}", base.to_uppercase().replace(' ', "   ")),
            _ => {
                let mut chars: Vec<char> = base.chars().collect();
                let pos = rng.gen_range(0..chars.len());
                chars[pos] = if chars[pos] == 'z' { 'q' } else { 'z' };
                chars.into_iter().collect()
            }
        };
        queries.push(q);
    }
    // shuffle everything after the bases so each cluster is seeded by its base
    queries[clusters..].shuffle(&mut rng);
    (bases, queries)
}

pub fn cache_behavior() -> Check {
    let (bases, queries) = cache_queries(50, 1000, 23);
    let keys: Vec<String> = bases.iter().map(|b| normalize_query(b)).collect();
    for (i, a) in keys.iter().enumerate() {
        for b in &keys[i + 1..] {
            ensure(similarity(a, b) <= 0.9, || format!("bases too close: {a} / {b}"))?;
        }
    }
    let backend = Arc::new(FixtureSearch::new());
    let client = SearchClient::in_memory(Box::new(backend.clone()));
    let mut stored: HashSet<String> = HashSet::new();
    let mut fuzzy = 0;
    for q in &queries {
        let key = normalize_query(q);
        let (_, tier) = client.lookup(q).map_err(|e| e.to_string())?;
        if stored.contains(&key) {
            ensure(tier == Tier::Exact, || format!("{q:?} stored but served by {tier:?}"))?;
        }
        match tier {
            Tier::Backend => {
                stored.insert(key);
            }
            Tier::Fuzzy => fuzzy += 1,
            Tier::Exact => {}
        }
    }
    ensure(backend.calls() == bases.len(), || {
        format!("{} backend calls for {} clusters", backend.calls(), bases.len())
    })?;
    ensure(client.stats().backend_calls == bases.len(), || "stats disagree with backend".into())?;
    Ok(format!("{} queries, {} backend calls, {fuzzy} fuzzy hits", queries.len(), backend.calls()))
}
