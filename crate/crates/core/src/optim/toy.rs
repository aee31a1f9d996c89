//! Tabular softmax policy over a tiny vocabulary.
//!
//! The context is the last `window` token ids (tool tokens included), padded
//! with a BOS id. Each context owns one row of logits; only emittable tokens
//! take part in the softmax. Placeholder tokens render from the item:
//! `PROGRAM` is the calculator program for the question, `QUERY` the question
//! itself, and `COPY` the last tool response (stdout, or the first search
//! title).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{tapo_objective, ClipBounds, ObjectiveInputs, TokenSeries};
use super::OptimError;
use crate::data::program_for;
use crate::rollout::{Emission, Origin, PolicyBackend, PolicyContext, PolicyError, TokenRecord, Trajectory};
use crate::scalar::{pairwise_sum, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToyToken {
    Literal(String),
    Program,
    Query,
    Copy,
    ToolOpen,
    ToolBody,
    ToolClose,
}

impl ToyToken {
    pub fn emittable(&self) -> bool {
        !matches!(self, ToyToken::ToolOpen | ToyToken::ToolBody | ToyToken::ToolClose)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyVocab {
    pub tokens: Vec<ToyToken>,
}

impl ToyVocab {
    pub fn literals<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Self {
        Self { tokens: words.into_iter().map(|w| ToyToken::Literal(w.into())).collect() }
    }

    /// Tag protocol plus placeholders and tool tokens (16 symbols).
    pub fn standard() -> Self {
        let lit = |s: &str| ToyToken::Literal(s.to_string());
        Self {
            tokens: vec![
                lit("<think>"),
                lit("</think>"),
                lit("<search>"),
                lit("</search>"),
                lit("<code>"),
                lit("</code>"),
                lit("<answer>"),
                lit("</answer>"),
                ToyToken::Program,
                ToyToken::Query,
                ToyToken::Copy,
                lit("0"),
                lit("hmm "),
                ToyToken::ToolOpen,
                ToyToken::ToolBody,
                ToyToken::ToolClose,
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id_of(&self, token: &ToyToken) -> Option<u32> {
        self.tokens.iter().position(|t| t == token).map(|i| i as u32)
    }

    fn literal_id(&self, text: &str) -> Option<usize> {
        self.tokens.iter().position(|t| matches!(t, ToyToken::Literal(s) if s == text))
    }
}

/// The body of the most recent tool response in `history`.
fn last_tool_body(history: &[TokenRecord]) -> Option<&str> {
    let close = history.iter().rposition(|r| r.origin == Origin::Tool)?;
    let open = history[..=close].iter().rposition(|r| r.origin == Origin::Model).map_or(0, |i| i + 1);
    let body: Vec<&TokenRecord> =
        history[open..=close].iter().filter(|r| r.text != "<response>" && r.text != "</response>").collect();
    body.first().map(|r| r.text.as_str())
}

/// Text a `COPY` token renders to for a given response body.
pub fn copy_text(body: &str) -> String {
    let first = body.trim().lines().next().unwrap_or("").trim();
    if let Some(rest) = first.strip_prefix("Doc 1: (") {
        if let Some((label_title, _)) = rest.split_once(')') {
            if let Some((_, title)) = label_title.split_once(": ") {
                return title.trim().to_string();
            }
        }
    }
    first.to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy<F> {
    pub vocab: ToyVocab,
    pub window: usize,
    pub temperature: F,
    /// Row-major `[context][token]` logits.
    pub theta: Vec<F>,
}

impl<F: Scalar> ToyPolicy<F> {
    pub fn uniform(vocab: ToyVocab, window: usize, temperature: F) -> Self {
        let n = (vocab.len() + 1).pow(window as u32) * vocab.len();
        Self { vocab, window, temperature, theta: vec![F::zero(); n] }
    }

    /// Independent normal logits with standard deviation `scale`.
    pub fn random(vocab: ToyVocab, window: usize, temperature: F, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::uniform(vocab, window, temperature);
        for v in &mut p.theta {
            // Box-Muller keeps the draw on ChaCha without extra dependencies.
            let (u1, u2): (f64, f64) = (rng.gen_range(f64::EPSILON..1.0), rng.gen());
            *v = F::from_f64_lossy(scale * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos());
        }
        p
    }

    /// Adds `strength` to the logits of grammatical continuations of the
    /// previous token, as a stand-in for a model that already knows the
    /// markup. No-op for tokens missing from the vocabulary.
    pub fn with_protocol_prior(mut self, strength: F) -> Self {
        let v = self.vocab.clone();
        let id = |s: &str| v.literal_id(s);
        let ph = |t: ToyToken| v.id_of(&t).map(|i| i as usize);
        let openers: Vec<usize> = ["<think>", "<search>", "<code>", "<answer>"].iter().filter_map(|s| id(s)).collect();
        let filler = id("hmm ");
        // (previous token, favoured next tokens); `None` keys are BOS
        let mut rules: Vec<(Option<usize>, Vec<usize>)> = vec![(None, openers.clone())];
        let mut rule = |prev: Option<usize>, next: Vec<Option<usize>>| {
            if let Some(p) = prev {
                rules.push((Some(p), next.into_iter().flatten().collect()));
            }
        };
        rule(id("</think>"), openers.iter().copied().map(Some).collect());
        rule(ph(ToyToken::ToolClose), openers.iter().copied().map(Some).collect());
        rule(id("<think>"), vec![filler]);
        rule(filler, vec![filler, id("</think>")]);
        rule(id("<search>"), vec![ph(ToyToken::Query)]);
        rule(ph(ToyToken::Query), vec![id("</search>")]);
        rule(id("<code>"), vec![ph(ToyToken::Program)]);
        rule(ph(ToyToken::Program), vec![id("</code>")]);
        rule(id("<answer>"), vec![ph(ToyToken::Copy), id("0")]);
        rule(ph(ToyToken::Copy), vec![id("</answer>")]);
        rule(id("0"), vec![id("</answer>")]);
        let (n_vocab, bos) = (v.len(), self.bos());
        for ctx in 0..self.num_contexts() {
            let last = ctx % (n_vocab + 1);
            for (prev, next) in &rules {
                if prev.unwrap_or(bos) == last {
                    for &b in next {
                        self.theta[ctx * n_vocab + b] += strength;
                    }
                }
            }
        }
        self
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn bos(&self) -> usize {
        self.vocab.len()
    }

    pub fn num_contexts(&self) -> usize {
        (self.vocab.len() + 1).pow(self.window as u32)
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    /// Context index of position `pos` given the preceding token ids; the
    /// most recent token is the least significant digit.
    pub fn context_index(&self, ids: &[u32], pos: usize) -> usize {
        let base = self.vocab.len() + 1;
        let mut idx = 0;
        let mut scale = 1;
        for k in 1..=self.window {
            let digit = if pos >= k { ids[pos - k] as usize } else { self.bos() };
            idx += digit * scale;
            scale *= base;
        }
        idx
    }

    /// Softmax over emittable tokens at `ctx`; non-emittable entries are 0.
    pub fn distribution(&self, ctx: usize) -> Vec<F> {
        let v = self.vocab.len();
        let row = &self.theta[ctx * v..(ctx + 1) * v];
        let emit: Vec<bool> = self.vocab.tokens.iter().map(ToyToken::emittable).collect();
        let max = row.iter().zip(&emit).filter(|(_, &e)| e).map(|(&x, _)| x).fold(F::neg_infinity(), F::max);
        let exps: Vec<F> = row
            .iter()
            .zip(&emit)
            .map(|(&x, &e)| if e { ((x - max) / self.temperature).exp() } else { F::zero() })
            .collect();
        let z = pairwise_sum(&exps);
        exps.into_iter().map(|e| e / z).collect()
    }

    /// Adds `weight * d log π(token | ctx) / dθ` into `grad`.
    pub fn accumulate_logprob_grad(&self, ctx: usize, token: usize, weight: F, grad: &mut [F]) {
        let v = self.vocab.len();
        let dist = self.distribution(ctx);
        let scale = weight / self.temperature;
        for (b, &p) in dist.iter().enumerate() {
            if !self.vocab.tokens[b].emittable() {
                continue;
            }
            let indicator = if b == token { F::one() } else { F::zero() };
            grad[ctx * v + b] += scale * (indicator - p);
        }
    }

    fn render(&self, token: usize, ctx: &PolicyContext<'_>) -> String {
        match &self.vocab.tokens[token] {
            ToyToken::Literal(s) => s.clone(),
            ToyToken::Program => program_for(&ctx.item.question).unwrap_or_else(|| "print(0)".to_string()),
            ToyToken::Query => ctx.item.question.clone(),
            ToyToken::Copy => last_tool_body(ctx.history).map(copy_text).unwrap_or_default(),
            ToyToken::ToolOpen | ToyToken::ToolBody | ToyToken::ToolClose => unreachable!("never sampled"),
        }
    }
}

impl<F: Scalar> PolicyBackend for ToyPolicy<F> {
    fn next_token(&self, ctx: &PolicyContext<'_>, rng: &mut ChaCha8Rng) -> Result<Emission, PolicyError> {
        let mut ids: Vec<u32> = ctx.history.iter().map(|r| r.token_id).collect();
        if let Some(bad) = ids.iter().find(|&&id| id as usize >= self.vocab.len()) {
            return Err(PolicyError::Backend(format!("token id {bad} outside the toy vocabulary")));
        }
        ids.push(0);
        let c = self.context_index(&ids, ids.len() - 1);
        let dist: Vec<f64> = self.distribution(c).into_iter().map(Scalar::to_f64_lossy).collect();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = None;
        for (b, &p) in dist.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            chosen = Some(b);
            acc += p;
            if u < acc {
                break;
            }
        }
        let token = chosen.ok_or_else(|| PolicyError::Backend("no emittable token".into()))?;
        Ok(Emission {
            token_id: token as u32,
            text: self.render(token, ctx),
            logprob: dist[token].ln(),
            distribution: Some(dist),
        })
    }

    fn tokenize_tool_response(&self, body: &str) -> Vec<(u32, String)> {
        let ids = (
            self.vocab.id_of(&ToyToken::ToolOpen),
            self.vocab.id_of(&ToyToken::ToolBody),
            self.vocab.id_of(&ToyToken::ToolClose),
        );
        match ids {
            (Some(open), Some(body_id), Some(close)) => {
                vec![(open, "<response>".into()), (body_id, body.to_string()), (close, "</response>".into())]
            }
            _ => {
                let mut out = vec![(crate::rollout::TOOL_OPEN_ID, "<response>".to_string())];
                if !body.is_empty() {
                    out.push((crate::rollout::TOOL_BODY_ID, body.to_string()));
                }
                out.push((crate::rollout::TOOL_CLOSE_ID, "</response>".to_string()));
                out
            }
        }
    }
}

/// Per-position log-probabilities of a trajectory under a toy policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyLogprobs<F> {
    /// 0 at tool positions.
    pub logp: Vec<F>,
    pub mask: Vec<bool>,
    pub contexts: Vec<usize>,
    /// Full distribution at each model position, `None` at tool positions.
    pub distributions: Vec<Option<Vec<F>>>,
}

pub fn toy_logprobs<F: Scalar>(policy: &ToyPolicy<F>, trajectory: &Trajectory) -> Result<ToyLogprobs<F>, OptimError> {
    let ids: Vec<u32> = trajectory.records.iter().map(|r| r.token_id).collect();
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= policy.vocab_size()) {
        return Err(OptimError::OutOfVocab(bad));
    }
    let mut out = ToyLogprobs {
        logp: Vec::with_capacity(ids.len()),
        mask: Vec::with_capacity(ids.len()),
        contexts: Vec::with_capacity(ids.len()),
        distributions: Vec::with_capacity(ids.len()),
    };
    for (pos, record) in trajectory.records.iter().enumerate() {
        let ctx = policy.context_index(&ids, pos);
        out.contexts.push(ctx);
        if record.origin == Origin::Tool {
            out.logp.push(F::zero());
            out.mask.push(false);
            out.distributions.push(None);
            continue;
        }
        let token = record.token_id as usize;
        if !policy.vocab.tokens[token].emittable() {
            return Err(OptimError::NotEmittable(record.token_id));
        }
        let dist = policy.distribution(ctx);
        out.logp.push(dist[token].ln());
        out.mask.push(true);
        out.distributions.push(Some(dist));
    }
    Ok(out)
}

/// Shannon entropy in nats.
pub fn entropy<F: Scalar>(dist: &[F]) -> F {
    let parts: Vec<F> = dist.iter().filter(|&&p| p > F::zero()).map(|&p| -p * p.ln()).collect();
    pairwise_sum(&parts)
}

/// One trajectory with its advantage and behavior log-probabilities.
#[derive(Debug, Clone)]
pub struct ToySample<F> {
    pub trajectory: Trajectory,
    pub advantage: F,
    pub logp_old: Vec<F>,
}

impl<F: Scalar> ToySample<F> {
    /// Uses the behavior log-probabilities recorded at rollout time.
    pub fn from_rollout(trajectory: Trajectory, advantage: F) -> Self {
        let logp_old = trajectory.records.iter().map(|r| F::from_f64_lossy(r.logprob.unwrap_or(0.0))).collect();
        Self { trajectory, advantage, logp_old }
    }
}

/// Token-level objective of `samples` under `policy` and its gradient in θ.
pub fn toy_objective<F: Scalar>(
    policy: &ToyPolicy<F>,
    samples: &[ToySample<F>],
    clip: ClipBounds<F>,
) -> Result<(F, Vec<F>), OptimError> {
    let lps = samples.iter().map(|s| toy_logprobs(policy, &s.trajectory)).collect::<Result<Vec<_>, _>>()?;
    let series = samples
        .iter()
        .zip(&lps)
        .map(|(s, lp)| TokenSeries {
            logp_new: lp.logp.clone(),
            logp_old: s.logp_old.clone(),
            mask: lp.mask.clone(),
            advantage: s.advantage,
        })
        .collect();
    let value = tapo_objective(&ObjectiveInputs { groups: vec![series], clip })?;
    let mut grad = vec![F::zero(); policy.num_params()];
    for ((s, lp), dl) in samples.iter().zip(&lps).zip(&value.dlogp[0]) {
        for (pos, record) in s.trajectory.records.iter().enumerate() {
            if lp.mask[pos] && dl[pos] != F::zero() {
                policy.accumulate_logprob_grad(lp.contexts[pos], record.token_id as usize, dl[pos], &mut grad);
            }
        }
    }
    Ok((value.value, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compares the analytic gradient with central differences of step `h`, over
/// parameters whose analytic gradient exceeds 1e-8 in magnitude.
pub fn grad_check<F: Scalar>(
    policy: &ToyPolicy<F>,
    samples: &[ToySample<F>],
    clip: ClipBounds<F>,
    h: F,
) -> Result<GradCheckReport, OptimError> {
    let (_, grad) = toy_objective(policy, samples, clip)?;
    let mut probe = policy.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0 };
    for (j, g) in grad.iter().enumerate() {
        let analytic = g.to_f64_lossy();
        if analytic.abs() <= 1e-8 {
            continue;
        }
        let base = probe.theta[j];
        probe.theta[j] = base + h;
        let plus = toy_objective(&probe, samples, clip)?.0;
        probe.theta[j] = base - h;
        let minus = toy_objective(&probe, samples, clip)?.0;
        probe.theta[j] = base;
        let numeric = ((plus - minus) / (h + h)).to_f64_lossy();
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}
