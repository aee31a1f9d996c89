//! Rule-based rewarding: a format gate, type-specific accuracy scorers, a soft
//! length penalty over model-generated tokens, and their additive total.

pub mod conformance;
mod levenshtein;

use serde::{Deserialize, Serialize};

pub use self::levenshtein::levenshtein;
use crate::data::{QAItem, QuestionType};
use crate::rollout::Trajectory;
use crate::scalar::Scalar;
use crate::tags::{check_format, extract_last, Tag};

/// Absolute tolerance of the calculator scorer.
pub const ABS_TOLERANCE: f64 = 0.001;
/// Relative tolerance of the comprehensive-question scorer.
pub const REL_TOLERANCE: f64 = 0.005;
/// Normalized edit distance above which a fact answer scores zero.
pub const FACT_MAX_RATIO: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBudget {
    pub l_max: usize,
    pub l_cache: usize,
}

impl LengthBudget {
    pub fn new(l_max: usize, l_cache: usize) -> Result<Self, String> {
        if l_cache == 0 || l_cache >= l_max {
            return Err(format!("length budget needs 0 < l_cache < l_max, got l_cache={l_cache} l_max={l_max}"));
        }
        Ok(Self { l_max, l_cache })
    }

    /// Default soft window of one eighth of the hard limit (at least one token).
    pub fn with_default_cache(l_max: usize) -> Result<Self, String> {
        Self::new(l_max, (l_max / 8).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_acc: f64,
    pub r_length: f64,
    pub total: f64,
    pub format_ok: bool,
    pub extracted_answer: Option<String>,
}

/// Lowercase, trim and collapse internal whitespace runs to one space.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

pub fn f_fact(o: &str, gt: &str) -> f64 {
    let (o, gt) = (normalize_answer(o), normalize_answer(gt));
    let longest = o.chars().count().max(gt.chars().count());
    if longest == 0 {
        return 1.0;
    }
    let r = levenshtein(&o, &gt) as f64 / longest as f64;
    if r > FACT_MAX_RATIO {
        0.0
    } else {
        1.0 - r
    }
}

fn parse_number(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Numeric equality when both sides parse, trimmed string equality otherwise.
pub fn f_math_exact(o: &str, gt: &str) -> f64 {
    let equal = match (parse_number(o), parse_number(gt)) {
        (Some(a), Some(b)) => a == b,
        _ => o.trim() == gt.trim(),
    };
    if equal {
        1.0
    } else {
        0.0
    }
}

pub fn f_math_abs_tol(o: &str, gt: &str) -> f64 {
    match (parse_number(o), parse_number(gt)) {
        (Some(a), Some(b)) if (a - b).abs() <= ABS_TOLERANCE => 1.0,
        _ => 0.0,
    }
}

pub fn f_math_rel_tol(o: &str, gt: &str) -> f64 {
    match (parse_number(o), parse_number(gt)) {
        (Some(a), Some(0.0)) => f64::from(u8::from(a == 0.0)),
        (Some(a), Some(b)) if (a - b).abs() <= REL_TOLERANCE * b.abs() => 1.0,
        _ => 0.0,
    }
}

pub fn accuracy(qtype: QuestionType, o: &str, gt: &str) -> f64 {
    match qtype {
        QuestionType::Fact => f_fact(o, gt),
        QuestionType::MathExact => f_math_exact(o, gt),
        QuestionType::MathAbsTol => f_math_abs_tol(o, gt),
        QuestionType::MathRelTol => f_math_rel_tol(o, gt),
    }
}

/// Whether an accuracy score counts as a pass for pass@1 reporting.
pub fn is_pass(qtype: QuestionType, score: f64) -> bool {
    match qtype {
        QuestionType::Fact => score > FACT_MAX_RATIO,
        QuestionType::MathExact | QuestionType::MathAbsTol | QuestionType::MathRelTol => score >= 1.0,
    }
}

/// Soft overlong penalty on the count of model-generated tokens.
pub fn length_penalty<F: Scalar>(model_tokens: usize, budget: LengthBudget) -> F {
    let soft_start = budget.l_max - budget.l_cache;
    if model_tokens <= soft_start {
        F::zero()
    } else if model_tokens < budget.l_max {
        (F::from_usize_lossy(soft_start) - F::from_usize_lossy(model_tokens)) / F::from_usize_lossy(budget.l_cache)
    } else {
        -F::one()
    }
}

/// Scores raw trajectory text given its model-token count.
pub fn score_text(
    text: &str,
    model_tokens: usize,
    qtype: QuestionType,
    gt: &str,
    budget: LengthBudget,
) -> RewardBreakdown {
    let format_ok = check_format(text);
    let extracted_answer = extract_last(text, Tag::Answer).map(|s| s.trim().to_string());
    let r_acc = match (&extracted_answer, format_ok) {
        (Some(answer), true) => accuracy(qtype, answer, gt),
        _ => -1.0,
    };
    let r_length = length_penalty::<f64>(model_tokens, budget);
    RewardBreakdown { r_acc, r_length, total: r_acc + r_length, format_ok, extracted_answer }
}

pub fn score(trajectory: &Trajectory, item: &QAItem, budget: LengthBudget) -> RewardBreakdown {
    score_text(&trajectory.text(), trajectory.model_token_count(), item.qtype, &item.answer, budget)
}
