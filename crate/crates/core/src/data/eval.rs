use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::QAItem;
use crate::reward::{accuracy, is_pass};
use crate::rollout::{derive_seed, run_rollout, PolicyBackend, RolloutLimits, Trajectory};
use crate::tags::{check_format, extract_last, Tag};
use crate::tools::{ToolGateway, ToolKind};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub items: usize,
    pub passed: usize,
    /// Rollouts that aborted with an error; counted as failures.
    pub errors: usize,
    pub pass_at_1: f64,
    pub mean_search_calls: f64,
    pub mean_code_calls: f64,
    pub mean_length: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total_items: usize,
    pub datasets: BTreeMap<String, DatasetStats>,
}

/// Whether a finished trajectory answers `item` correctly.
pub fn is_correct(t: &Trajectory, item: &QAItem) -> bool {
    let text = t.text();
    if !check_format(&text) {
        return false;
    }
    extract_last(&text, Tag::Answer).is_some_and(|a| is_pass(item.qtype, accuracy(item.qtype, a.trim(), &item.answer)))
}

struct Outcome {
    correct: bool,
    failed: bool,
    search: usize,
    code: usize,
    length: usize,
}

/// One rollout per item, aggregated per dataset tag.
pub fn evaluate(
    policy: &dyn PolicyBackend,
    tools: &dyn ToolGateway,
    items: &[QAItem],
    limits: &RolloutLimits,
    seed: u64,
) -> EvalReport {
    let outcomes: Vec<Outcome> = items
        .par_iter()
        .map(|item| match run_rollout(item, policy, tools, limits, derive_seed(seed, &item.id, 0), 0) {
            Ok(t) => Outcome {
                correct: is_correct(&t, item),
                failed: false,
                search: t.calls_of(ToolKind::Search),
                code: t.calls_of(ToolKind::Code),
                length: t.model_token_count(),
            },
            Err(e) => {
                log::warn!("rollout for item {} failed: {e}", item.id);
                Outcome { correct: false, failed: true, search: 0, code: 0, length: 0 }
            }
        })
        .collect();

    let mut sums: BTreeMap<String, (DatasetStats, usize, usize, usize)> = BTreeMap::new();
    for (item, o) in items.iter().zip(&outcomes) {
        let entry = sums.entry(item.dataset.clone()).or_default();
        entry.0.items += 1;
        entry.0.passed += usize::from(o.correct);
        entry.0.errors += usize::from(o.failed);
        entry.1 += o.search;
        entry.2 += o.code;
        entry.3 += o.length;
    }
    let datasets = sums
        .into_iter()
        .map(|(name, (mut s, search, code, length))| {
            let n = s.items as f64;
            s.pass_at_1 = s.passed as f64 / n;
            s.mean_search_calls = search as f64 / n;
            s.mean_code_calls = code as f64 / n;
            s.mean_length = length as f64 / n;
            (name, s)
        })
        .collect();
    EvalReport { total_items: items.len(), datasets }
}

impl EvalReport {
    /// Aligned-column text table, one row per dataset.
    pub fn to_table(&self) -> String {
        let header = ["dataset", "items", "pass@1", "search/rollout", "code/rollout", "length"];
        let mut rows: Vec<[String; 6]> = vec![header.map(String::from)];
        for (name, s) in &self.datasets {
            rows.push([
                name.clone(),
                s.items.to_string(),
                format!("{:.4}", s.pass_at_1),
                format!("{:.3}", s.mean_search_calls),
                format!("{:.3}", s.mean_code_calls),
                format!("{:.1}", s.mean_length),
            ]);
        }
        let widths: Vec<usize> = (0..6).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &rows {
            let cells: Vec<String> =
                row.iter()
                    .enumerate()
                    .map(|(c, cell)| {
                        if c == 0 {
                            format!("{cell:<w$}", w = widths[c])
                        } else {
                            format!("{cell:>w$}", w = widths[c])
                        }
                    })
                    .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::QuestionType;
    use crate::rollout::{Script, ScriptedPolicy};
    use crate::tools::{FixtureSearch, Gateway};

    fn items(n: usize) -> Vec<QAItem> {
        (0..n).map(|i| QAItem::new(format!("m{i:03}"), "q", "7", QuestionType::MathExact, "gsm8k")).collect()
    }

    fn limits() -> RolloutLimits {
        RolloutLimits::new(4, 32, 2, 1)
    }

    #[test]
    fn always_correct_and_never_answering() {
        let gw = Gateway::mock(FixtureSearch::new());
        let right = ScriptedPolicy::fixed(Script::once(["<code>print(7)</code>", "<answer>7</answer>"]));
        let report = evaluate(&right, &gw, &items(10), &limits(), 0);
        let s = &report.datasets["gsm8k"];
        assert_eq!((s.pass_at_1, s.mean_code_calls, s.mean_search_calls, s.mean_length), (1.0, 1.0, 0.0, 2.0));

        let silent = ScriptedPolicy::fixed(Script::cycling(["hmm "]));
        assert_eq!(evaluate(&silent, &gw, &items(10), &limits(), 0).datasets["gsm8k"].pass_at_1, 0.0);
    }

    #[test]
    fn half_right_is_exactly_half() {
        let policy = ScriptedPolicy::new(|item, _, _| {
            let n: usize = item.id[1..].parse().unwrap();
            let answer = if n.is_multiple_of(2) { "<answer>7</answer>" } else { "<answer>8</answer>" };
            Script::once([answer])
        });
        let report = evaluate(&policy, &Gateway::new(), &items(100), &limits(), 3);
        assert_eq!(report.datasets["gsm8k"].pass_at_1, 0.5);
        assert_eq!(report.datasets["gsm8k"].passed, 50);
        let table = report.to_table();
        assert!(table.lines().nth(1).unwrap().starts_with("gsm8k"), "{table}");
    }

    #[test]
    fn errors_count_as_failures() {
        let policy = ScriptedPolicy::fixed(Script::once(["<think>"]));
        let report = evaluate(&policy, &Gateway::new(), &items(4), &limits(), 0);
        assert_eq!(report.datasets["gsm8k"].errors, 4);
        assert_eq!(report.datasets["gsm8k"].pass_at_1, 0.0);
    }
}
