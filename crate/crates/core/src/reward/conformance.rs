//! Replay of reward conformance vectors stored as JSONL.
//!
//! Each line is `{type, o, gt, expected_score}` with optional `name`,
//! `model_tokens` and `budget`. `type` selects what is scored:
//!
//! * `fact`, `math_exact`, `math_abs_tol`, `math_rel_tol`: the accuracy scorer on `(o, gt)`
//! * `length_penalty`: `o` holds the model-token count, `budget` is required
//! * `format`: 1 when `o` passes the format gate, else 0
//! * `total:<question type>`: `o` is a whole trajectory text, scored with
//!   `model_tokens` and `budget`
//!
//! Scores are compared bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{accuracy, length_penalty, score_text, LengthBudget};
use crate::data::QuestionType;
use crate::tags::check_format;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConformanceVector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "type")]
    pub kind: String,
    pub o: String,
    pub gt: String,
    pub expected_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_tokens: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<LengthBudget>,
}

#[derive(Debug, Error)]
pub enum ConformanceError {
    #[error("cannot read vector file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub label: String,
    pub expected: f64,
    pub actual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConformanceReport {
    pub total: usize,
    pub mismatches: Vec<Mismatch>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

impl ConformanceVector {
    pub fn evaluate(&self) -> Result<f64, String> {
        let budget = || self.budget.ok_or_else(|| format!("type `{}` needs a budget", self.kind));
        match self.kind.as_str() {
            "length_penalty" => {
                let tokens: usize = self.o.trim().parse().map_err(|_| format!("bad token count `{}`", self.o))?;
                Ok(length_penalty::<f64>(tokens, budget()?))
            }
            "format" => Ok(if check_format(&self.o) { 1.0 } else { 0.0 }),
            kind => {
                if let Some(qtype) = kind.strip_prefix("total:") {
                    let qtype: QuestionType = qtype.parse()?;
                    let tokens = self.model_tokens.ok_or("total vectors need model_tokens")?;
                    Ok(score_text(&self.o, tokens, qtype, &self.gt, budget()?).total)
                } else {
                    let qtype: QuestionType = kind.parse()?;
                    Ok(accuracy(qtype, &self.o, &self.gt))
                }
            }
        }
    }
}

pub fn parse_vectors(contents: &str) -> Result<Vec<(usize, ConformanceVector)>, ConformanceError> {
    contents
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|v| (i + 1, v))
                .map_err(|e| ConformanceError::Parse { line: i + 1, message: e.to_string() })
        })
        .collect()
}

pub fn run_vectors(vectors: &[(usize, ConformanceVector)]) -> Result<ConformanceReport, ConformanceError> {
    let mut report = ConformanceReport { total: vectors.len(), ..Default::default() };
    for (line, v) in vectors {
        let label = match &v.name {
            Some(name) => format!("{name} (line {line})"),
            None => format!("line {line}"),
        };
        let actual = v.evaluate().map_err(|message| ConformanceError::Parse { line: *line, message })?;
        if actual.to_bits() != v.expected_score.to_bits() && !(actual == 0.0 && v.expected_score == 0.0) {
            report.mismatches.push(Mismatch { label, expected: v.expected_score, actual });
        }
    }
    Ok(report)
}

pub fn run_file(path: impl AsRef<Path>) -> Result<ConformanceReport, ConformanceError> {
    let contents = fs::read_to_string(path)?;
    run_vectors(&parse_vectors(&contents)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mismatch_is_reported_by_name() {
        let text = r#"{"name":"ok","type":"math_exact","o":"42","gt":"42","expected_score":1.0}
{"name":"wrong","type":"math_exact","o":"41","gt":"42","expected_score":1.0}"#;
        let report = run_vectors(&parse_vectors(text).unwrap()).unwrap();
        assert_eq!(report.total, 2);
        assert_eq!(report.mismatches.len(), 1);
        assert_eq!(report.mismatches[0].label, "wrong (line 2)");
    }

    #[test]
    fn empty_input_has_no_vectors() {
        let report = run_vectors(&parse_vectors("\n\n").unwrap()).unwrap();
        assert_eq!(report.total, 0);
        assert!(report.passed());
    }

    #[test]
    fn total_and_penalty_kinds() {
        let text = r#"{"type":"length_penalty","o":"90","gt":"","expected_score":-0.5,"budget":{"l_max":100,"l_cache":20}}
{"type":"total:math_exact","o":"<answer>42</answer>","gt":"42","expected_score":0.5,"model_tokens":90,"budget":{"l_max":100,"l_cache":20}}
{"type":"format","o":"<answer>x","gt":"","expected_score":0.0}"#;
        assert!(run_vectors(&parse_vectors(text).unwrap()).unwrap().passed());
    }

    #[test]
    fn malformed_line_names_line() {
        let err = parse_vectors("{}\n").unwrap_err();
        assert!(err.to_string().starts_with("line 1"));
    }
}
