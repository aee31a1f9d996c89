use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Scorer family applied to an item's extracted answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Fact,
    MathExact,
    MathAbsTol,
    MathRelTol,
}

impl QuestionType {
    pub const ALL: [QuestionType; 4] =
        [QuestionType::Fact, QuestionType::MathExact, QuestionType::MathAbsTol, QuestionType::MathRelTol];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Fact => "fact",
            QuestionType::MathExact => "math_exact",
            QuestionType::MathAbsTol => "math_abs_tol",
            QuestionType::MathRelTol => "math_rel_tol",
        }
    }

    /// Type implied by a known source dataset tag, matched case-insensitively
    /// on its leading name (`Calculator-6K` maps like `calculator`).
    pub fn for_dataset(dataset: &str) -> Option<QuestionType> {
        let tag = dataset.to_ascii_lowercase();
        let known = [
            ("nq", QuestionType::Fact),
            ("gsm8k", QuestionType::MathExact),
            ("dapo-math", QuestionType::MathExact),
            ("deepmath", QuestionType::MathExact),
            ("calculator", QuestionType::MathAbsTol),
            ("complex", QuestionType::MathRelTol),
        ];
        known.iter().find_map(|(name, ty)| {
            let rest = tag.strip_prefix(name)?;
            (rest.is_empty() || rest.starts_with('-') || rest.starts_with('_')).then_some(*ty)
        })
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QuestionType::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| format!("unknown question type `{s}`"))
    }
}

/// One question with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QAItem {
    pub id: String,
    pub question: String,
    pub answer: String,
    #[serde(rename = "type")]
    pub qtype: QuestionType,
    pub dataset: String,
}

impl QAItem {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        answer: impl Into<String>,
        qtype: QuestionType,
        dataset: impl Into<String>,
    ) -> Self {
        Self { id: id.into(), question: question.into(), answer: answer.into(), qtype, dataset: dataset.into() }
    }
}
