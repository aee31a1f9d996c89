//! Group advantages, clipped token-level objectives, a tabular toy policy
//! with exact gradients, and the training loop.

mod advantages;
pub mod objective;
pub mod toy;
pub mod train;

use thiserror::Error;

pub use self::advantages::{group_advantages, is_valid_group};
pub use self::objective::{
    exact_kl, grpo_objective, tapo_objective, token_term, ClipBounds, ObjectiveInputs, ObjectiveValue, TokenSeries,
};
pub use self::toy::{
    entropy, grad_check, toy_logprobs, toy_objective, GradCheckReport, ToyLogprobs, ToyPolicy, ToySample, ToyToken,
    ToyVocab,
};
pub use self::train::{train_toy, Checkpoint, ToyTask, TrainConfig, TrainError, TrainMetrics, Trainer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("a group needs at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("rewards have zero spread; filter the group out first")]
    ZeroStd,
    #[error("length mismatch: {new} new log-probs, {old} old log-probs, {mask} mask bits")]
    ShapeMismatch { new: usize, old: usize, mask: usize },
    #[error("clip bounds need high >= low > 0, got low={low} high={high}")]
    BadClip { low: f64, high: f64 },
    #[error("no masked tokens in the batch")]
    EmptyMask,
    #[error("token id {0} is outside the vocabulary")]
    OutOfVocab(u32),
    #[error("token id {0} cannot be emitted by the policy")]
    NotEmittable(u32),
}
