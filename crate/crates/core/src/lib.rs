//! Tool-augmented rollouts with rule-based rewards and masked, clipped
//! token-level policy optimization.
//!
//! - [`tags`] parses the tag protocol (`<think>`, `<search>`, `<code>`,
//!   `<answer>`, `<response>`).
//! - [`rollout`] interleaves policy generation with tool calls.
//! - [`tools`] hosts the cached search client, the interpreter client and
//!   offline mocks.
//! - [`reward`] scores trajectories.
//! - [`optim`] holds advantages, objectives, the toy policy and training.
//! - [`data`] generates, loads and evaluates datasets.

pub mod data;
pub mod optim;
pub mod reward;
pub mod rollout;
pub mod scalar;
pub mod tags;
pub mod tools;

pub use data::{QAItem, QuestionType};
pub use optim::{ClipBounds, OptimError, ToyPolicy, TrainConfig, TrainMetrics, Trainer};
pub use reward::{score, LengthBudget, RewardBreakdown};
pub use rollout::{run_group, run_rollout, PolicyBackend, RolloutLimits, Trajectory};
pub use scalar::Scalar;
pub use tools::{Gateway, ToolGateway, ToolKind};

pub type ToyPolicyF64 = ToyPolicy<f64>;
pub type ToyPolicyF32 = ToyPolicy<f32>;
pub type TrainerF64 = Trainer<f64>;
pub type TrainerF32 = Trainer<f32>;
pub type ClipBoundsF64 = ClipBounds<f64>;
pub type ClipBoundsF32 = ClipBounds<f32>;
