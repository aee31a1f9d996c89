//! Rollout, score, normalize, ascend: the toy training loop with metric
//! tracking and checkpoints.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::objective::{ClipBounds, DEFAULT_EPS_HIGH, DEFAULT_EPS_LOW};
use super::toy::{entropy, toy_logprobs, toy_objective, ToyPolicy, ToySample, ToyVocab};
use super::{group_advantages, OptimError};
use crate::data::{gen_calculator, gen_fact_lookup, QAItem};
use crate::reward::LengthBudget;
use crate::rollout::{collect_batch, derive_seed, BatchOptions, RolloutError, RolloutLimits};
use crate::scalar::{pairwise_sum, Scalar};
use crate::tools::{CacheError, FixtureSearch, Gateway};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyTask {
    Calculator,
    FactLookup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub task: ToyTask,
    pub steps: usize,
    pub batch_size: usize,
    pub group_size: usize,
    pub max_turns: usize,
    pub max_response_length: usize,
    /// Soft penalty window; defaults to an eighth of `max_response_length`.
    pub l_cache: Option<usize>,
    pub seed: u64,
    pub n_items: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub inner_epochs: usize,
    pub eps_low: f64,
    pub eps_high: f64,
    pub temperature: f64,
    pub window: usize,
    /// Logit bonus for grammatical continuations at initialization.
    pub prior_strength: f64,
    /// Group rollouts allowed per step, as a multiple of `batch_size`.
    pub draw_factor: usize,
    pub rerolls: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: ToyTask::Calculator,
            steps: 100,
            batch_size: 16,
            group_size: 8,
            max_turns: 2,
            max_response_length: 16,
            l_cache: None,
            seed: 0,
            n_items: 256,
            learning_rate: 2.0,
            momentum: 0.0,
            inner_epochs: 1,
            eps_low: DEFAULT_EPS_LOW,
            eps_high: DEFAULT_EPS_HIGH,
            temperature: 1.0,
            window: 2,
            prior_strength: 2.0,
            draw_factor: 4,
            rerolls: 0,
        }
    }
}

impl TrainConfig {
    pub fn limits(&self) -> RolloutLimits {
        RolloutLimits::new(self.max_turns, self.max_response_length, self.group_size, self.batch_size)
    }

    pub fn budget(&self) -> Result<LengthBudget, TrainError> {
        match self.l_cache {
            Some(c) => LengthBudget::new(self.max_response_length, c),
            None => LengthBudget::with_default_cache(self.max_response_length),
        }
        .map_err(TrainError::Config)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.limits().validate().map_err(|e| TrainError::Config(e.to_string()))?;
        self.budget()?;
        if self.group_size < 2 {
            return Err(TrainError::Config(format!("group_size must be at least 2, got {}", self.group_size)));
        }
        if self.n_items == 0 || self.inner_epochs == 0 || self.draw_factor == 0 {
            return Err(TrainError::Config("n_items, inner_epochs and draw_factor must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(TrainError::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        ClipBounds::new(self.eps_low, self.eps_high)?;
        Ok(())
    }

    /// SHA-256 of the config with `steps` zeroed, so a run can be extended.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.steps = 0;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("objective became non-finite at step {step}")]
    Diverged { step: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub step: usize,
    /// Mean total reward over every sampled trajectory, discarded groups included.
    pub reward: f64,
    /// Mean policy entropy in nats over model positions.
    pub entropy: f64,
    /// Mean model-token length.
    pub length: f64,
    pub discards: usize,
    /// Objective at the behavior policy; 0 when no group had spread.
    pub objective: f64,
}

pub const METRICS_HEADER: [&str; 6] = ["step", "reward", "entropy", "length", "discards", "objective"];

/// Writes the header and one row per step.
pub fn write_metrics_csv<W: Write>(history: &[TrainMetrics], out: W) -> Result<(), TrainError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let csv_err = |e: csv::Error| TrainError::Io(io::Error::other(e));
    w.write_record(METRICS_HEADER).map_err(csv_err)?;
    for m in history {
        w.serialize(m).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_metrics_csv`].
pub fn read_metrics_csv<R: io::Read>(input: R) -> Result<Vec<TrainMetrics>, TrainError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().collect::<Result<_, _>>().map_err(|e| TrainError::Io(io::Error::other(e)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    /// Steps completed.
    pub step: usize,
    pub params: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        let json = serde_json::to_string(self).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path)?;
        let ck: Self = serde_json::from_str(&text).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(TrainError::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        Ok(ck)
    }
}

pub struct Trainer<F> {
    config: TrainConfig,
    policy: ToyPolicy<F>,
    velocity: Vec<F>,
    step: usize,
    items: Vec<QAItem>,
    gateway: Gateway,
    /// Set when the trainer built its own mock tools. Their cache is emptied
    /// before every step so a resumed run sees the same tool outputs.
    owns_tools: bool,
}

impl<F: Scalar> Trainer<F> {
    /// Standard vocabulary with the protocol prior, on generated items with mock tools.
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let (items, gateway) = match config.task {
            ToyTask::Calculator => (gen_calculator(config.n_items, config.seed), Gateway::mock(FixtureSearch::new())),
            ToyTask::FactLookup => {
                let set = gen_fact_lookup(config.n_items, config.seed);
                (set.items, Gateway::mock(set.search))
            }
        };
        let policy = ToyPolicy::uniform(ToyVocab::standard(), config.window, F::from_f64_lossy(config.temperature))
            .with_protocol_prior(F::from_f64_lossy(config.prior_strength));
        let mut trainer = Self::with_parts(config, policy, items, gateway)?;
        trainer.owns_tools = true;
        Ok(trainer)
    }

    pub fn with_parts(
        config: TrainConfig,
        policy: ToyPolicy<F>,
        items: Vec<QAItem>,
        gateway: Gateway,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        if items.is_empty() {
            return Err(TrainError::Config("no training items".into()));
        }
        let velocity = vec![F::zero(); policy.num_params()];
        Ok(Self { config, policy, velocity, step: 0, items, gateway, owns_tools: false })
    }

    /// Loads parameters and optimizer state saved under the same config.
    pub fn restore(&mut self, checkpoint: &Checkpoint) -> Result<(), TrainError> {
        if checkpoint.config_hash != self.config.hash() {
            return Err(TrainError::Checkpoint("config hash does not match".into()));
        }
        let n = self.policy.num_params();
        if checkpoint.params.len() != n || checkpoint.velocity.len() != n {
            return Err(TrainError::Checkpoint(format!(
                "expected {n} parameters, found {} and {} velocities",
                checkpoint.params.len(),
                checkpoint.velocity.len()
            )));
        }
        self.policy.theta = checkpoint.params.iter().map(|&x| F::from_f64_lossy(x)).collect();
        self.velocity = checkpoint.velocity.iter().map(|&x| F::from_f64_lossy(x)).collect();
        self.step = checkpoint.step;
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: self.config.hash(),
            step: self.step,
            params: self.policy.theta.iter().map(|x| x.to_f64_lossy()).collect(),
            velocity: self.velocity.iter().map(|x| x.to_f64_lossy()).collect(),
        }
    }

    pub fn policy(&self) -> &ToyPolicy<F> {
        &self.policy
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn items(&self) -> &[QAItem] {
        &self.items
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    /// One batch: roll out, score, normalize, ascend.
    pub fn step(&mut self) -> Result<TrainMetrics, TrainError> {
        if self.owns_tools {
            if let Some(search) = self.gateway.search_client() {
                search.reset()?;
            }
        }
        let cfg = &self.config;
        let step_seed = derive_seed(cfg.seed, "step", self.step);
        let mut order = self.items.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(step_seed));
        let options =
            BatchOptions { seed: step_seed, max_draws: Some(cfg.batch_size * cfg.draw_factor), rerolls: cfg.rerolls };
        let outcome = collect_batch(
            order.into_iter().cycle(),
            &self.policy,
            &self.gateway,
            &cfg.limits(),
            cfg.budget()?,
            options,
        )?;

        let mut rewards = Vec::new();
        let mut lengths = Vec::new();
        let mut entropies = Vec::new();
        for group in &outcome.sampled {
            rewards.extend(group.totals());
            for t in &group.trajectories {
                lengths.push(t.model_token_count() as f64);
                let lp = toy_logprobs(&self.policy, t)?;
                entropies.extend(lp.distributions.iter().flatten().map(|d| entropy(d).to_f64_lossy()));
            }
        }

        let mut samples = Vec::new();
        for group in &outcome.groups {
            let adv = group_advantages(&group.totals())?;
            for (t, a) in group.trajectories.iter().zip(adv) {
                samples.push(ToySample::from_rollout(t.clone(), F::from_f64_lossy(a)));
            }
        }

        let mut objective = 0.0;
        if !samples.is_empty() {
            let clip = ClipBounds::new(F::from_f64_lossy(cfg.eps_low), F::from_f64_lossy(cfg.eps_high))?;
            let (lr, momentum) = (F::from_f64_lossy(cfg.learning_rate), F::from_f64_lossy(cfg.momentum));
            for epoch in 0..cfg.inner_epochs {
                let (j, grad) = toy_objective(&self.policy, &samples, clip)?;
                if !j.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(TrainError::Diverged { step: self.step });
                }
                if epoch == 0 {
                    objective = j.to_f64_lossy();
                }
                for ((theta, v), g) in self.policy.theta.iter_mut().zip(&mut self.velocity).zip(grad) {
                    *v = momentum * *v + g;
                    *theta += lr * *v;
                }
            }
        }

        let metrics = TrainMetrics {
            step: self.step,
            reward: mean(&rewards),
            entropy: mean(&entropies),
            length: mean(&lengths),
            discards: outcome.discarded,
            objective,
        };
        log::info!(
            "step {}: reward {:.4} entropy {:.4} length {:.2} discards {} objective {:.4}",
            metrics.step,
            metrics.reward,
            metrics.entropy,
            metrics.length,
            metrics.discards,
            metrics.objective
        );
        self.step += 1;
        Ok(metrics)
    }

    /// Runs `steps` more steps, calling `on_step` after each.
    pub fn run(
        &mut self,
        steps: usize,
        mut on_step: impl FnMut(&Self, &TrainMetrics) -> Result<(), TrainError>,
    ) -> Result<Vec<TrainMetrics>, TrainError> {
        let mut history = Vec::with_capacity(steps);
        for _ in 0..steps {
            let m = self.step()?;
            on_step(self, &m)?;
            history.push(m);
        }
        Ok(history)
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        pairwise_sum(values) / values.len() as f64
    }
}

/// Trains the standard toy policy for `config.steps` steps.
pub fn train_toy<F: Scalar>(config: &TrainConfig) -> Result<(Vec<TrainMetrics>, ToyPolicy<F>), TrainError> {
    let mut trainer = Trainer::<F>::new(config.clone())?;
    let history = trainer.run(config.steps, |_, _| Ok(()))?;
    Ok((history, trainer.policy))
}
