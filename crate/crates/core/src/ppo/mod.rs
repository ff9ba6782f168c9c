//! Proximal policy optimization, actor-critic style.
//!
//! ```text
//! for each update:
//!   collect rollout_steps transitions with the current stochastic policy
//!   GAE advantages per segment, normalized over the buffer
//!   epochs_per_update passes of shuffled minibatches:
//!       minimize  clip_loss + c1 * value_mse - c2 * entropy  with Adam
//!   evaluate the mean policy for one episode and log the stats
//! ```

mod evaluate;
mod gae;
mod loss;
mod rollout;
mod train;

pub use evaluate::{
    evaluate_agent, evaluate_policy, run_episode, Agent, DeterministicAgent, EpisodeResult,
    Evaluation, GreedyAgent, NoBatteryAgent, RandomAgent, StochasticAgent,
};
pub use gae::{compute_gae, normalize_advantages};
pub use loss::{
    clip_fraction, clipped_objective, clipped_policy_loss, ppo_loss, ppo_loss_and_grad, total_loss,
    value_loss, LossBreakdown, LossCoefficients, Sample,
};
pub use rollout::{
    collect_rollouts, EpisodeSummary, RolloutBuffer, RolloutWorker, Segment, Transition,
};
pub use train::{
    clip_grad_norm, scaler_for_scenario, train, write_metrics_csv, TrainError, TrainOutput,
    TrainStats, Trainer, METRICS_HEADER,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    /// Value-loss coefficient.
    pub c1: f64,
    /// Entropy-bonus coefficient.
    pub c2: f64,
    pub learning_rate: f64,
    pub rollout_steps: usize,
    pub n_envs: usize,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub total_updates: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Multiplier on step rewards before advantage estimation. Unset means
    /// `1 - gamma` (1 when gamma is 1), which keeps value targets on the scale
    /// of a single step reward.
    pub reward_scale: Option<f64>,
    /// Gradient-norm clip applied to actor and critic separately; 0 disables it.
    pub max_grad_norm: f64,
    /// Write a checkpoint every this many updates; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            c1: 0.5,
            c2: 0.01,
            learning_rate: 3e-4,
            rollout_steps: 720,
            n_envs: 1,
            epochs_per_update: 10,
            minibatch_size: 120,
            total_updates: 100,
            seed: 0,
            hidden: vec![64, 64],
            init_log_std: -0.5,
            reward_scale: None,
            max_grad_norm: 0.5,
            checkpoint_every: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Vec<(String, String)> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, msg: String| errs.push((format!("ppo.{field}"), msg));
        for (name, v) in [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)] {
            if !(v > 0.0 && v <= 1.0) {
                bad(name, format!("must lie in (0, 1], got {v}"));
            }
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            bad(
                "clip_eps",
                format!("must lie in (0, 1), got {}", self.clip_eps),
            );
        }
        for (name, v) in [
            ("c1", self.c1),
            ("c2", self.c2),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                bad(name, format!("must be finite and >= 0, got {v}"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            bad(
                "learning_rate",
                format!("must be positive, got {}", self.learning_rate),
            );
        }
        for (name, v) in [
            ("rollout_steps", self.rollout_steps),
            ("n_envs", self.n_envs),
            ("epochs_per_update", self.epochs_per_update),
            ("minibatch_size", self.minibatch_size),
        ] {
            if v == 0 {
                bad(name, "must be positive".into());
            }
        }
        if self.n_envs > 0 && !self.rollout_steps.is_multiple_of(self.n_envs) {
            bad(
                "rollout_steps",
                format!("must be divisible by n_envs ({})", self.n_envs),
            );
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            bad(
                "hidden",
                format!(
                    "needs at least one non-zero layer width, got {:?}",
                    self.hidden
                ),
            );
        }
        if let Some(v) = self.reward_scale {
            if !(v > 0.0 && v.is_finite()) {
                bad("reward_scale", format!("must be positive, got {v}"));
            }
        }
        if !self.init_log_std.is_finite() {
            bad("init_log_std", "must be finite".into());
        }
        errs
    }

    pub fn effective_reward_scale(&self) -> f64 {
        match self.reward_scale {
            Some(v) => v,
            None if self.gamma < 1.0 => 1.0 - self.gamma,
            None => 1.0,
        }
    }

    pub fn coefficients(&self) -> LossCoefficients {
        LossCoefficients {
            clip_eps: self.clip_eps,
            c1: self.c1,
            c2: self.c2,
        }
    }
}
