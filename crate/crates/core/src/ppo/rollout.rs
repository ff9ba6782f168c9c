use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gae::{compute_gae, normalize_advantages};
use super::loss::Sample;
use crate::env::{ActionVector, MicrogridEnv, N_ACTIONS, N_FEATURES, N_TIERS};
use crate::metrics::{normalized_episode_reward, resilience_index};
use crate::neural::{forward_value, GaussianPolicy, NeuralError, ValueNet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub features: [f64; N_FEATURES],
    pub preclip: [f64; N_ACTIONS],
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

/// Consecutive transitions from one environment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Segment {
    pub transitions: Vec<Transition>,
    /// Critic value of the state after the last transition (unused if it was terminal).
    pub bootstrap_value: f64,
}

/// Summary of an episode that finished during collection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub steps: usize,
    pub reward_sum: f64,
    pub ri: f64,
    pub normalized_reward: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub segments: Vec<Segment>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub completed_episodes: Vec<EpisodeSummary>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.transitions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.segments.iter().flat_map(|s| s.transitions.iter())
    }

    /// Runs GAE per segment, stores advantages and returns, and normalizes
    /// the advantages across the whole buffer.
    /// GAE per segment on rewards multiplied by `reward_scale`; the value
    /// network is trained on the same scaled returns.
    pub fn compute_advantages(
        &mut self,
        gamma: f64,
        lambda: f64,
        reward_scale: f64,
        normalize: bool,
    ) {
        self.advantages.clear();
        self.returns.clear();
        for seg in &self.segments {
            let r: Vec<f64> = seg
                .transitions
                .iter()
                .map(|t| t.reward * reward_scale)
                .collect();
            let v: Vec<f64> = seg.transitions.iter().map(|t| t.value).collect();
            let d: Vec<bool> = seg.transitions.iter().map(|t| t.done).collect();
            let (adv, ret) = compute_gae(&r, &v, &d, seg.bootstrap_value, gamma, lambda);
            self.advantages.extend(adv);
            self.returns.extend(ret);
        }
        if normalize {
            normalize_advantages(&mut self.advantages);
        }
    }

    /// Training samples; call [`Self::compute_advantages`] first.
    pub fn samples(&self) -> Vec<Sample> {
        assert_eq!(self.advantages.len(), self.len(), "advantages not computed");
        self.transitions()
            .zip(self.advantages.iter().zip(&self.returns))
            .map(|(t, (&advantage, &ret))| Sample {
                features: t.features,
                preclip: t.preclip,
                log_prob_old: t.log_prob,
                advantage,
                ret,
            })
            .collect()
    }
}

/// One environment plus the RNG that drives its action noise and resets.
#[derive(Debug, Clone)]
pub struct RolloutWorker {
    pub env: MicrogridEnv,
    rng: ChaCha8Rng,
    episode_reward: f64,
    episode_steps: usize,
    shortage_sums: [f64; N_TIERS],
    load_sums: [f64; N_TIERS],
}

impl RolloutWorker {
    pub fn new(mut env: MicrogridEnv, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        env.reset(rng.random());
        Self {
            env,
            rng,
            episode_reward: 0.0,
            episode_steps: 0,
            shortage_sums: [0.0; N_TIERS],
            load_sums: [0.0; N_TIERS],
        }
    }

    fn start_episode(&mut self) {
        let seed = self.rng.random();
        self.env.reset(seed);
        self.episode_reward = 0.0;
        self.episode_steps = 0;
        self.shortage_sums = [0.0; N_TIERS];
        self.load_sums = [0.0; N_TIERS];
    }
}

/// Steps every worker for an equal share of `n_steps` transitions with the
/// current stochastic policy. `n_steps` must be divisible by the worker count.
pub fn collect_rollouts(
    policy: &GaussianPolicy,
    value: &ValueNet,
    workers: &mut [RolloutWorker],
    n_steps: usize,
) -> Result<RolloutBuffer, NeuralError> {
    assert!(
        !workers.is_empty() && n_steps.is_multiple_of(workers.len()),
        "n_steps must split evenly across workers"
    );
    let per_worker = n_steps / workers.len();
    let mut buffer = RolloutBuffer::default();
    for w in workers.iter_mut() {
        let mut seg = Segment {
            transitions: Vec::with_capacity(per_worker),
            bootstrap_value: 0.0,
        };
        for _ in 0..per_worker {
            if w.env.is_finished() {
                w.start_episode();
            }
            let features = w.env.state().features();
            let sampled = policy.sample_action(&features, &mut w.rng)?;
            let v = forward_value(value, &features)?;
            let out = w
                .env
                .step(&ActionVector::from_slice(&sampled.action))
                .expect("worker resets finished episodes before stepping");

            w.episode_reward += out.reward;
            w.episode_steps += 1;
            for i in 0..N_TIERS {
                w.shortage_sums[i] += out.shortages[i];
                w.load_sums[i] += out.state.loads_now[i];
            }
            seg.transitions.push(Transition {
                features,
                preclip: sampled.preclip,
                log_prob: sampled.log_prob,
                reward: out.reward,
                value: v,
                done: out.done,
            });
            if out.done {
                let ri =
                    resilience_index(w.shortage_sums, w.load_sums, w.env.config().reward_weights);
                buffer.completed_episodes.push(EpisodeSummary {
                    steps: w.episode_steps,
                    reward_sum: w.episode_reward,
                    ri,
                    normalized_reward: normalized_episode_reward(
                        w.episode_reward,
                        ri,
                        w.episode_steps,
                    ),
                });
            }
        }
        seg.bootstrap_value = if w.env.is_finished() {
            0.0
        } else {
            forward_value(value, &w.env.state().features())?
        };
        buffer.segments.push(seg);
    }
    Ok(buffer)
}
