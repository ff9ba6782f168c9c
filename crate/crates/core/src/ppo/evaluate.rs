//! Episode rollouts for evaluation and baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{reset, step, ActionVector, EnvConfig, N_ACTIONS, N_FEATURES};
use crate::metrics::ResilienceReport;
use crate::neural::{GaussianPolicy, NeuralError};
use crate::scenario::Scenario;
use crate::trajectory::{StepRecord, Trajectory};

/// Anything that maps an observation to a (pre-clamp) action.
pub trait Agent {
    fn act(&mut self, features: &[f64; N_FEATURES]) -> Result<[f64; N_ACTIONS], NeuralError>;
}

/// Acts with the policy mean.
pub struct DeterministicAgent<'a>(pub &'a GaussianPolicy);

impl Agent for DeterministicAgent<'_> {
    fn act(&mut self, features: &[f64; N_FEATURES]) -> Result<[f64; N_ACTIONS], NeuralError> {
        self.0.mean_action(features)
    }
}

/// Samples from the policy distribution.
pub struct StochasticAgent<'a> {
    pub policy: &'a GaussianPolicy,
    pub rng: ChaCha8Rng,
}

impl Agent for StochasticAgent<'_> {
    fn act(&mut self, features: &[f64; N_FEATURES]) -> Result<[f64; N_ACTIONS], NeuralError> {
        Ok(self.policy.sample_action(features, &mut self.rng)?.action)
    }
}

/// Uniform actions on `[-1, 1]^5`.
pub struct RandomAgent {
    pub rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Agent for RandomAgent {
    fn act(&mut self, _features: &[f64; N_FEATURES]) -> Result<[f64; N_ACTIONS], NeuralError> {
        Ok(std::array::from_fn(|_| self.rng.random_range(-1.0..=1.0)))
    }
}

/// Rule-based reference: requests full battery power in both directions
/// (the sign of the net power decides which one applies) and weights tiers
/// by their current load, saturating at the action bounds.
pub struct GreedyAgent;

impl Agent for GreedyAgent {
    fn act(&mut self, features: &[f64; N_FEATURES]) -> Result<[f64; N_ACTIONS], NeuralError> {
        let loads = [features[1], features[2], features[3]];
        let top = loads.iter().fold(0.0f64, |m, &l| m.max(l));
        let w = loads.map(|l| {
            if top > 0.0 && l > 0.0 {
                (l / top).ln().max(-1.0)
            } else if top > 0.0 {
                -1.0
            } else {
                0.0
            }
        });
        Ok([1.0, 1.0, w[0], w[1], w[2]])
    }
}

/// Keeps the inner agent's load weights but never requests battery power.
pub struct NoBatteryAgent<A>(pub A);

impl<A: Agent> Agent for NoBatteryAgent<A> {
    fn act(&mut self, features: &[f64; N_FEATURES]) -> Result<[f64; N_ACTIONS], NeuralError> {
        let mut a = self.0.act(features)?;
        a[0] = 0.0;
        a[1] = 0.0;
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub trajectory: Trajectory,
    pub report: ResilienceReport,
    pub normalized_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub episodes: Vec<EpisodeResult>,
    pub mean_normalized_reward: f64,
    pub mean_ri: f64,
}

/// Runs one full episode from an initial SOC drawn with `reset_seed`.
pub fn run_episode(
    agent: &mut impl Agent,
    env_cfg: &EnvConfig,
    scenario: &Scenario,
    reset_seed: u64,
) -> Result<EpisodeResult, NeuralError> {
    let mut state = reset(env_cfg, scenario, reset_seed).expect("scenario is non-empty");
    let mut steps = Vec::with_capacity(scenario.horizon());
    loop {
        let a = agent.act(&state.features())?;
        let out = step(env_cfg, scenario, &state, &ActionVector::from_slice(&a))
            .expect("action components are finite");
        steps.push(StepRecord::from_outcome(&out));
        state = out.next_state;
        if out.done {
            break;
        }
    }
    let trajectory = Trajectory { steps };
    let report = ResilienceReport::from_trajectory(&trajectory, env_cfg.reward_weights);
    let normalized_reward = report.normalized_reward();
    Ok(EpisodeResult {
        trajectory,
        report,
        normalized_reward,
    })
}

/// Evaluates an agent over `n_episodes`; episode `k` resets with a seed
/// derived from `seed` and `k`.
pub fn evaluate_agent(
    agent: &mut impl Agent,
    env_cfg: &EnvConfig,
    scenario: &Scenario,
    n_episodes: usize,
    seed: u64,
) -> Result<Evaluation, NeuralError> {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let episodes = (0..n_episodes.max(1))
        .map(|_| run_episode(agent, env_cfg, scenario, seeds.random()))
        .collect::<Result<Vec<_>, _>>()?;
    let n = episodes.len() as f64;
    Ok(Evaluation {
        mean_normalized_reward: episodes.iter().map(|e| e.normalized_reward).sum::<f64>() / n,
        mean_ri: episodes.iter().map(|e| e.report.ri).sum::<f64>() / n,
        episodes,
    })
}

pub fn evaluate_policy(
    policy: &GaussianPolicy,
    env_cfg: &EnvConfig,
    scenario: &Scenario,
    n_episodes: usize,
    deterministic: bool,
    seed: u64,
) -> Result<Evaluation, NeuralError> {
    if deterministic {
        evaluate_agent(
            &mut DeterministicAgent(policy),
            env_cfg,
            scenario,
            n_episodes,
            seed,
        )
    } else {
        // Action noise and resets use separate streams.
        let rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        evaluate_agent(
            &mut StochasticAgent { policy, rng },
            env_cfg,
            scenario,
            n_episodes,
            seed,
        )
    }
}
