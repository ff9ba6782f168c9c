use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::evaluate::evaluate_policy;
use super::loss::{ppo_loss_and_grad, LossBreakdown};
use super::rollout::{collect_rollouts, RolloutWorker};
use super::PpoConfig;
use crate::env::{EnvConfig, EnvError, MicrogridEnv, N_FEATURES};
use crate::neural::{
    adam_step, AdamConfig, AdamState, FeatureScaler, GaussianPolicy, NeuralError, ValueNet,
};
use crate::scenario::Scenario;

pub const METRICS_HEADER: &str =
    "update,mean_reward_norm,RI,policy_loss,value_loss,entropy,clip_frac";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Network(#[from] NeuralError),
    #[error("non-finite loss at update {update}, epoch {epoch}: {loss:?}")]
    NonFinite {
        update: usize,
        epoch: usize,
        loss: LossBreakdown,
    },
}

/// Statistics logged after each update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub update: usize,
    /// Normalized episode reward of the mean policy after this update.
    pub mean_reward_norm: f64,
    pub ri: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
    /// Mean normalized reward of stochastic episodes that finished during collection.
    pub rollout_reward_norm: Option<f64>,
}

impl TrainStats {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.update,
            self.mean_reward_norm,
            self.ri,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.clip_frac
        )
    }

    fn is_finite(&self) -> bool {
        [
            self.mean_reward_norm,
            self.ri,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.clip_frac,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

pub fn write_metrics_csv(history: &[TrainStats], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for s in history {
        writeln!(out, "{}", s.csv_row())?;
    }
    Ok(())
}

/// Input scaling derived from the scenario: SOC is centred on the middle of
/// its band, powers on their series mean with the standard deviation (at
/// least 1 kW) as scale.
pub fn scaler_for_scenario(env_cfg: &EnvConfig, scn: &Scenario) -> FeatureScaler {
    let n = scn.horizon() as f64;
    let series: [Vec<f64>; 5] = [
        scn.loads[0].clone(),
        scn.loads[1].clone(),
        scn.loads[2].clone(),
        scn.p_re.clone(),
        (0..scn.horizon())
            .map(|t| scn.p_re[t] - scn.total_load_at(t))
            .collect(),
    ];
    let mut offset = [0.0; N_FEATURES];
    let mut scale = [1.0; N_FEATURES];
    offset[0] = 0.5 * (env_cfg.soc_min + env_cfg.soc_max);
    scale[0] = 0.5 * (env_cfg.soc_max - env_cfg.soc_min);
    for (k, s) in series.iter().enumerate() {
        let mean = s.iter().sum::<f64>() / n;
        let std = (s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        offset[k + 1] = mean;
        scale[k + 1] = std.max(1.0);
    }
    FeatureScaler::new(offset, scale)
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy: GaussianPolicy,
    pub value: ValueNet,
    pub history: Vec<TrainStats>,
}

/// Owns the networks, optimizers and rollout workers of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: PpoConfig,
    env_cfg: EnvConfig,
    scenario: Arc<Scenario>,
    policy: GaussianPolicy,
    value: ValueNet,
    policy_opt: AdamState,
    value_opt: AdamState,
    workers: Vec<RolloutWorker>,
    rng: ChaCha8Rng,
    eval_seed: u64,
    updates_done: usize,
}

impl Trainer {
    pub fn new(
        cfg: PpoConfig,
        env_cfg: EnvConfig,
        scenario: Arc<Scenario>,
    ) -> Result<Self, TrainError> {
        let errs: Vec<String> = cfg
            .validate()
            .into_iter()
            .chain(env_cfg.validate())
            .map(|(f, m)| format!("{f}: {m}"))
            .collect();
        if !errs.is_empty() {
            return Err(TrainError::Config(errs.join("; ")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let scaler = scaler_for_scenario(&env_cfg, &scenario);
        let policy = GaussianPolicy::new(&cfg.hidden, cfg.init_log_std, 0.01, scaler, &mut rng)?;
        let value = ValueNet::new(&cfg.hidden, scaler, &mut rng)?;
        let adam = AdamConfig {
            lr: cfg.learning_rate,
            ..Default::default()
        };
        let policy_opt = AdamState::new(policy.n_params(), adam);
        let value_opt = AdamState::new(value.params.len(), adam);
        let workers = (0..cfg.n_envs)
            .map(|_| {
                let env = MicrogridEnv::new(env_cfg.clone(), Arc::clone(&scenario), 0)?;
                Ok(RolloutWorker::new(env, rng.random()))
            })
            .collect::<Result<Vec<_>, EnvError>>()?;
        let eval_seed = rng.random();
        Ok(Self {
            cfg,
            env_cfg,
            scenario,
            policy,
            value,
            policy_opt,
            value_opt,
            workers,
            rng,
            eval_seed,
            updates_done: 0,
        })
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn value(&self) -> &ValueNet {
        &self.value
    }

    pub fn updates_done(&self) -> usize {
        self.updates_done
    }

    /// Collect, estimate advantages, optimize, evaluate.
    pub fn update(&mut self) -> Result<TrainStats, TrainError> {
        let update = self.updates_done;
        let mut buffer = collect_rollouts(
            &self.policy,
            &self.value,
            &mut self.workers,
            self.cfg.rollout_steps,
        )?;
        buffer.compute_advantages(
            self.cfg.gamma,
            self.cfg.gae_lambda,
            self.cfg.effective_reward_scale(),
            true,
        );
        let samples = buffer.samples();

        let coef = self.cfg.coefficients();
        let mut pg = vec![0.0; self.policy.n_params()];
        let mut vg = vec![0.0; self.value.params.len()];
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut sums = LossBreakdown::default();
        let mut n_batches = 0usize;
        for epoch in 0..self.cfg.epochs_per_update {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.cfg.minibatch_size) {
                let batch: Vec<_> = chunk.iter().map(|&i| samples[i]).collect();
                let loss =
                    ppo_loss_and_grad(&self.policy, &self.value, &batch, coef, &mut pg, &mut vg)?;
                let grads_finite = pg.iter().chain(&vg).all(|g| g.is_finite());
                if !loss.total.is_finite() || !grads_finite {
                    return Err(TrainError::NonFinite {
                        update,
                        epoch,
                        loss,
                    });
                }
                clip_grad_norm(&mut pg, self.cfg.max_grad_norm);
                clip_grad_norm(&mut vg, self.cfg.max_grad_norm);
                adam_step(self.policy.params_mut(), &pg, &mut self.policy_opt)?;
                self.policy.clamp_log_std();
                adam_step(&mut self.value.params, &vg, &mut self.value_opt)?;

                sums.policy += loss.policy;
                sums.value += loss.value;
                sums.entropy += loss.entropy;
                sums.clip_frac += loss.clip_frac;
                sums.approx_kl += loss.approx_kl;
                n_batches += 1;
            }
        }
        let k = 1.0 / n_batches.max(1) as f64;

        let eval = evaluate_policy(
            &self.policy,
            &self.env_cfg,
            &self.scenario,
            1,
            true,
            self.eval_seed,
        )?;
        let completed = &buffer.completed_episodes;
        let stats = TrainStats {
            update,
            mean_reward_norm: eval.mean_normalized_reward,
            ri: eval.mean_ri,
            policy_loss: sums.policy * k,
            value_loss: sums.value * k,
            entropy: sums.entropy * k,
            clip_frac: sums.clip_frac * k,
            approx_kl: sums.approx_kl * k,
            rollout_reward_norm: (!completed.is_empty()).then(|| {
                completed.iter().map(|e| e.normalized_reward).sum::<f64>() / completed.len() as f64
            }),
        };
        if !stats.is_finite() {
            let loss = LossBreakdown {
                policy: stats.policy_loss,
                value: stats.value_loss,
                entropy: stats.entropy,
                ..sums
            };
            return Err(TrainError::NonFinite {
                update,
                epoch: self.cfg.epochs_per_update,
                loss,
            });
        }
        self.updates_done += 1;
        Ok(stats)
    }

    pub fn into_networks(self) -> (GaussianPolicy, ValueNet) {
        (self.policy, self.value)
    }
}

/// Rescales `g` to Euclidean norm `max_norm` when it is longer; 0 disables.
pub fn clip_grad_norm(g: &mut [f64], max_norm: f64) {
    if max_norm > 0.0 {
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > max_norm {
            let k = max_norm / norm;
            g.iter_mut().for_each(|x| *x *= k);
        }
    }
}

/// Runs `cfg.total_updates` updates, calling `on_update` after each one with
/// the trainer (for checkpointing) and the fresh stats.
pub fn train<E>(
    cfg: &PpoConfig,
    env_cfg: &EnvConfig,
    scenario: Arc<Scenario>,
    mut on_update: impl FnMut(&Trainer, &TrainStats) -> Result<(), E>,
) -> Result<TrainOutput, E>
where
    E: From<TrainError>,
{
    let mut trainer = Trainer::new(cfg.clone(), env_cfg.clone(), scenario)?;
    let mut history = Vec::with_capacity(cfg.total_updates);
    for _ in 0..cfg.total_updates {
        let stats = trainer.update()?;
        on_update(&trainer, &stats)?;
        history.push(stats);
    }
    let (policy, value) = trainer.into_networks();
    Ok(TrainOutput {
        policy,
        value,
        history,
    })
}
