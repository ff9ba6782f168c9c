//! Clipped surrogate, value and entropy terms, and their exact gradients.
//!
//! All losses are written in the minimized direction:
//! `total = policy_loss + c1 * value_loss - c2 * entropy`.

use crate::env::{N_ACTIONS, N_FEATURES};
use crate::neural::{value_backward, GaussianPolicy, NeuralError, ValueNet};

/// One training example drawn from the rollout buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub features: [f64; N_FEATURES],
    pub preclip: [f64; N_ACTIONS],
    pub log_prob_old: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// `min(r * A, clip(r, 1 - eps, 1 + eps) * A)` for one sample.
pub fn clipped_objective(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Negated batch mean of the clipped surrogate.
pub fn clipped_policy_loss(
    log_prob_new: &[f64],
    log_prob_old: &[f64],
    advantages: &[f64],
    clip_eps: f64,
) -> f64 {
    assert!(log_prob_new.len() == log_prob_old.len() && log_prob_new.len() == advantages.len());
    let n = advantages.len() as f64;
    -log_prob_new
        .iter()
        .zip(log_prob_old)
        .zip(advantages)
        .map(|((new, old), a)| clipped_objective((new - old).exp(), *a, clip_eps))
        .sum::<f64>()
        / n
}

/// Fraction of samples whose ratio lies outside `[1 - eps, 1 + eps]`.
pub fn clip_fraction(log_prob_new: &[f64], log_prob_old: &[f64], clip_eps: f64) -> f64 {
    let n = log_prob_new.len() as f64;
    log_prob_new
        .iter()
        .zip(log_prob_old)
        .filter(|(new, old)| ((*new - *old).exp() - 1.0).abs() > clip_eps)
        .count() as f64
        / n
}

pub fn value_loss(values_pred: &[f64], returns: &[f64]) -> f64 {
    assert_eq!(values_pred.len(), returns.len());
    values_pred
        .iter()
        .zip(returns)
        .map(|(v, r)| (v - r).powi(2))
        .sum::<f64>()
        / returns.len() as f64
}

pub fn total_loss(policy_loss: f64, value_loss: f64, entropy: f64, c1: f64, c2: f64) -> f64 {
    policy_loss + c1 * value_loss - c2 * entropy
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients {
    pub clip_eps: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Evaluates the combined loss on a minibatch without gradients.
pub fn ppo_loss(
    policy: &GaussianPolicy,
    value: &ValueNet,
    batch: &[Sample],
    coef: LossCoefficients,
) -> Result<LossBreakdown, NeuralError> {
    let mut lp_new = Vec::with_capacity(batch.len());
    let mut v_pred = Vec::with_capacity(batch.len());
    let mut entropy = 0.0;
    for s in batch {
        let (lp, h) = policy.log_prob_and_entropy(&s.features, &s.preclip)?;
        lp_new.push(lp);
        entropy = h;
        v_pred.push(crate::neural::forward_value(value, &s.features)?);
    }
    Ok(breakdown(batch, &lp_new, &v_pred, entropy, coef))
}

fn breakdown(
    batch: &[Sample],
    lp_new: &[f64],
    v_pred: &[f64],
    entropy: f64,
    coef: LossCoefficients,
) -> LossBreakdown {
    let lp_old: Vec<f64> = batch.iter().map(|s| s.log_prob_old).collect();
    let adv: Vec<f64> = batch.iter().map(|s| s.advantage).collect();
    let ret: Vec<f64> = batch.iter().map(|s| s.ret).collect();
    let policy = clipped_policy_loss(lp_new, &lp_old, &adv, coef.clip_eps);
    let value = value_loss(v_pred, &ret);
    let n = batch.len() as f64;
    let approx_kl = lp_old.iter().zip(lp_new).map(|(o, n)| o - n).sum::<f64>() / n;
    LossBreakdown {
        total: total_loss(policy, value, entropy, coef.c1, coef.c2),
        policy,
        value,
        entropy,
        clip_frac: clip_fraction(lp_new, &lp_old, coef.clip_eps),
        approx_kl,
    }
}

/// Combined loss and its exact gradient with respect to the policy and value
/// parameters. Gradients are written into the given buffers (overwritten).
pub fn ppo_loss_and_grad(
    policy: &GaussianPolicy,
    value: &ValueNet,
    batch: &[Sample],
    coef: LossCoefficients,
    policy_grad: &mut [f64],
    value_grad: &mut [f64],
) -> Result<LossBreakdown, NeuralError> {
    policy_grad.fill(0.0);
    value_grad.fill(0.0);
    let n = batch.len() as f64;
    let mut lp_new = Vec::with_capacity(batch.len());
    let mut v_pred = Vec::with_capacity(batch.len());
    let mut entropy = 0.0;
    for s in batch {
        let cache = policy.forward_cached(&s.features)?;
        let lp = cache.log_prob(&s.preclip);
        entropy = cache.entropy();
        let ratio = (lp - s.log_prob_old).exp();
        let clipped = ratio.clamp(1.0 - coef.clip_eps, 1.0 + coef.clip_eps);
        // The min selects the unclipped branch unless clipping makes the term smaller.
        let d_lp = if ratio * s.advantage <= clipped * s.advantage {
            -s.advantage * ratio / n
        } else {
            0.0
        };
        policy.log_prob_backward(&cache, &s.preclip, d_lp, -coef.c2 / n, policy_grad);

        let vcache = value.forward_cached(&s.features)?;
        let v = vcache.output()[0];
        value_backward(value, &vcache, coef.c1 * 2.0 * (v - s.ret) / n, value_grad);

        lp_new.push(lp);
        v_pred.push(v);
    }
    Ok(breakdown(batch, &lp_new, &v_pred, entropy, coef))
}
