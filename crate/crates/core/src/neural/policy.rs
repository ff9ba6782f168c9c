use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{MlpCache, MlpShape, NeuralError};
use crate::env::{N_ACTIONS, N_FEATURES};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const LOG_2PI: f64 = 1.837_877_066_409_345_3;

/// Fixed affine map applied to raw observations before the first layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub offset: [f64; N_FEATURES],
    pub scale: [f64; N_FEATURES],
}

impl FeatureScaler {
    pub fn identity() -> Self {
        Self {
            offset: [0.0; N_FEATURES],
            scale: [1.0; N_FEATURES],
        }
    }

    /// Scales below `1e-6` are floored so constant features do not divide by zero.
    pub fn new(offset: [f64; N_FEATURES], scale: [f64; N_FEATURES]) -> Self {
        Self {
            offset,
            scale: scale.map(|s| s.abs().max(1e-6)),
        }
    }

    pub fn apply(&self, s: &[f64; N_FEATURES]) -> Result<[f64; N_FEATURES], NeuralError> {
        let mut out = [0.0; N_FEATURES];
        for i in 0..N_FEATURES {
            if !s[i].is_finite() {
                return Err(NeuralError::NonFiniteInput(i));
            }
            out[i] = (s[i] - self.offset[i]) / self.scale[i];
        }
        Ok(out)
    }
}

/// Diagonal Gaussian policy: an MLP maps the scaled state to action means,
/// and a state-independent log standard deviation sits at the tail of the
/// flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub scaler: FeatureScaler,
    pub trunk: MlpShape,
    params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PolicyCache {
    pub mlp: MlpCache,
    pub mean: [f64; N_ACTIONS],
    pub log_std: [f64; N_ACTIONS],
}

impl PolicyCache {
    pub fn log_prob(&self, a_preclip: &[f64; N_ACTIONS]) -> f64 {
        gaussian_log_prob(&self.mean, &self.log_std, a_preclip)
    }

    pub fn entropy(&self) -> f64 {
        gaussian_entropy(&self.log_std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAction {
    /// Clipped to `[-1, 1]`; what the environment receives.
    pub action: [f64; N_ACTIONS],
    /// Raw Gaussian draw; what the log-density refers to.
    pub preclip: [f64; N_ACTIONS],
    pub log_prob: f64,
}

impl GaussianPolicy {
    /// `hidden` lists the hidden-layer widths; the output head is scaled by `head_gain`.
    pub fn new(
        hidden: &[usize],
        init_log_std: f64,
        head_gain: f64,
        scaler: FeatureScaler,
        rng: &mut impl Rng,
    ) -> Result<Self, NeuralError> {
        let mut sizes = vec![N_FEATURES];
        sizes.extend_from_slice(hidden);
        sizes.push(N_ACTIONS);
        let trunk = MlpShape::new(sizes)?;
        let mut params = trunk.init_orthogonal(std::f64::consts::SQRT_2, head_gain, rng);
        params.extend([init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); N_ACTIONS]);
        Ok(Self {
            scaler,
            trunk,
            params,
        })
    }

    pub fn from_parts(
        scaler: FeatureScaler,
        sizes: Vec<usize>,
        trunk_params: Vec<f64>,
        log_std: [f64; N_ACTIONS],
    ) -> Result<Self, NeuralError> {
        let trunk = MlpShape::new(sizes)?;
        if trunk.input_dim() != N_FEATURES || trunk.output_dim() != N_ACTIONS {
            return Err(NeuralError::BadSizes(trunk.sizes().to_vec()));
        }
        if trunk_params.len() != trunk.n_params() {
            return Err(NeuralError::ShapeMismatch {
                expected: trunk.n_params(),
                got: trunk_params.len(),
            });
        }
        let mut params = trunk_params;
        params.extend(log_std.map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)));
        Ok(Self {
            scaler,
            trunk,
            params,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable view for optimizers. Call [`Self::clamp_log_std`] after writing.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn trunk_params(&self) -> &[f64] {
        &self.params[..self.trunk.n_params()]
    }

    pub fn log_std(&self) -> [f64; N_ACTIONS] {
        let tail = &self.params[self.trunk.n_params()..];
        std::array::from_fn(|i| tail[i])
    }

    pub fn clamp_log_std(&mut self) {
        let n = self.trunk.n_params();
        for l in &mut self.params[n..] {
            *l = l.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn forward_cached(&self, s: &[f64; N_FEATURES]) -> Result<PolicyCache, NeuralError> {
        let x = self.scaler.apply(s)?;
        let mlp = self.trunk.forward_cached(self.trunk_params(), &x);
        let out = mlp.output();
        let mean = std::array::from_fn(|i| out[i]);
        Ok(PolicyCache {
            mean,
            log_std: self.log_std(),
            mlp,
        })
    }

    /// Action means and log standard deviations at state `s`.
    pub fn forward(
        &self,
        s: &[f64; N_FEATURES],
    ) -> Result<([f64; N_ACTIONS], [f64; N_ACTIONS]), NeuralError> {
        let x = self.scaler.apply(s)?;
        let out = self.trunk.forward(self.trunk_params(), &x);
        Ok((std::array::from_fn(|i| out[i]), self.log_std()))
    }

    /// Deterministic action: the mean, clipped to the action box.
    pub fn mean_action(&self, s: &[f64; N_FEATURES]) -> Result<[f64; N_ACTIONS], NeuralError> {
        Ok(self.forward(s)?.0.map(|m| m.clamp(-1.0, 1.0)))
    }

    pub fn sample_action(
        &self,
        s: &[f64; N_FEATURES],
        rng: &mut impl Rng,
    ) -> Result<SampledAction, NeuralError> {
        let (mean, log_std) = self.forward(s)?;
        let preclip: [f64; N_ACTIONS] = std::array::from_fn(|i| {
            let z: f64 = rng.sample(StandardNormal);
            mean[i] + log_std[i].exp() * z
        });
        Ok(SampledAction {
            action: preclip.map(|a| a.clamp(-1.0, 1.0)),
            preclip,
            log_prob: gaussian_log_prob(&mean, &log_std, &preclip),
        })
    }

    pub fn log_prob_and_entropy(
        &self,
        s: &[f64; N_FEATURES],
        a_preclip: &[f64; N_ACTIONS],
    ) -> Result<(f64, f64), NeuralError> {
        let (mean, log_std) = self.forward(s)?;
        Ok((
            gaussian_log_prob(&mean, &log_std, a_preclip),
            gaussian_entropy(&log_std),
        ))
    }

    /// Accumulates into `grad` the gradient of `d_log_prob * log_prob(a) +
    /// d_entropy * entropy` with respect to every policy parameter.
    pub fn log_prob_backward(
        &self,
        cache: &PolicyCache,
        a_preclip: &[f64; N_ACTIONS],
        d_log_prob: f64,
        d_entropy: f64,
        grad: &mut [f64],
    ) {
        let n_trunk = self.trunk.n_params();
        let mut d_mean = [0.0; N_ACTIONS];
        for i in 0..N_ACTIONS {
            let inv_var = (-2.0 * cache.log_std[i]).exp();
            let diff = a_preclip[i] - cache.mean[i];
            d_mean[i] = d_log_prob * diff * inv_var;
            grad[n_trunk + i] += d_log_prob * (diff * diff * inv_var - 1.0) + d_entropy;
        }
        self.trunk.backward(
            self.trunk_params(),
            &cache.mlp,
            &d_mean,
            &mut grad[..n_trunk],
        );
    }
}

pub fn gaussian_log_prob(
    mean: &[f64; N_ACTIONS],
    log_std: &[f64; N_ACTIONS],
    a: &[f64; N_ACTIONS],
) -> f64 {
    (0..N_ACTIONS)
        .map(|i| {
            let z = (a[i] - mean[i]) * (-log_std[i]).exp();
            -0.5 * z * z - log_std[i] - 0.5 * LOG_2PI
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64; N_ACTIONS]) -> f64 {
    log_std.iter().sum::<f64>() + 0.5 * N_ACTIONS as f64 * (1.0 + LOG_2PI)
}

/// Scalar state-value critic.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub scaler: FeatureScaler,
    pub shape: MlpShape,
    pub params: Vec<f64>,
}

impl ValueNet {
    pub fn new(
        hidden: &[usize],
        scaler: FeatureScaler,
        rng: &mut impl Rng,
    ) -> Result<Self, NeuralError> {
        let mut sizes = vec![N_FEATURES];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let shape = MlpShape::new(sizes)?;
        let params = shape.init_orthogonal(std::f64::consts::SQRT_2, 1.0, rng);
        Ok(Self {
            scaler,
            shape,
            params,
        })
    }

    pub fn from_parts(
        scaler: FeatureScaler,
        sizes: Vec<usize>,
        params: Vec<f64>,
    ) -> Result<Self, NeuralError> {
        let shape = MlpShape::new(sizes)?;
        if shape.input_dim() != N_FEATURES || shape.output_dim() != 1 {
            return Err(NeuralError::BadSizes(shape.sizes().to_vec()));
        }
        if params.len() != shape.n_params() {
            return Err(NeuralError::ShapeMismatch {
                expected: shape.n_params(),
                got: params.len(),
            });
        }
        Ok(Self {
            scaler,
            shape,
            params,
        })
    }

    pub fn forward_cached(&self, s: &[f64; N_FEATURES]) -> Result<MlpCache, NeuralError> {
        let x = self.scaler.apply(s)?;
        Ok(self.shape.forward_cached(&self.params, &x))
    }
}

pub fn forward_value(v: &ValueNet, s: &[f64; N_FEATURES]) -> Result<f64, NeuralError> {
    let x = v.scaler.apply(s)?;
    Ok(v.shape.forward(&v.params, &x)[0])
}

/// Accumulates `d_value * d V / d params` into `grad`.
pub fn value_backward(v: &ValueNet, cache: &MlpCache, d_value: f64, grad: &mut [f64]) {
    v.shape.backward(&v.params, cache, &[d_value], grad);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::{central_difference, max_relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy(seed: u64) -> GaussianPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GaussianPolicy::new(&[8, 8], -0.3, 1.0, FeatureScaler::identity(), &mut rng).unwrap()
    }

    const S: [f64; 6] = [0.5, 0.2, -0.1, 0.3, 0.8, -0.4];

    #[test]
    fn zero_head_outputs_bias() {
        let mut p = policy(1);
        let n = p.trunk.n_params();
        let last = p.trunk.n_layers() - 1;
        let (w_len, b_len) = {
            let (w, b) = p.trunk.layer_slices(p.trunk_params(), last);
            (w.len(), b.len())
        };
        let bias = [0.1, -0.2, 0.3, -0.4, 0.5];
        let head = n - w_len - b_len;
        p.params_mut()[head..head + w_len].fill(0.0);
        p.params_mut()[n - b_len..n].copy_from_slice(&bias);
        let (mean, _) = p.forward(&S).unwrap();
        assert_eq!(mean, bias);
        assert_eq!(p.forward(&[1.0, 9.0, 3.0, -7.0, 2.0, 0.0]).unwrap().0, bias);
    }

    #[test]
    fn forward_is_deterministic_and_rejects_nan() {
        let p = policy(2);
        assert_eq!(p.forward(&S).unwrap(), p.forward(&S).unwrap());
        let mut bad = S;
        bad[4] = f64::NAN;
        assert_eq!(p.forward(&bad), Err(NeuralError::NonFiniteInput(4)));
    }

    #[test]
    fn log_prob_at_mode() {
        let p = policy(3);
        let (mean, log_std) = p.forward(&S).unwrap();
        let (lp, _) = p.log_prob_and_entropy(&S, &mean).unwrap();
        let want = -log_std.iter().sum::<f64>() - 2.5 * LOG_2PI;
        assert!((lp - want).abs() < 1e-12);
    }

    #[test]
    fn entropy_closed_form_and_scaling() {
        let mut p = policy(4);
        let (_, h0) = p.log_prob_and_entropy(&S, &[0.0; 5]).unwrap();
        let (_, h_other) = p.log_prob_and_entropy(&[0.0; 6], &[1.0; 5]).unwrap();
        assert_eq!(h0, h_other);
        let n = p.trunk.n_params();
        for l in &mut p.params_mut()[n..] {
            *l += std::f64::consts::LN_2;
        }
        let (_, h1) = p.log_prob_and_entropy(&S, &[0.0; 5]).unwrap();
        assert!((h1 - h0 - 5.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn near_deterministic_sampling() {
        let mut p = policy(5);
        let n = p.trunk.n_params();
        p.params_mut()[n..].fill(-50.0);
        p.clamp_log_std();
        assert_eq!(p.log_std(), [LOG_STD_MIN; 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = p.sample_action(&S, &mut rng).unwrap();
        let mean = p.mean_action(&S).unwrap();
        for i in 0..5 {
            assert!((a.action[i] - mean[i]).abs() < 0.05);
        }
        let again = p
            .sample_action(&S, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(
            p.sample_action(&S, &mut ChaCha8Rng::seed_from_u64(0))
                .unwrap(),
            again
        );
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let p = policy(6);
        let a = [0.3, -1.2, 0.4, 0.9, -0.1];
        let (d_lp, d_h) = (0.7, -0.3);
        let cache = p.forward_cached(&S).unwrap();
        let mut grad = vec![0.0; p.n_params()];
        p.log_prob_backward(&cache, &a, d_lp, d_h, &mut grad);
        let f = |params: &[f64]| {
            let mut q = p.clone();
            q.params_mut().copy_from_slice(params);
            let (lp, h) = q.log_prob_and_entropy(&S, &a).unwrap();
            d_lp * lp + d_h * h
        };
        let fd = central_difference(f, p.params(), 1e-5);
        assert!(max_relative_error(&grad, &fd) < 1e-4);
    }

    #[test]
    fn value_net_cases() {
        let v = ValueNet::from_parts(
            FeatureScaler::identity(),
            vec![6, 4, 1],
            vec![0.0; 6 * 4 + 4 + 4 + 1],
        )
        .unwrap();
        assert_eq!(forward_value(&v, &S).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v = ValueNet::new(&[5, 5], FeatureScaler::identity(), &mut rng).unwrap();
        assert_eq!(
            forward_value(&v, &S).unwrap(),
            forward_value(&v, &S).unwrap()
        );
        let cache = v.forward_cached(&S).unwrap();
        let mut grad = vec![0.0; v.params.len()];
        value_backward(&v, &cache, 1.0, &mut grad);
        let f = |params: &[f64]| {
            let mut w = v.clone();
            w.params.copy_from_slice(params);
            forward_value(&w, &S).unwrap()
        };
        assert!(max_relative_error(&grad, &central_difference(f, &v.params, 1e-5)) < 1e-4);
    }
}
