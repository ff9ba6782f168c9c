//! LIME explanations of single actor decisions.
//!
//! For an observed state `x` and one action dimension of the actor mean:
//!
//! 1. draw Gaussian perturbations `z` around `x` (per-feature std taken from
//!    trajectory statistics, clamped to physical ranges);
//! 2. query the actor at every `z`;
//! 3. weight each sample by `exp(-D(x, z)^2 / sigma^2)`, with `D` the
//!    Euclidean distance on standardized features;
//! 4. fit a weighted ridge regression on the standardized features.
//!
//! The fitted slopes are the signed feature attributions. Weighted R² of the
//! fit is reported as local fidelity.

mod render;
mod surrogate;

pub use render::{
    explanation_csv, explanation_svg, parse_explanation_csv, render_explanation, RenderedFiles,
    EXPLANATION_CSV_HEADER,
};
pub use surrogate::{fit_surrogate, SurrogateFit};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvConfig, FEATURE_NAMES, N_ACTIONS, N_FEATURES};
use crate::neural::{GaussianPolicy, NeuralError};

pub const ACTION_NAMES: [&str; N_ACTIONS] = [
    "charging",
    "discharging",
    "weight_1",
    "weight_2",
    "weight_3",
];

/// Fidelity below this is flagged as a low-trust explanation.
pub const LOW_FIDELITY: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("need at least 10 samples, got {0}")]
    TooFewSamples(usize),
    #[error("non-finite surrogate target at sample {0}")]
    NonFiniteTarget(usize),
    #[error("normal equations are singular (ridge_strength = {0})")]
    Singular(f64),
    #[error("action dimension {0} out of range")]
    ActionDim(usize),
    #[error(transparent)]
    Network(#[from] NeuralError),
    #[error("cannot write explanation to {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed explanation csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub n_samples: usize,
    /// Kernel width in standardized feature units.
    pub kernel_sigma: f64,
    /// Multiplier on each feature's standard deviation for the perturbation noise.
    pub perturb_scale: f64,
    pub ridge_strength: f64,
    /// Number of features kept in the surrogate, largest standardized effect first.
    pub top_k: usize,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            kernel_sigma: 0.75 * (N_FEATURES as f64).sqrt(),
            perturb_scale: 1.0,
            ridge_strength: 1e-3,
            top_k: N_FEATURES,
            seed: 0,
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Vec<(String, String)> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, msg: String| errs.push((format!("explain.{field}"), msg));
        if self.n_samples < 10 {
            bad(
                "n_samples",
                format!("must be at least 10, got {}", self.n_samples),
            );
        }
        if !(self.kernel_sigma > 0.0 && self.kernel_sigma.is_finite()) {
            bad(
                "kernel_sigma",
                format!("must be positive, got {}", self.kernel_sigma),
            );
        }
        if !(self.perturb_scale >= 0.0 && self.perturb_scale.is_finite()) {
            bad(
                "perturb_scale",
                format!("must be finite and >= 0, got {}", self.perturb_scale),
            );
        }
        if !(self.ridge_strength >= 0.0 && self.ridge_strength.is_finite()) {
            bad(
                "ridge_strength",
                format!("must be finite and >= 0, got {}", self.ridge_strength),
            );
        }
        if !(1..=N_FEATURES).contains(&self.top_k) {
            bad(
                "top_k",
                format!("must lie in 1..={N_FEATURES}, got {}", self.top_k),
            );
        }
        errs
    }
}

/// Per-feature location and spread used for perturbation, distance and standardization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: [f64; N_FEATURES],
    pub std: [f64; N_FEATURES],
}

pub const STD_FLOOR: f64 = 1e-6;

impl FeatureStats {
    pub fn new(mean: [f64; N_FEATURES], std: [f64; N_FEATURES]) -> Self {
        Self {
            mean,
            std: std.map(|s| s.abs().max(STD_FLOOR)),
        }
    }

    /// Population statistics over a set of observed states.
    pub fn from_states(states: &[[f64; N_FEATURES]]) -> Self {
        let n = states.len().max(1) as f64;
        let mean: [f64; N_FEATURES] =
            std::array::from_fn(|j| states.iter().map(|s| s[j]).sum::<f64>() / n);
        let std = std::array::from_fn(|j| {
            (states.iter().map(|s| (s[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt()
        });
        Self::new(mean, std)
    }

    pub fn standardize(&self, z: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        std::array::from_fn(|j| (z[j] - self.mean[j]) / self.std[j])
    }
}

/// Physical box that perturbed samples are clamped into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureBounds {
    pub soc_min: f64,
    pub soc_max: f64,
}

impl FeatureBounds {
    pub fn from_env(cfg: &EnvConfig) -> Self {
        Self {
            soc_min: cfg.soc_min,
            soc_max: cfg.soc_max,
        }
    }

    /// SOC into its band; loads and generation non-negative; net power unbounded.
    pub fn clamp(&self, z: &mut [f64; N_FEATURES]) {
        z[0] = z[0].clamp(self.soc_min, self.soc_max);
        for v in &mut z[1..5] {
            *v = v.max(0.0);
        }
    }
}

pub fn perturb(
    x: &[f64; N_FEATURES],
    stats: &FeatureStats,
    perturb_scale: f64,
    bounds: &FeatureBounds,
    n: usize,
    rng: &mut impl Rng,
) -> Vec<[f64; N_FEATURES]> {
    (0..n)
        .map(|_| {
            let mut z: [f64; N_FEATURES] = std::array::from_fn(|j| {
                let noise: f64 = rng.sample(StandardNormal);
                x[j] + perturb_scale * stats.std[j] * noise
            });
            bounds.clamp(&mut z);
            z
        })
        .collect()
}

/// Euclidean distance between standardized feature vectors.
pub fn standardized_distance(
    x: &[f64; N_FEATURES],
    z: &[f64; N_FEATURES],
    stats: &FeatureStats,
) -> f64 {
    (0..N_FEATURES)
        .map(|j| ((x[j] - z[j]) / stats.std[j]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `exp(-d^2 / sigma^2)`.
pub fn proximity_kernel(distance: f64, sigma: f64) -> f64 {
    (-(distance * distance) / (sigma * sigma)).exp()
}

pub fn proximity_weights(
    x: &[f64; N_FEATURES],
    samples: &[[f64; N_FEATURES]],
    stats: &FeatureStats,
    sigma: f64,
) -> Vec<f64> {
    samples
        .iter()
        .map(|z| proximity_kernel(standardized_distance(x, z, stats), sigma))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub instance: [f64; N_FEATURES],
    pub action_dim: usize,
    /// Surrogate intercept in raw feature units.
    pub intercept: f64,
    /// Slopes per raw feature unit.
    pub coefficients: [f64; N_FEATURES],
    /// Slopes per standard deviation of each feature (comparable across features).
    pub std_coefficients: [f64; N_FEATURES],
    /// Weighted R² of the surrogate on the perturbed samples.
    pub fidelity: f64,
    /// Black-box value at the instance.
    pub model_value: f64,
    /// Surrogate value at the instance.
    pub local_prediction: f64,
}

impl Explanation {
    pub fn action_name(&self) -> &'static str {
        ACTION_NAMES[self.action_dim]
    }

    pub fn feature_names(&self) -> [&'static str; N_FEATURES] {
        FEATURE_NAMES
    }

    pub fn is_low_trust(&self) -> bool {
        self.fidelity < LOW_FIDELITY
    }
}

/// Explains the scalar model `f` around `x`.
pub fn explain_with(
    f: impl Fn(&[f64; N_FEATURES]) -> Result<f64, NeuralError>,
    x: &[f64; N_FEATURES],
    action_dim: usize,
    cfg: &ExplainConfig,
    stats: &FeatureStats,
    bounds: &FeatureBounds,
) -> Result<Explanation, ExplainError> {
    if action_dim >= N_ACTIONS {
        return Err(ExplainError::ActionDim(action_dim));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples = perturb(x, stats, cfg.perturb_scale, bounds, cfg.n_samples, &mut rng);
    let targets = samples.iter().map(&f).collect::<Result<Vec<_>, _>>()?;
    let weights = proximity_weights(x, &samples, stats, cfg.kernel_sigma);
    let fit = fit_surrogate(
        &samples,
        &targets,
        &weights,
        stats,
        cfg.ridge_strength,
        cfg.top_k,
    )?;
    Ok(Explanation {
        instance: *x,
        action_dim,
        intercept: fit.intercept,
        coefficients: fit.coefficients,
        std_coefficients: fit.std_coefficients,
        fidelity: fit.r2,
        model_value: f(x)?,
        local_prediction: fit.predict(x),
    })
}

/// Explains dimension `action_dim` of the actor's mean output (pre-clip).
pub fn explain_action(
    policy: &GaussianPolicy,
    x: &[f64; N_FEATURES],
    action_dim: usize,
    cfg: &ExplainConfig,
    stats: &FeatureStats,
    bounds: &FeatureBounds,
) -> Result<Explanation, ExplainError> {
    if action_dim >= N_ACTIONS {
        return Err(ExplainError::ActionDim(action_dim));
    }
    explain_with(
        |z| Ok(policy.forward(z)?.0[action_dim]),
        x,
        action_dim,
        cfg,
        stats,
        bounds,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats() -> FeatureStats {
        FeatureStats::new(
            [0.55, 20.0, 15.0, 10.0, 60.0, 15.0],
            [0.2, 4.0, 6.0, 5.0, 45.0, 50.0],
        )
    }

    const BOUNDS: FeatureBounds = FeatureBounds {
        soc_min: 0.2,
        soc_max: 0.9,
    };
    const X: [f64; 6] = [0.5, 22.0, 14.0, 9.0, 70.0, 25.0];

    #[test]
    fn zero_scale_reproduces_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(perturb(&X, &stats(), 0.0, &BOUNDS, 50, &mut rng)
            .iter()
            .all(|z| *z == X));
    }

    #[test]
    fn perturbation_is_seeded_and_clamped() {
        let a = perturb(
            &X,
            &stats(),
            3.0,
            &BOUNDS,
            200,
            &mut ChaCha8Rng::seed_from_u64(4),
        );
        let b = perturb(
            &X,
            &stats(),
            3.0,
            &BOUNDS,
            200,
            &mut ChaCha8Rng::seed_from_u64(4),
        );
        assert_eq!(a, b);
        assert!(a
            .iter()
            .all(|z| (0.2..=0.9).contains(&z[0]) && z[1..5].iter().all(|v| *v >= 0.0)));
        assert!(a.iter().any(|z| z[5] < 0.0));
    }

    #[test]
    fn perturbation_spread_matches_sampler() {
        // Far from every clamp so the noise is untruncated.
        let s = FeatureStats::new([0.0; 6], [0.01, 1.0, 2.0, 0.5, 3.0, 4.0]);
        let x = [0.55, 100.0, 100.0, 100.0, 100.0, 0.0];
        let scale = 0.8;
        let samples = perturb(
            &x,
            &s,
            scale,
            &BOUNDS,
            5000,
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        for j in 0..6 {
            let m = samples.iter().map(|z| z[j]).sum::<f64>() / 5000.0;
            let sd = (samples.iter().map(|z| (z[j] - m).powi(2)).sum::<f64>() / 5000.0).sqrt();
            let want = scale * s.std[j];
            assert!(
                (sd - want).abs() < 0.1 * want,
                "feature {j}: {sd} vs {want}"
            );
        }
    }

    #[test]
    fn kernel_closed_forms() {
        let sigma = 1.7;
        assert_eq!(proximity_kernel(0.0, sigma), 1.0);
        assert!((proximity_kernel(sigma, sigma) - (-1f64).exp()).abs() < 1e-12);
        assert!((proximity_kernel(2.0 * sigma, sigma) - (-4f64).exp()).abs() < 1e-12);
        assert!((proximity_kernel(sigma, sigma) - 0.36788).abs() < 1e-5);
        assert!((proximity_kernel(2.0 * sigma, sigma) - 0.01832).abs() < 1e-5);
        let w = proximity_weights(&X, &[X], &stats(), sigma);
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn mock_soc_actor_is_explained_by_soc() {
        let e = explain_with(
            |z| Ok(z[0]),
            &X,
            0,
            &ExplainConfig::default(),
            &stats(),
            &BOUNDS,
        )
        .unwrap();
        let soc = e.std_coefficients[0].abs();
        assert!(
            e.std_coefficients[1..].iter().all(|c| c.abs() < 0.05 * soc),
            "{:?}",
            e.std_coefficients
        );
        assert!(e.fidelity > 0.999);
    }

    #[test]
    fn explanation_is_deterministic_per_seed() {
        let f = |z: &[f64; 6]| Ok((z[0] * 3.0).sin() + z[4] / 100.0);
        let cfg = ExplainConfig {
            n_samples: 500,
            ..Default::default()
        };
        let a = explain_with(f, &X, 1, &cfg, &stats(), &BOUNDS).unwrap();
        let b = explain_with(f, &X, 1, &cfg, &stats(), &BOUNDS).unwrap();
        assert_eq!(a, b);
        assert!(explain_with(f, &X, 5, &cfg, &stats(), &BOUNDS).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ExplainConfig::default().validate().is_empty());
        let bad = ExplainConfig {
            n_samples: 3,
            kernel_sigma: 0.0,
            top_k: 0,
            ..Default::default()
        };
        assert_eq!(bad.validate().len(), 3);
    }
}
