use nalgebra::{DMatrix, DVector};

use super::{ExplainError, FeatureStats};
use crate::env::N_FEATURES;

/// Weighted ridge surrogate. Slopes are fitted on standardized features and
/// also reported per raw unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateFit {
    pub std_intercept: f64,
    pub std_coefficients: [f64; N_FEATURES],
    pub intercept: f64,
    pub coefficients: [f64; N_FEATURES],
    /// Weighted coefficient of determination; 1 by convention when the
    /// targets have zero weighted variance.
    pub r2: f64,
}

impl SurrogateFit {
    pub fn predict(&self, z: &[f64; N_FEATURES]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(z)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }
}

/// Minimizes `sum w_i (y_i - b - beta . s_i)^2 + ridge * |beta|^2` over
/// standardized samples `s_i`, leaving the intercept unpenalized. With
/// `top_k` below the feature count, the fit is repeated on the `top_k`
/// features with the largest standardized slopes.
pub fn fit_surrogate(
    samples: &[[f64; N_FEATURES]],
    targets: &[f64],
    weights: &[f64],
    stats: &FeatureStats,
    ridge_strength: f64,
    top_k: usize,
) -> Result<SurrogateFit, ExplainError> {
    assert!(samples.len() == targets.len() && samples.len() == weights.len());
    if samples.len() < 10 {
        return Err(ExplainError::TooFewSamples(samples.len()));
    }
    if let Some(i) = targets.iter().position(|y| !y.is_finite()) {
        return Err(ExplainError::NonFiniteTarget(i));
    }
    let standardized: Vec<[f64; N_FEATURES]> =
        samples.iter().map(|z| stats.standardize(z)).collect();

    let all: Vec<usize> = (0..N_FEATURES).collect();
    let (mut b, mut beta) = solve(&standardized, targets, weights, &all, ridge_strength)?;
    if top_k < N_FEATURES {
        let mut order = all.clone();
        order.sort_by(|&i, &j| beta[j].abs().total_cmp(&beta[i].abs()).then(i.cmp(&j)));
        let mut keep = order[..top_k].to_vec();
        keep.sort_unstable();
        (b, beta) = solve(&standardized, targets, weights, &keep, ridge_strength)?;
    }

    let w_sum: f64 = weights.iter().sum();
    let y_bar = weights.iter().zip(targets).map(|(w, y)| w * y).sum::<f64>() / w_sum;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for ((s, y), w) in standardized.iter().zip(targets).zip(weights) {
        let pred = b + beta.iter().zip(s).map(|(c, v)| c * v).sum::<f64>();
        ss_res += w * (y - pred).powi(2);
        ss_tot += w * (y - y_bar).powi(2);
    }
    let scale = w_sum * y_bar.abs().max(1.0).powi(2);
    let r2 = if ss_tot <= 1e-24 * scale {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };

    let coefficients: [f64; N_FEATURES] = std::array::from_fn(|j| beta[j] / stats.std[j]);
    let intercept = b
        - (0..N_FEATURES)
            .map(|j| coefficients[j] * stats.mean[j])
            .sum::<f64>();
    Ok(SurrogateFit {
        std_intercept: b,
        std_coefficients: beta,
        intercept,
        coefficients,
        r2,
    })
}

// Normal equations over [1, s_active] with an SPD Cholesky solve.
fn solve(
    s: &[[f64; N_FEATURES]],
    y: &[f64],
    w: &[f64],
    active: &[usize],
    ridge: f64,
) -> Result<(f64, [f64; N_FEATURES]), ExplainError> {
    let p = active.len() + 1;
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for ((si, yi), wi) in s.iter().zip(y).zip(w) {
        row[0] = 1.0;
        for (k, &j) in active.iter().enumerate() {
            row[k + 1] = si[j];
        }
        for r in 0..p {
            rhs[r] += wi * row[r] * yi;
            for c in 0..=r {
                a[(r, c)] += wi * row[r] * row[c];
            }
        }
    }
    for r in 0..p {
        for c in 0..r {
            a[(c, r)] = a[(r, c)];
        }
    }
    for k in 1..p {
        a[(k, k)] += ridge;
    }
    let chol = a.cholesky().ok_or(ExplainError::Singular(ridge))?;
    let sol = chol.solve(&rhs);
    let mut beta = [0.0; N_FEATURES];
    for (k, &j) in active.iter().enumerate() {
        beta[j] = sol[k + 1];
    }
    Ok((sol[0], beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::{perturb, proximity_weights, FeatureBounds};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize) -> (FeatureStats, [f64; 6], Vec<[f64; 6]>, Vec<f64>) {
        let stats = FeatureStats::new(
            [0.55, 20.0, 15.0, 10.0, 60.0, 15.0],
            [0.2, 4.0, 6.0, 5.0, 45.0, 50.0],
        );
        let x = [0.5, 22.0, 14.0, 9.0, 70.0, 25.0];
        let bounds = FeatureBounds {
            soc_min: 0.2,
            soc_max: 0.9,
        };
        let samples = perturb(
            &x,
            &stats,
            1.0,
            &bounds,
            n,
            &mut ChaCha8Rng::seed_from_u64(3),
        );
        let weights = proximity_weights(&x, &samples, &stats, 0.75 * 6f64.sqrt());
        (stats, x, samples, weights)
    }

    #[test]
    fn recovers_exact_linear_target() {
        let (stats, _, samples, weights) = setup(5000);
        let y: Vec<f64> = samples
            .iter()
            .map(|z| 2.0 * z[0] - 3.0 * z[4] + 1.0)
            .collect();
        let fit = fit_surrogate(&samples, &y, &weights, &stats, 1e-3, 6).unwrap();
        let want = [2.0, 0.0, 0.0, 0.0, -3.0, 0.0];
        for j in 0..6 {
            assert!(
                (fit.coefficients[j] - want[j]).abs() <= 0.01 * want[j].abs().max(1.0),
                "{:?}",
                fit.coefficients
            );
        }
        assert!((fit.intercept - 1.0).abs() < 0.01, "{}", fit.intercept);
        assert!(fit.r2 >= 0.999);
    }

    #[test]
    fn constant_targets() {
        let (stats, _, samples, weights) = setup(100);
        let fit = fit_surrogate(&samples, &vec![4.0; 100], &weights, &stats, 1e-3, 6).unwrap();
        assert!(fit.std_coefficients.iter().all(|c| c.abs() < 1e-12));
        assert_eq!(fit.r2, 1.0);
    }

    #[test]
    fn duplicated_samples_leave_fit_unchanged() {
        let (stats, _, samples, weights) = setup(300);
        let y: Vec<f64> = samples
            .iter()
            .map(|z| (z[0] * 4.0).sin() + z[5] / 50.0)
            .collect();
        let fit = fit_surrogate(&samples, &y, &weights, &stats, 1e-3, 6).unwrap();
        fn twice<T: Clone>(v: &[T]) -> Vec<T> {
            [v, v].concat()
        }
        let fit2 = fit_surrogate(
            &twice(&samples),
            &twice(&y),
            &twice(&weights),
            &stats,
            1e-3,
            6,
        )
        .unwrap();
        // Doubling the data halves the ridge's relative pull, which is of order
        // ridge / sum(w).
        let w_sum: f64 = weights.iter().sum();
        let scale = fit
            .std_coefficients
            .iter()
            .fold(0.0f64, |m, c| m.max(c.abs()));
        for j in 0..6 {
            assert!(
                (fit.std_coefficients[j] - fit2.std_coefficients[j]).abs() < 2e-3 / w_sum * scale
            );
        }
        assert!((fit.r2 - fit2.r2).abs() < 1e-9);
        let exact = fit_surrogate(
            &twice(&samples),
            &twice(&y),
            &twice(&weights),
            &stats,
            0.0,
            6,
        )
        .unwrap();
        let single = fit_surrogate(&samples, &y, &weights, &stats, 0.0, 6).unwrap();
        for j in 0..6 {
            assert!((exact.std_coefficients[j] - single.std_coefficients[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn top_k_zeroes_weak_features() {
        let (stats, _, samples, weights) = setup(1000);
        let y: Vec<f64> = samples
            .iter()
            .map(|z| 5.0 * z[0] + 0.001 * z[1] - 0.05 * z[4])
            .collect();
        let fit = fit_surrogate(&samples, &y, &weights, &stats, 1e-3, 2).unwrap();
        let nonzero: Vec<usize> = (0..6).filter(|&j| fit.std_coefficients[j] != 0.0).collect();
        assert_eq!(nonzero, vec![0, 4]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (stats, _, samples, weights) = setup(20);
        assert!(matches!(
            fit_surrogate(&samples[..5], &[0.0; 5], &weights[..5], &stats, 1e-3, 6),
            Err(ExplainError::TooFewSamples(5))
        ));
        let mut y = vec![0.0; 20];
        y[7] = f64::NAN;
        assert!(matches!(
            fit_surrogate(&samples, &y, &weights, &stats, 1e-3, 6),
            Err(ExplainError::NonFiniteTarget(7))
        ));
    }
}
