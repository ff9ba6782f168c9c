//! Compares the analytic PPO loss gradient with central finite differences
//! on a small random actor-critic pair.
//!
//! ```text
//! cargo run --example gradient_check -- [seed]
//! ```

use microgrid_rl::env::N_FEATURES;
use microgrid_rl::neural::gradcheck::{central_difference, max_relative_error};
use microgrid_rl::neural::{FeatureScaler, GaussianPolicy, ValueNet};
use microgrid_rl::ppo::{ppo_loss, ppo_loss_and_grad, LossCoefficients, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = [5, 4];
    let policy = GaussianPolicy::new(&hidden, -0.5, 1.0, FeatureScaler::identity(), &mut rng)?;
    let value = ValueNet::new(&hidden, FeatureScaler::identity(), &mut rng)?;

    let batch: Vec<Sample> = (0..16)
        .map(|_| {
            let features: [f64; N_FEATURES] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let preclip = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            Sample {
                features,
                preclip,
                log_prob_old: policy.log_prob_and_entropy(&features, &preclip).unwrap().0
                    + rng.random_range(-0.05..0.05),
                advantage: rng.random_range(-1.0..1.0),
                ret: rng.random_range(-1.0..1.0),
            }
        })
        .collect();
    let coef = LossCoefficients {
        clip_eps: 0.2,
        c1: 0.5,
        c2: 0.01,
    };

    let mut pg = vec![0.0; policy.n_params()];
    let mut vg = vec![0.0; value.params.len()];
    let loss = ppo_loss_and_grad(&policy, &value, &batch, coef, &mut pg, &mut vg)?;
    println!(
        "loss {:.6} (policy {:.6}, value {:.6}, entropy {:.4})",
        loss.total, loss.policy, loss.value, loss.entropy
    );

    let fd_policy = central_difference(
        |p| {
            let mut q = policy.clone();
            q.params_mut().copy_from_slice(p);
            ppo_loss(&q, &value, &batch, coef).unwrap().total
        },
        policy.params(),
        1e-5,
    );
    let fd_value = central_difference(
        |p| {
            let mut v = value.clone();
            v.params.copy_from_slice(p);
            ppo_loss(&policy, &v, &batch, coef).unwrap().total
        },
        &value.params,
        1e-5,
    );
    println!(
        "actor:  {} params, max relative error {:.2e}",
        pg.len(),
        max_relative_error(&pg, &fd_policy)
    );
    println!(
        "critic: {} params, max relative error {:.2e}",
        vg.len(),
        max_relative_error(&vg, &fd_value)
    );
    Ok(())
}
