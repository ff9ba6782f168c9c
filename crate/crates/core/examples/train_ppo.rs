//! Trains a PPO agent and compares it with the random and no-battery baselines.
//!
//! ```text
//! cargo run --release --example train_ppo -- [cyclone|balanced] [updates] [seed] [checkpoint.json]
//! ```

use std::sync::Arc;

use microgrid_rl::env::EnvConfig;
use microgrid_rl::neural::Checkpoint;
use microgrid_rl::ppo::{
    evaluate_agent, train, DeterministicAgent, GreedyAgent, NoBatteryAgent, PpoConfig, RandomAgent,
    TrainError,
};
use microgrid_rl::scenario::{balanced_scenario, synth_cyclone_scenario, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind = args.first().map(String::as_str).unwrap_or("cyclone");
    let updates: Option<usize> = args.get(1).map(|s| s.parse()).transpose()?;
    let seed: u64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(0);

    // Per-scenario settings: the balanced case is a contextual bandit (the
    // battery never moves), so a short horizon and larger steps suit it.
    let (scenario, cfg) = match kind {
        "balanced" => (
            balanced_scenario(&ScenarioConfig {
                horizon_steps: 48,
                cyclone_window: [0, 0],
                ..Default::default()
            })?,
            PpoConfig {
                gamma: 0.01,
                learning_rate: 1e-3,
                rollout_steps: 960,
                total_updates: updates.unwrap_or(50),
                seed,
                ..Default::default()
            },
        ),
        _ => (
            synth_cyclone_scenario(&ScenarioConfig::default())?,
            PpoConfig {
                gamma: 0.9,
                total_updates: updates.unwrap_or(200),
                seed,
                ..Default::default()
            },
        ),
    };
    let updates = cfg.total_updates;
    let scenario = Arc::new(scenario);
    let env_cfg = EnvConfig::default();

    let start = std::time::Instant::now();
    let out = train(&cfg, &env_cfg, Arc::clone(&scenario), |_, s| {
        println!(
            "update {:>3}  reward_norm {:.4}  RI {:.4}  pi {:+.4}  vf {:.4}  H {:+.3}  clip {:.3}  kl {:.4}",
            s.update, s.mean_reward_norm, s.ri, s.policy_loss, s.value_loss, s.entropy, s.clip_frac, s.approx_kl
        );
        Ok::<_, TrainError>(())
    })?;
    println!("trained in {:.1?}", start.elapsed());
    println!("log_std {:?}", out.policy.log_std());
    if let Some(path) = args.get(3) {
        Checkpoint::new(&out.policy, &out.value, updates).save(path)?;
        println!("checkpoint written to {path}");
    }

    let eval_seed = 99;
    let trained = evaluate_agent(
        &mut DeterministicAgent(&out.policy),
        &env_cfg,
        &scenario,
        5,
        eval_seed,
    )?;
    let random = evaluate_agent(
        &mut RandomAgent::new(seed),
        &env_cfg,
        &scenario,
        5,
        eval_seed,
    )?;
    let idle = evaluate_agent(
        &mut NoBatteryAgent(DeterministicAgent(&out.policy)),
        &env_cfg,
        &scenario,
        5,
        eval_seed,
    )?;
    println!(
        "RI trained    {:.4}  (reward_norm {:.4})",
        trained.mean_ri, trained.mean_normalized_reward
    );
    println!("RI random     {:.4}", random.mean_ri);
    println!("RI no-battery {:.4}", idle.mean_ri);
    let greedy = evaluate_agent(&mut GreedyAgent, &env_cfg, &scenario, 5, eval_seed)?;
    let greedy_idle = evaluate_agent(
        &mut NoBatteryAgent(GreedyAgent),
        &env_cfg,
        &scenario,
        5,
        eval_seed,
    )?;
    println!(
        "RI greedy     {:.4}  (no battery {:.4})",
        greedy.mean_ri, greedy_idle.mean_ri
    );
    Ok(())
}
