//! Scores the reference policies on the default cyclone scenario, and a
//! trained checkpoint when one is given.
//!
//! ```text
//! cargo run --release --example evaluate_baselines -- [checkpoint.json]
//! ```

use microgrid_rl::env::EnvConfig;
use microgrid_rl::neural::Checkpoint;
use microgrid_rl::ppo::{
    evaluate_agent, Agent, DeterministicAgent, GreedyAgent, NoBatteryAgent, RandomAgent,
};
use microgrid_rl::scenario::{synth_cyclone_scenario, Scenario, ScenarioConfig};

fn score(
    name: &str,
    agent: &mut impl Agent,
    env: &EnvConfig,
    scenario: &Scenario,
) -> Result<(), Box<dyn std::error::Error>> {
    let e = evaluate_agent(agent, env, scenario, 5, 0)?;
    println!(
        "{name:<22} RI {:.4}  normalized reward {:.4}",
        e.mean_ri, e.mean_normalized_reward
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = EnvConfig::default();
    let scenario = synth_cyclone_scenario(&ScenarioConfig::default())?;

    score("random", &mut RandomAgent::new(1), &env, &scenario)?;
    score("greedy (rule-based)", &mut GreedyAgent, &env, &scenario)?;
    score(
        "greedy, battery idle",
        &mut NoBatteryAgent(GreedyAgent),
        &env,
        &scenario,
    )?;

    if let Some(path) = std::env::args().nth(1) {
        let (policy, _) = Checkpoint::load(&path)?.networks()?;
        score("trained", &mut DeterministicAgent(&policy), &env, &scenario)?;
        score(
            "trained, battery idle",
            &mut NoBatteryAgent(DeterministicAgent(&policy)),
            &env,
            &scenario,
        )?;
    }
    Ok(())
}
