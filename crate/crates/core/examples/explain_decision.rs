//! Explains the first idle, charging and discharging decisions of a trained
//! agent on the default cyclone scenario.
//!
//! ```text
//! cargo run --release --example train_ppo -- cyclone 200 0 /tmp/agent.json
//! cargo run --release --example explain_decision -- /tmp/agent.json [out_dir]
//! ```

use microgrid_rl::env::{EnvConfig, ACTION_CHARGE, ACTION_DISCHARGE, FEATURE_NAMES};
use microgrid_rl::explain::{
    explain_action, render_explanation, ExplainConfig, FeatureBounds, FeatureStats,
};
use microgrid_rl::neural::Checkpoint;
use microgrid_rl::ppo::evaluate_policy;
use microgrid_rl::scenario::{synth_cyclone_scenario, ScenarioConfig};
use microgrid_rl::trajectory::Mode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ckpt = args
        .first()
        .ok_or("usage: explain_decision <checkpoint.json> [out_dir]")?;
    let out_dir = std::path::PathBuf::from(
        args.get(1)
            .cloned()
            .unwrap_or_else(|| "explanations".into()),
    );

    let (policy, _) = Checkpoint::load(ckpt)?.networks()?;
    let env_cfg = EnvConfig::default();
    let scenario = synth_cyclone_scenario(&ScenarioConfig::default())?;
    let eval = evaluate_policy(&policy, &env_cfg, &scenario, 1, true, 0)?;
    let traj = &eval.episodes[0].trajectory;
    println!("evaluation RI {:.4}", eval.mean_ri);

    let states: Vec<_> = traj.steps.iter().map(|s| s.features()).collect();
    let stats = FeatureStats::from_states(&states);
    let bounds = FeatureBounds::from_env(&env_cfg);
    let cfg = ExplainConfig::default();

    for mode in [Mode::Idle, Mode::Charge, Mode::Discharge] {
        let Some(step) = traj.first_in_mode(mode) else {
            println!("\nno {} step in the trajectory", mode.name());
            continue;
        };
        println!("\n{} at t = {}", mode.name(), step.t);
        for dim in [ACTION_CHARGE, ACTION_DISCHARGE] {
            let e = explain_action(&policy, &step.features(), dim, &cfg, &stats, &bounds)?;
            let files = render_explanation(
                &e,
                &out_dir,
                &format!("{}_t{}_{}", mode.name(), step.t, e.action_name()),
            )?;
            println!(
                "  {} (R2 {:.3}) -> {}",
                e.action_name(),
                e.fidelity,
                files.svg.display()
            );
            for (name, c) in FEATURE_NAMES.iter().zip(e.std_coefficients) {
                println!("    {name:<22} {c:+.4}");
            }
        }
    }
    Ok(())
}
