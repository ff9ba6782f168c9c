//! Runs scenario, train, eval, explain and report through the CLI entry point
//! with a small configuration.
//!
//! ```text
//! cargo run --release --example full_pipeline -- [run_dir]
//! ```

use microgrid_rl::cli::main_with_args;

const CONFIG: &str = r#"
run.seed = 17
scenario.horizon_steps = 168
scenario.cyclone_window = [72, 108]
ppo.gamma = 0.9
ppo.total_updates = 20
ppo.rollout_steps = 336
ppo.minibatch_size = 84
ppo.checkpoint_every = 10
explain.n_samples = 2000
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "runs/pipeline".into());
    std::fs::create_dir_all(&dir)?;
    let config = format!("{dir}/pipeline.toml");
    std::fs::write(&config, CONFIG)?;

    let steps: [&[&str]; 6] = [
        &["scenario"],
        &["train"],
        &["eval"],
        &["explain", "--mode", "charge"],
        &["explain", "--mode", "discharge"],
        &["report"],
    ];
    for extra in steps {
        let mut args = vec!["microgrid-rl", "--config", &config, "--out", &dir];
        args.extend_from_slice(extra);
        println!("$ {}", args.join(" "));
        let code = main_with_args(&args);
        if code != 0 {
            return Err(format!("`{}` exited with {code}", extra.join(" ")).into());
        }
    }
    Ok(())
}
