//! Equivalent-full-cycle battery life, from the textbook case or from an
//! evaluation trajectory.
//!
//! ```text
//! cargo run --example battery_life -- [trajectory.csv] [rated_cycles]
//! ```

use microgrid_rl::env::EnvConfig;
use microgrid_rl::metrics::{
    annualize, battery_throughput, estimate_battery_life, BatteryLife, DEFAULT_RATED_CYCLES,
};
use microgrid_rl::trajectory::Trajectory;

fn show(label: &str, annual: f64, rated_cycles: f64, e_max: f64) {
    let est = estimate_battery_life(annual, rated_cycles, e_max);
    let life = match est.life {
        BatteryLife::Years(y) => format!("{y:.2} years"),
        BatteryLife::ExceedsCalendarLife => "exceeds rated calendar life".into(),
    };
    println!(
        "{label}: {:.0} kWh lifetime / {annual:.0} kWh per year -> {life}",
        est.lifetime_throughput_kwh
    );
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let rated_cycles = args
        .get(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(DEFAULT_RATED_CYCLES);
    let e_max = EnvConfig::default().e_max_kwh;

    show("reference case", 156_000.0, 3000.0, 780.0);

    if let Some(path) = args.first() {
        let traj = Trajectory::load_csv(path)?;
        let per_episode = battery_throughput(&traj);
        let annual = annualize(per_episode, traj.len() as f64);
        println!("{path}: {} steps, {per_episode:.1} kWh moved", traj.len());
        show("trajectory", annual, rated_cycles, e_max);
    }
    Ok(())
}
