//! Generates the synthetic cyclone scenario and writes it as CSV.
//!
//! ```text
//! cargo run --example synth_scenario -- [out.csv] [horizon] [seed]
//! ```

use microgrid_rl::scenario::{
    save_scenario_csv, synth_cyclone_scenario, validate_scenario, ScenarioConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args
        .first()
        .cloned()
        .unwrap_or_else(|| "scenario.csv".into());
    let mut cfg = ScenarioConfig::default();
    if let Some(h) = args.get(1) {
        cfg.horizon_steps = h.parse()?;
        cfg.cyclone_window = [
            cfg.cyclone_window[0].min(cfg.horizon_steps),
            cfg.cyclone_window[1].min(cfg.horizon_steps),
        ];
    }
    if let Some(s) = args.get(2) {
        cfg.rng_seed = s.parse()?;
    }

    let scn = synth_cyclone_scenario(&cfg)?;
    assert!(validate_scenario(&scn).is_empty());
    save_scenario_csv(&scn, &out)?;

    let n = scn.horizon() as f64;
    let re: f64 = scn.p_re.iter().sum();
    let load: f64 = (0..scn.horizon()).map(|t| scn.total_load_at(t)).sum();
    let deficit_hours = (0..scn.horizon())
        .filter(|&t| scn.p_re[t] < scn.total_load_at(t))
        .count();
    println!("wrote {} steps to {out}", scn.horizon());
    println!("renewable energy {re:.0} kWh (mean {:.1} kW)", re / n);
    println!("load energy      {load:.0} kWh (mean {:.1} kW)", load / n);
    println!("deficit hours    {deficit_hours}");
    Ok(())
}
