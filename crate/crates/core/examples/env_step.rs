//! Steps the environment by hand through a surplus hour and a deficit hour.
//!
//! ```text
//! cargo run --example env_step
//! ```

use microgrid_rl::env::{reset, step, ActionVector, EnvConfig};
use microgrid_rl::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = EnvConfig {
        init_soc_range: [0.5, 0.5],
        ..Default::default()
    };
    // Hour 0 has 40 kW of surplus, hour 1 a 60 kW deficit.
    let scn = Scenario::new(
        vec![100.0, 10.0],
        [vec![30.0, 30.0], vec![20.0, 25.0], vec![10.0, 15.0]],
    )?;
    let mut state = reset(&cfg, &scn, 0)?;

    let actions = [
        (
            "charge fully, weights by priority",
            ActionVector {
                a_ch: 1.0,
                a_dis: 0.0,
                w_raw: [1.0, 0.0, -1.0],
            },
        ),
        (
            "discharge fully, essential first",
            ActionVector {
                a_ch: 0.0,
                a_dis: 1.0,
                w_raw: [1.0, -1.0, -1.0],
            },
        ),
    ];
    for (label, action) in actions {
        let out = step(&cfg, &scn, &state, &action)?;
        println!("t={} ({label})", out.state.t);
        println!("  SOC {:.4} -> {:.4}", out.state.soc, out.next_state.soc);
        println!(
            "  P_RE {:.1} kW, net {:+.1} kW",
            out.state.p_re_now, out.state.p_net_now
        );
        println!(
            "  p_ch {:.2} kW, p_dis {:.2} kW, supply {:.2} kW",
            out.p_ch, out.p_dis, out.p_supply
        );
        println!("  weights {:.3?}", out.weights);
        println!("  allocations {:.2?}", out.allocations);
        println!("  shortages {:.2?}", out.shortages);
        println!("  reward {:.4}", out.reward);
        state = out.next_state;
        if out.done {
            break;
        }
    }
    Ok(())
}
