//! Episode-level resilience and battery metrics.
//!
//! Battery life uses equivalent-full-cycle counting: the rated cycle count
//! times capacity gives a lifetime energy budget, which is divided by the
//! annualized one-direction throughput of an evaluation episode.

use crate::env::N_TIERS;
use crate::scenario::STEP_HOURS;
use crate::trajectory::Trajectory;

pub const HOURS_PER_YEAR: f64 = 8760.0;
pub const DEFAULT_RATED_CYCLES: f64 = 3000.0;

/// One minus the weighted ratio of unserved to demanded energy.
/// A zero weighted demand scores 1, matching the per-step reward.
pub fn resilience_index(
    shortage_sums: [f64; N_TIERS],
    load_sums: [f64; N_TIERS],
    weights: [f64; N_TIERS],
) -> f64 {
    let demand: f64 = (0..N_TIERS).map(|i| weights[i] * load_sums[i]).sum();
    if demand <= 0.0 {
        return 1.0;
    }
    let unserved: f64 = (0..N_TIERS).map(|i| weights[i] * shortage_sums[i]).sum();
    1.0 - unserved / demand
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResilienceReport {
    pub ri: f64,
    pub shortage_totals: [f64; N_TIERS],
    pub load_totals: [f64; N_TIERS],
    pub rewards: Vec<f64>,
}

impl ResilienceReport {
    pub fn from_trajectory(traj: &Trajectory, weights: [f64; N_TIERS]) -> Self {
        let mut shortage_totals = [0.0; N_TIERS];
        let mut load_totals = [0.0; N_TIERS];
        for s in &traj.steps {
            for i in 0..N_TIERS {
                shortage_totals[i] += s.shortages[i];
                load_totals[i] += s.loads[i];
            }
        }
        Self {
            ri: resilience_index(shortage_totals, load_totals, weights),
            shortage_totals,
            load_totals,
            rewards: traj.steps.iter().map(|s| s.reward).collect(),
        }
    }

    pub fn episode_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// `(sum of step rewards + RI) / (T + 1)`: each step scores at most 1 and
    /// the episode RI adds at most 1 more.
    pub fn normalized_reward(&self) -> f64 {
        normalized_episode_reward(self.episode_reward(), self.ri, self.rewards.len())
    }
}

pub fn normalized_episode_reward(episode_reward: f64, ri: f64, steps: usize) -> f64 {
    (episode_reward + ri) / (steps as f64 + 1.0)
}

/// Equivalent one-direction energy moved through the battery (kWh).
pub fn battery_throughput(traj: &Trajectory) -> f64 {
    traj.steps
        .iter()
        .map(|s| (s.p_ch + s.p_dis) * STEP_HOURS)
        .sum::<f64>()
        / 2.0
}

/// Scales an episode's throughput to a full year.
pub fn annualize(throughput_kwh: f64, episode_hours: f64) -> f64 {
    throughput_kwh * HOURS_PER_YEAR / episode_hours
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatteryLife {
    Years(f64),
    /// No throughput at all: cycling never limits life, calendar ageing does.
    ExceedsCalendarLife,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryLifeEstimate {
    pub annual_throughput_kwh: f64,
    pub lifetime_throughput_kwh: f64,
    pub life: BatteryLife,
}

pub fn estimate_battery_life(
    annual_throughput_kwh: f64,
    rated_cycles: f64,
    e_max_kwh: f64,
) -> BatteryLifeEstimate {
    let lifetime_throughput_kwh = rated_cycles * e_max_kwh;
    let life = if annual_throughput_kwh > 0.0 {
        BatteryLife::Years(lifetime_throughput_kwh / annual_throughput_kwh)
    } else {
        BatteryLife::ExceedsCalendarLife
    };
    BatteryLifeEstimate {
        annual_throughput_kwh,
        lifetime_throughput_kwh,
        life,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub window: usize,
    pub rolling_mean: Vec<f64>,
    pub rolling_std: Vec<f64>,
    pub final_value: f64,
    pub last_quartile_mean: f64,
    /// First index from which the rolling mean stays within `tolerance` (relative) of the final value.
    pub convergence_index: usize,
}

pub const CONVERGENCE_TOLERANCE: f64 = 0.02;

/// Trailing-window statistics of a reward history. Needs at least two entries.
pub fn reward_curve_summary(history: &[f64], window: usize) -> Option<ConvergenceReport> {
    if history.len() < 2 {
        return None;
    }
    let window = window.max(1);
    let mut rolling_mean = Vec::with_capacity(history.len());
    let mut rolling_std = Vec::with_capacity(history.len());
    for i in 0..history.len() {
        let chunk = &history[(i + 1).saturating_sub(window)..=i];
        let n = chunk.len() as f64;
        let mean = chunk.iter().sum::<f64>() / n;
        let var = chunk.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        rolling_mean.push(mean);
        rolling_std.push(var.sqrt());
    }
    let final_value = *rolling_mean.last().unwrap();
    let tol = CONVERGENCE_TOLERANCE * final_value.abs();
    let convergence_index = rolling_mean
        .iter()
        .rposition(|m| (m - final_value).abs() > tol)
        .map_or(0, |i| i + 1);
    let tail = &history[history.len() * 3 / 4..];
    let last_quartile_mean = tail.iter().sum::<f64>() / tail.len() as f64;
    Some(ConvergenceReport {
        window,
        rolling_mean,
        rolling_std,
        final_value,
        last_quartile_mean,
        convergence_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: [f64; 3] = [7.0, 2.0, 1.0];

    #[test]
    fn ri_cases() {
        assert_eq!(resilience_index([0.0; 3], [5.0, 6.0, 7.0], W), 1.0);
        assert_eq!(resilience_index([5.0, 6.0, 7.0], [5.0, 6.0, 7.0], W), 0.0);
        assert_eq!(resilience_index([0.0, 50.0, 100.0], [100.0; 3], W), 0.8);
        assert_eq!(resilience_index([0.0; 3], [0.0; 3], W), 1.0);
    }

    #[test]
    fn battery_life_cases() {
        let e = estimate_battery_life(156_000.0, 3000.0, 780.0);
        assert_eq!(e.lifetime_throughput_kwh, 2_340_000.0);
        assert_eq!(e.life, BatteryLife::Years(15.0));
        assert_eq!(
            estimate_battery_life(2_340_000.0, 3000.0, 780.0).life,
            BatteryLife::Years(1.0)
        );
        assert_eq!(
            estimate_battery_life(78_000.0, 3000.0, 780.0).life,
            BatteryLife::Years(30.0)
        );
        assert_eq!(
            estimate_battery_life(0.0, 3000.0, 780.0).life,
            BatteryLife::ExceedsCalendarLife
        );
    }

    #[test]
    fn annualizing_a_month() {
        assert_eq!(annualize(720.0, 720.0), 8760.0);
    }

    #[test]
    fn constant_history_converges_immediately() {
        let r = reward_curve_summary(&[0.8; 10], 4).unwrap();
        assert_eq!(r.convergence_index, 0);
        assert!(r.rolling_std.iter().all(|&s| s < 1e-15));
        assert!((r.last_quartile_mean - 0.8).abs() < 1e-15);
        assert!(reward_curve_summary(&[1.0], 4).is_none());
    }

    #[test]
    fn ramp_then_flat() {
        let window = 5;
        let mut h: Vec<f64> = (0..20).map(|i| 0.5 + 0.025 * i as f64).collect();
        let flat_start = h.len();
        h.extend(std::iter::repeat_n(1.0, 30));
        let r = reward_curve_summary(&h, window).unwrap();
        assert!(
            r.convergence_index >= flat_start.saturating_sub(window),
            "{}",
            r.convergence_index
        );
        assert!(
            r.convergence_index <= flat_start + window,
            "{}",
            r.convergence_index
        );
        assert_eq!(r.final_value, 1.0);
    }
}
