//! Islanded microgrid MDP: battery dynamics, weighted load allocation and the
//! priority-weighted resilience reward.
//!
//! Action layout: `[a_ch, a_dis, w1, w2, w3]`, every entry clamped to `[-1, 1]`.
//! Negative charge/discharge entries request zero power. Charging is only
//! possible from a renewable surplus and discharging only covers a deficit;
//! both are limited by the converter rating and by the energy that can move
//! without leaving `[soc_min, soc_max]` once efficiency losses are applied.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{validate_scenario, Scenario};

pub const N_FEATURES: usize = 6;
pub const N_ACTIONS: usize = 5;
pub const N_TIERS: usize = 3;

/// Display names of the observation features, in observation order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "SOC",
    "Load_1",
    "Load_2",
    "Load_3",
    "Renewable generation",
    "Net energy",
];

pub const ACTION_CHARGE: usize = 0;
pub const ACTION_DISCHARGE: usize = 1;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("scenario has no steps")]
    EmptyScenario,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("episode already finished at step {0}")]
    EpisodeFinished(usize),
    #[error("non-finite action component {0}")]
    NonFiniteAction(usize),
    #[error("non-finite softmax input")]
    NonFiniteWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub soc_min: f64,
    pub soc_max: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    pub e_max_kwh: f64,
    pub p_conv_kw: f64,
    /// Shortage penalty weights for the essential, business and agricultural tiers.
    pub reward_weights: [f64; N_TIERS],
    pub init_soc_range: [f64; 2],
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            soc_min: 0.2,
            soc_max: 0.9,
            eta_ch: 0.90,
            eta_dis: 0.95,
            e_max_kwh: 780.0,
            p_conv_kw: 52.0,
            reward_weights: [7.0, 2.0, 1.0],
            init_soc_range: [0.2, 0.9],
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Vec<(String, String)> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, msg: String| errs.push((format!("env.{field}"), msg));
        if !(0.0 < self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            bad(
                "soc_min",
                format!(
                    "need 0 < soc_min < soc_max <= 1, got {} / {}",
                    self.soc_min, self.soc_max
                ),
            );
        }
        for (name, v) in [("eta_ch", self.eta_ch), ("eta_dis", self.eta_dis)] {
            if !(v > 0.0 && v <= 1.0) {
                bad(name, format!("must lie in (0, 1], got {v}"));
            }
        }
        if !(self.e_max_kwh > 0.0 && self.e_max_kwh.is_finite()) {
            bad(
                "e_max_kwh",
                format!("must be positive, got {}", self.e_max_kwh),
            );
        }
        if !(self.p_conv_kw > 0.0 && self.p_conv_kw.is_finite()) {
            bad(
                "p_conv_kw",
                format!("must be positive, got {}", self.p_conv_kw),
            );
        }
        let w = self.reward_weights;
        if !(w[0] > w[1] && w[1] > w[2] && w[2] > 0.0) {
            bad(
                "reward_weights",
                format!("must be positive and strictly decreasing, got {w:?}"),
            );
        }
        let [lo, hi] = self.init_soc_range;
        if !(self.soc_min <= lo && lo <= hi && hi <= self.soc_max) {
            bad(
                "init_soc_range",
                format!("must satisfy soc_min <= lo <= hi <= soc_max, got [{lo}, {hi}]"),
            );
        }
        errs
    }
}

/// Observation at one step plus the internal clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub t: usize,
    pub soc: f64,
    pub loads_now: [f64; N_TIERS],
    pub p_re_now: f64,
    pub p_net_now: f64,
}

impl EnvState {
    fn at(scn: &Scenario, t: usize, soc: f64) -> Self {
        let loads_now = scn.loads_at(t);
        let p_re_now = scn.p_re[t];
        Self {
            t,
            soc,
            loads_now,
            p_re_now,
            p_net_now: net_power(p_re_now, loads_now),
        }
    }

    /// `[SOC, L1, L2, L3, P_RE, P_net]`.
    pub fn features(&self) -> [f64; N_FEATURES] {
        let [l1, l2, l3] = self.loads_now;
        [self.soc, l1, l2, l3, self.p_re_now, self.p_net_now]
    }
}

pub fn net_power(p_re: f64, loads: [f64; N_TIERS]) -> f64 {
    p_re - (loads[0] + loads[1] + loads[2])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionVector {
    pub a_ch: f64,
    pub a_dis: f64,
    pub w_raw: [f64; N_TIERS],
}

impl ActionVector {
    pub const IDLE: ActionVector = ActionVector {
        a_ch: 0.0,
        a_dis: 0.0,
        w_raw: [0.0; N_TIERS],
    };

    /// Clamps every component into `[-1, 1]`.
    pub fn from_slice(a: &[f64; N_ACTIONS]) -> Self {
        let c = |v: f64| v.clamp(-1.0, 1.0);
        Self {
            a_ch: c(a[0]),
            a_dis: c(a[1]),
            w_raw: [c(a[2]), c(a[3]), c(a[4])],
        }
    }

    pub fn to_array(self) -> [f64; N_ACTIONS] {
        [
            self.a_ch,
            self.a_dis,
            self.w_raw[0],
            self.w_raw[1],
            self.w_raw[2],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryFlow {
    pub p_ch: f64,
    pub p_dis: f64,
    pub soc_next: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub allocations: [f64; N_TIERS],
    pub imbalances: [f64; N_TIERS],
    pub shortages: [f64; N_TIERS],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// State the action was applied in.
    pub state: EnvState,
    pub next_state: EnvState,
    pub action: ActionVector,
    pub weights: [f64; N_TIERS],
    pub reward: f64,
    pub p_ch: f64,
    pub p_dis: f64,
    pub p_supply: f64,
    pub allocations: [f64; N_TIERS],
    pub imbalances: [f64; N_TIERS],
    pub shortages: [f64; N_TIERS],
    pub done: bool,
}

/// Max-subtracted softmax over the raw allocation weights.
pub fn normalize_weights(w_raw: [f64; N_TIERS]) -> Result<[f64; N_TIERS], EnvError> {
    if w_raw.iter().any(|w| !w.is_finite()) {
        return Err(EnvError::NonFiniteWeights);
    }
    let max = w_raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = w_raw.map(|w| (w - max).exp());
    let sum: f64 = e.iter().sum();
    Ok(e.map(|v| v / sum))
}

/// Resolves the requested battery powers against mutual exclusion, surplus or
/// deficit, converter rating and SOC headroom, and returns the new SOC.
pub fn apply_battery(state: &EnvState, act: &ActionVector, cfg: &EnvConfig) -> BatteryFlow {
    let soc = state.soc;
    let p_ch_req = act.a_ch.max(0.0) * cfg.p_conv_kw;
    let p_dis_req = act.a_dis.max(0.0) * cfg.p_conv_kw;

    let (p_ch, p_dis) = if state.p_net_now >= 0.0 {
        let headroom = ((cfg.soc_max - soc) * cfg.e_max_kwh / cfg.eta_ch).max(0.0);
        (p_ch_req.min(headroom).min(state.p_net_now), 0.0)
    } else {
        let available = ((soc - cfg.soc_min) * cfg.e_max_kwh * cfg.eta_dis).max(0.0);
        (0.0, p_dis_req.min(available).min(-state.p_net_now))
    };

    let soc_next = soc_update(soc, p_ch, p_dis, cfg).clamp(cfg.soc_min, cfg.soc_max);
    BatteryFlow {
        p_ch,
        p_dis,
        soc_next,
    }
}

/// SOC after one step of charging `p_ch` or discharging `p_dis` (no clamping).
pub fn soc_update(soc: f64, p_ch: f64, p_dis: f64, cfg: &EnvConfig) -> f64 {
    soc + (cfg.eta_ch * p_ch - p_dis / cfg.eta_dis) / cfg.e_max_kwh
}

pub fn allocate_power(p_supply: f64, weights: [f64; N_TIERS], loads: [f64; N_TIERS]) -> Allocation {
    let allocations = weights.map(|w| w * p_supply);
    let mut imbalances = [0.0; N_TIERS];
    let mut shortages = [0.0; N_TIERS];
    for i in 0..N_TIERS {
        imbalances[i] = allocations[i] - loads[i];
        shortages[i] = (-imbalances[i]).max(0.0);
    }
    Allocation {
        allocations,
        imbalances,
        shortages,
    }
}

/// One minus the priority-weighted unserved fraction. No demand at all scores 1.
pub fn step_reward(shortages: [f64; N_TIERS], loads: [f64; N_TIERS], cfg: &EnvConfig) -> f64 {
    let w = cfg.reward_weights;
    let demand: f64 = (0..N_TIERS).map(|i| w[i] * loads[i]).sum();
    if demand <= 0.0 {
        return 1.0;
    }
    let unserved: f64 = (0..N_TIERS).map(|i| w[i] * shortages[i]).sum();
    (1.0 - unserved / demand).clamp(0.0, 1.0)
}

/// Draws the initial state; SOC is uniform on `init_soc_range`.
pub fn reset(cfg: &EnvConfig, scn: &Scenario, seed: u64) -> Result<EnvState, EnvError> {
    if scn.horizon() == 0 {
        return Err(EnvError::EmptyScenario);
    }
    let [lo, hi] = cfg.init_soc_range;
    let soc = if hi > lo {
        ChaCha8Rng::seed_from_u64(seed).random_range(lo..=hi)
    } else {
        lo
    };
    Ok(EnvState::at(scn, 0, soc))
}

/// Applies one action. The terminal step reports `next_state` at `t = horizon`
/// carrying the last row's exogenous values and the final SOC.
pub fn step(
    cfg: &EnvConfig,
    scn: &Scenario,
    state: &EnvState,
    action: &ActionVector,
) -> Result<StepOutcome, EnvError> {
    let horizon = scn.horizon();
    if state.t >= horizon {
        return Err(EnvError::EpisodeFinished(state.t));
    }
    let action = ActionVector::from_slice(&action.to_array());
    let weights = normalize_weights(action.w_raw)?;
    let flow = apply_battery(state, &action, cfg);
    let p_supply = state.p_re_now + flow.p_dis - flow.p_ch;
    let alloc = allocate_power(p_supply, weights, state.loads_now);
    let reward = step_reward(alloc.shortages, state.loads_now, cfg);

    let done = state.t + 1 == horizon;
    let next_state = if done {
        EnvState {
            t: horizon,
            soc: flow.soc_next,
            ..*state
        }
    } else {
        EnvState::at(scn, state.t + 1, flow.soc_next)
    };
    Ok(StepOutcome {
        state: *state,
        next_state,
        action,
        weights,
        reward,
        p_ch: flow.p_ch,
        p_dis: flow.p_dis,
        p_supply,
        allocations: alloc.allocations,
        imbalances: alloc.imbalances,
        shortages: alloc.shortages,
        done,
    })
}

/// Stateful wrapper around [`reset`] and [`step`] for rollout collection.
#[derive(Debug, Clone)]
pub struct MicrogridEnv {
    cfg: EnvConfig,
    scenario: Arc<Scenario>,
    state: EnvState,
    finished: bool,
}

impl MicrogridEnv {
    pub fn new(cfg: EnvConfig, scenario: Arc<Scenario>, seed: u64) -> Result<Self, EnvError> {
        let report = validate_scenario(&scenario);
        if !report.is_empty() {
            if scenario.horizon() == 0 {
                return Err(EnvError::EmptyScenario);
            }
            return Err(EnvError::InvalidScenario(report.to_string()));
        }
        let state = reset(&cfg, &scenario, seed)?;
        Ok(Self {
            cfg,
            scenario,
            state,
            finished: false,
        })
    }

    pub fn reset(&mut self, seed: u64) -> EnvState {
        self.state =
            reset(&self.cfg, &self.scenario, seed).expect("scenario validated at construction");
        self.finished = false;
        self.state
    }

    pub fn step(&mut self, action: &ActionVector) -> Result<StepOutcome, EnvError> {
        if self.finished {
            return Err(EnvError::EpisodeFinished(self.state.t));
        }
        let out = step(&self.cfg, &self.scenario, &self.state, action)?;
        self.state = out.next_state;
        self.finished = out.done;
        Ok(out)
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }
}
