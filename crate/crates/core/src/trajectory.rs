//! Per-step evaluation log shared by metrics, reporting and explanation.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::env::{StepOutcome, N_FEATURES, N_TIERS};

pub const TRAJECTORY_HEADER: [&str; 26] = [
    "t", "soc", "soc_next", "p_re", "l1", "l2", "l3", "p_net", "a_ch", "a_dis", "w1", "w2", "w3",
    "p_ch", "p_dis", "p_supply", "alloc1", "alloc2", "alloc3", "imb1", "imb2", "imb3", "sh1",
    "sh2", "sh3", "reward",
];

/// Battery flows below this magnitude (kW) count as idle.
pub const IDLE_THRESHOLD_KW: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("cannot access trajectory {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trajectory header does not match the expected layout")]
    Header,
    #[error("trajectory row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Idle,
    Charge,
    Discharge,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Idle => "idle",
            Mode::Charge => "charge",
            Mode::Discharge => "discharge",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "idle" => Ok(Mode::Idle),
            "charge" | "charging" => Ok(Mode::Charge),
            "discharge" | "discharging" => Ok(Mode::Discharge),
            other => Err(format!(
                "unknown mode `{other}` (expected idle, charge or discharge)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub soc: f64,
    pub soc_next: f64,
    pub p_re: f64,
    pub loads: [f64; N_TIERS],
    pub p_net: f64,
    pub action: [f64; 5],
    pub p_ch: f64,
    pub p_dis: f64,
    pub p_supply: f64,
    pub allocations: [f64; N_TIERS],
    pub imbalances: [f64; N_TIERS],
    pub shortages: [f64; N_TIERS],
    pub reward: f64,
}

impl StepRecord {
    pub fn from_outcome(o: &StepOutcome) -> Self {
        Self {
            t: o.state.t,
            soc: o.state.soc,
            soc_next: o.next_state.soc,
            p_re: o.state.p_re_now,
            loads: o.state.loads_now,
            p_net: o.state.p_net_now,
            action: o.action.to_array(),
            p_ch: o.p_ch,
            p_dis: o.p_dis,
            p_supply: o.p_supply,
            allocations: o.allocations,
            imbalances: o.imbalances,
            shortages: o.shortages,
            reward: o.reward,
        }
    }

    /// Observation the action was taken in.
    pub fn features(&self) -> [f64; N_FEATURES] {
        [
            self.soc,
            self.loads[0],
            self.loads[1],
            self.loads[2],
            self.p_re,
            self.p_net,
        ]
    }

    pub fn mode(&self) -> Mode {
        if self.p_ch > IDLE_THRESHOLD_KW {
            Mode::Charge
        } else if self.p_dis > IDLE_THRESHOLD_KW {
            Mode::Discharge
        } else {
            Mode::Idle
        }
    }

    fn values(&self) -> [f64; 26] {
        let mut v = [0.0; 26];
        v[0] = self.t as f64;
        v[1] = self.soc;
        v[2] = self.soc_next;
        v[3] = self.p_re;
        v[4..7].copy_from_slice(&self.loads);
        v[7] = self.p_net;
        v[8..13].copy_from_slice(&self.action);
        v[13] = self.p_ch;
        v[14] = self.p_dis;
        v[15] = self.p_supply;
        v[16..19].copy_from_slice(&self.allocations);
        v[19..22].copy_from_slice(&self.imbalances);
        v[22..25].copy_from_slice(&self.shortages);
        v[25] = self.reward;
        v
    }

    fn from_values(v: &[f64; 26]) -> Self {
        let tri = |i: usize| [v[i], v[i + 1], v[i + 2]];
        Self {
            t: v[0] as usize,
            soc: v[1],
            soc_next: v[2],
            p_re: v[3],
            loads: tri(4),
            p_net: v[7],
            action: [v[8], v[9], v[10], v[11], v[12]],
            p_ch: v[13],
            p_dis: v[14],
            p_supply: v[15],
            allocations: tri(16),
            imbalances: tri(19),
            shortages: tri(22),
            reward: v[25],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first_in_mode(&self, mode: Mode) -> Option<&StepRecord> {
        self.steps.iter().find(|s| s.mode() == mode)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", TRAJECTORY_HEADER.join(","))?;
        for s in &self.steps {
            let v = s.values();
            let mut line = s.t.to_string();
            for x in &v[1..] {
                line.push(',');
                line.push_str(&x.to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), TrajectoryError> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to memory");
        std::fs::write(path, buf).map_err(|source| TrajectoryError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn parse_csv(text: &str) -> Result<Self, TrajectoryError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        if header.len() != TRAJECTORY_HEADER.len()
            || header.iter().zip(TRAJECTORY_HEADER).any(|(a, b)| a != b)
        {
            return Err(TrajectoryError::Header);
        }
        let mut steps = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let mut v = [0.0; 26];
            for (k, field) in record.iter().enumerate() {
                v[k] = field.parse().map_err(|_| TrajectoryError::Row {
                    row,
                    message: format!(
                        "column `{}`: `{field}` is not a number",
                        TRAJECTORY_HEADER[k]
                    ),
                })?;
            }
            steps.push(StepRecord::from_values(&v));
        }
        Ok(Self { steps })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, TrajectoryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TrajectoryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_csv(&text)
    }
}
