//! Time series that drive the microgrid: renewable generation and three
//! priority-tiered load profiles at a fixed one-hour step.
//!
//! Scenarios come either from a CSV file (header `t,p_re,l1,l2,l3`) or from
//! the synthetic cyclone generator, which stands in for measured site data.
//! The generator's shapes (half-sine solar, smoothed random-walk wind,
//! ramp-then-cut-out storm wind, per-tier diurnal loads) are modelling
//! choices; swap in real data through CSV when it is available.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact CSV header for scenario files.
pub const CSV_HEADER: [&str; 5] = ["t", "p_re", "l1", "l2", "l3"];

/// Step length in hours. Power in kW and energy per step in kWh coincide.
pub const STEP_HOURS: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: expected `t,p_re,l1,l2,l3`, found `{found}`")]
    Header { found: String },
    #[error("row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("row {row}: expected 5 fields, found {found}")]
    Ragged { row: usize, found: usize },
    #[error("scenario file has no data rows")]
    Empty,
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error("invalid scenario: {0}")]
    Invalid(ValidationReport),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Parameters of the synthetic cyclone scenario generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub horizon_steps: usize,
    pub step_hours: f64,
    pub solar_capacity_kw: f64,
    pub wind_capacity_kw: f64,
    /// Mean power of the essential, business and agricultural tiers.
    pub base_loads_kw: [f64; 3],
    /// `[start, end)` step range affected by the storm.
    pub cyclone_window: [usize; 2],
    /// Fraction of solar output lost inside the storm window.
    pub cyclone_depression: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            horizon_steps: 720,
            step_hours: STEP_HOURS,
            solar_capacity_kw: 140.0,
            wind_capacity_kw: 80.0,
            base_loads_kw: [22.0, 16.0, 10.0],
            cyclone_window: [360, 432],
            cyclone_depression: 0.8,
            rng_seed: 7,
        }
    }
}

impl ScenarioConfig {
    /// Returns `(field, message)` pairs for every violated constraint.
    pub fn validate(&self) -> Vec<(String, String)> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, msg: String| errs.push((format!("scenario.{field}"), msg));
        if self.horizon_steps < 1 {
            bad("horizon_steps", "must be at least 1".into());
        }
        if self.step_hours != STEP_HOURS {
            bad(
                "step_hours",
                format!("only 1-hour steps are supported, got {}", self.step_hours),
            );
        }
        for (name, v) in [
            ("solar_capacity_kw", self.solar_capacity_kw),
            ("wind_capacity_kw", self.wind_capacity_kw),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                bad(name, format!("must be finite and >= 0, got {v}"));
            }
        }
        if self
            .base_loads_kw
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            bad(
                "base_loads_kw",
                format!(
                    "entries must be finite and >= 0, got {:?}",
                    self.base_loads_kw
                ),
            );
        }
        let [start, end] = self.cyclone_window;
        if start > end || end > self.horizon_steps {
            bad(
                "cyclone_window",
                format!(
                    "need 0 <= start <= end <= horizon_steps ({}), got [{start}, {end}]",
                    self.horizon_steps
                ),
            );
        }
        if !(0.0..=1.0).contains(&self.cyclone_depression) {
            bad(
                "cyclone_depression",
                format!("must lie in [0, 1], got {}", self.cyclone_depression),
            );
        }
        errs
    }
}

/// Renewable generation and the three tier loads, one entry per step (kW).
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub p_re: Vec<f64>,
    pub loads: [Vec<f64>; 3],
}

impl Scenario {
    /// Builds a scenario and checks it; fails with the full report on any violation.
    pub fn new(p_re: Vec<f64>, loads: [Vec<f64>; 3]) -> Result<Self, ScenarioError> {
        let s = Self { p_re, loads };
        let report = validate_scenario(&s);
        if report.is_empty() {
            Ok(s)
        } else {
            Err(ScenarioError::Invalid(report))
        }
    }

    pub fn horizon(&self) -> usize {
        self.p_re.len()
    }

    pub fn loads_at(&self, t: usize) -> [f64; 3] {
        [self.loads[0][t], self.loads[1][t], self.loads[2][t]]
    }

    pub fn total_load_at(&self, t: usize) -> f64 {
        self.loads_at(t).iter().sum()
    }

    /// Constant-profile scenario; handy for tests and toy problems.
    pub fn constant(horizon: usize, p_re: f64, loads: [f64; 3]) -> Result<Self, ScenarioError> {
        Self::new(vec![p_re; horizon], loads.map(|l| vec![l; horizon]))
    }
}

/// One invariant violation found by [`validate_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    LengthMismatch {
        series: &'static str,
        len: usize,
        expected: usize,
    },
    NonFinite {
        series: &'static str,
        index: usize,
    },
    Negative {
        series: &'static str,
        index: usize,
        value: f64,
    },
    Empty,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LengthMismatch {
                series,
                len,
                expected,
            } => {
                write!(f, "{series} has length {len}, expected {expected}")
            }
            Violation::NonFinite { series, index } => write!(f, "{series}[{index}] is not finite"),
            Violation::Negative {
                series,
                index,
                value,
            } => {
                write!(f, "{series}[{index}] = {value} is negative")
            }
            Violation::Empty => write!(f, "scenario has no steps"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

const SERIES_NAMES: [&str; 4] = ["p_re", "l1", "l2", "l3"];

/// Lists every invariant violation; an empty report means the scenario is usable.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut violations = Vec::new();
    let expected = s.p_re.len();
    if expected == 0 {
        violations.push(Violation::Empty);
    }
    let series: [&[f64]; 4] = [&s.p_re, &s.loads[0], &s.loads[1], &s.loads[2]];
    for (name, values) in SERIES_NAMES.iter().zip(series) {
        if values.len() != expected {
            violations.push(Violation::LengthMismatch {
                series: name,
                len: values.len(),
                expected,
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                violations.push(Violation::NonFinite {
                    series: name,
                    index,
                });
            } else if value < 0.0 {
                violations.push(Violation::Negative {
                    series: name,
                    index,
                    value,
                });
            }
        }
    }
    ValidationReport { violations }
}

/// Reads a scenario CSV. Errors name the 0-based data row and the column.
pub fn load_scenario_csv(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
    parse_scenario_csv(&text)
}

pub fn parse_scenario_csv(text: &str) -> Result<Scenario, ScenarioError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.len() != CSV_HEADER.len() || header.iter().zip(CSV_HEADER).any(|(a, b)| a != b) {
        return Err(ScenarioError::Header {
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut p_re = Vec::new();
    let mut loads: [Vec<f64>; 3] = Default::default();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != CSV_HEADER.len() {
            return Err(ScenarioError::Ragged {
                row,
                found: record.len(),
            });
        }
        let t: usize = record[0].parse().map_err(|_| ScenarioError::Parse {
            row,
            column: "t".into(),
            message: format!("`{}` is not a non-negative integer", &record[0]),
        })?;
        if t != row {
            return Err(ScenarioError::Parse {
                row,
                column: "t".into(),
                message: format!(
                    "expected step index {row}, found {t} (rows must be sorted without gaps)"
                ),
            });
        }
        let mut values = [0.0; 4];
        for (k, value) in values.iter_mut().enumerate() {
            let column = CSV_HEADER[k + 1];
            let raw = &record[k + 1];
            let v: f64 = raw.parse().map_err(|_| ScenarioError::Parse {
                row,
                column: column.into(),
                message: format!("`{raw}` is not a number"),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(ScenarioError::Parse {
                    row,
                    column: column.into(),
                    message: format!("value {v} must be finite and non-negative"),
                });
            }
            *value = v;
        }
        p_re.push(values[0]);
        for i in 0..3 {
            loads[i].push(values[i + 1]);
        }
    }
    if p_re.is_empty() {
        return Err(ScenarioError::Empty);
    }
    Scenario::new(p_re, loads)
}

/// Writes the CSV form. Floats use Rust's shortest round-trip formatting, so
/// reading the file back reproduces every value bit for bit.
pub fn write_scenario_csv(s: &Scenario, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    for t in 0..s.horizon() {
        let [l1, l2, l3] = s.loads_at(t);
        writeln!(out, "{t},{},{l1},{l2},{l3}", s.p_re[t])?;
    }
    Ok(())
}

pub fn save_scenario_csv(s: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    let io_err = |source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf = Vec::new();
    write_scenario_csv(s, &mut buf).map_err(io_err)?;
    std::fs::write(path, buf).map_err(io_err)
}

// Per-tier hourly load shapes, each with mean 1 over the day.
fn tier_shape(tier: usize, hour: usize) -> f64 {
    let h = hour as f64;
    let tau = std::f64::consts::TAU;
    match tier {
        // Essential: flat with an evening peak.
        0 => 1.0 + 0.25 * (tau * (h - 13.0) / 24.0).sin(),
        // Business: working hours.
        1 => {
            if (8..18).contains(&hour) {
                1.6
            } else {
                1.0 - 0.6 * 10.0 / 14.0
            }
        }
        // Agricultural: morning and late-afternoon pumping.
        _ => match hour {
            5..=9 => 2.0,
            15..=18 => 1.5,
            _ => (24.0 - 5.0 * 2.0 - 4.0 * 1.5) / 15.0,
        },
    }
}

fn solar_shape(hour: usize) -> f64 {
    // Daylight between 06:00 and 18:00.
    let h = hour as f64;
    if (6.0..=18.0).contains(&h) {
        (std::f64::consts::PI * (h - 6.0) / 12.0).sin().max(0.0)
    } else {
        0.0
    }
}

/// Generates a deterministic synthetic cyclone scenario.
///
/// Inside the storm window solar output is scaled by `1 - cyclone_depression`
/// and wind ramps toward rated output over the first half of the window, then
/// drops to zero (turbine cut-out) from the storm peak until the window ends.
pub fn synth_cyclone_scenario(cfg: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        let msg = errs
            .iter()
            .map(|(f, m)| format!("{f}: {m}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(ScenarioError::Config(msg));
    }
    let n = cfg.horizon_steps;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let walk_noise = Normal::new(0.0, 0.08).expect("finite std");

    let days = n.div_ceil(24);
    let clearness: Vec<f64> = (0..days).map(|_| rng.random_range(0.75..=1.0)).collect();

    let [start, end] = cfg.cyclone_window;
    let peak = start + (end - start) / 2;

    let mut walk: f64 = rng.random_range(0.2..0.6);
    let mut smoothed = walk;
    let mut p_re = Vec::with_capacity(n);
    let mut loads: [Vec<f64>; 3] = Default::default();
    for t in 0..n {
        let hour = t % 24;
        walk = (walk + walk_noise.sample(&mut rng)).clamp(0.0, 1.0);
        smoothed = 0.7 * smoothed + 0.3 * walk;

        let in_storm = t >= start && t < end;
        let mut solar = cfg.solar_capacity_kw * solar_shape(hour) * clearness[t / 24];
        let mut wind_frac = smoothed;
        if in_storm {
            solar *= 1.0 - cfg.cyclone_depression;
            wind_frac = if t < peak {
                let ramp = (t - start + 1) as f64 / (peak - start) as f64;
                smoothed + (1.0 - smoothed) * ramp
            } else {
                0.0
            };
        }
        p_re.push(solar + cfg.wind_capacity_kw * wind_frac.clamp(0.0, 1.0));

        for (tier, series) in loads.iter_mut().enumerate() {
            let noise = 1.0 + rng.random_range(-0.1..=0.1);
            series.push((cfg.base_loads_kw[tier] * tier_shape(tier, hour) * noise).max(0.0));
        }
    }
    Scenario::new(p_re, loads)
}

/// Synthetic loads with generation set to exactly cover them at every step.
pub fn balanced_scenario(cfg: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    let mut s = synth_cyclone_scenario(cfg)?;
    s.p_re = (0..s.horizon()).map(|t| s.total_load_at(t)).collect();
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tier_shapes_have_unit_mean() {
        for tier in 0..3 {
            let mean: f64 = (0..24).map(|h| tier_shape(tier, h)).sum::<f64>() / 24.0;
            assert!((mean - 1.0).abs() < 1e-12, "tier {tier} mean {mean}");
        }
    }

    #[test]
    fn zero_csv_loads() {
        let s = parse_scenario_csv("t,p_re,l1,l2,l3\n0,0,0,0,0\n1,0,0,0,0\n2,0,0,0,0\n").unwrap();
        assert_eq!(s.horizon(), 3);
        assert!(s
            .p_re
            .iter()
            .chain(s.loads.iter().flatten())
            .all(|&v| v == 0.0));
    }

    #[test]
    fn negative_load_names_row_and_column() {
        let err = parse_scenario_csv("t,p_re,l1,l2,l3\n0,1,1,1,1\n1,1,1,-5,1\n").unwrap_err();
        match err {
            ScenarioError::Parse { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "l2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn p_re_column_identity() {
        let s =
            parse_scenario_csv("t,p_re,l1,l2,l3\n0,10,1,1,1\n1,20,1,1,1\n2,30,1,1,1\n").unwrap();
        assert_eq!(s.p_re, vec![10.0, 20.0, 30.0]);
    }

    #[test]
    fn bad_header_and_ragged_rows() {
        assert!(matches!(
            parse_scenario_csv("t,pre,l1,l2,l3\n0,1,1,1,1\n"),
            Err(ScenarioError::Header { .. })
        ));
        assert!(matches!(
            parse_scenario_csv("t,p_re,l1,l2,l3\n0,1,1,1\n"),
            Err(ScenarioError::Ragged { row: 0, found: 4 })
        ));
        assert!(matches!(
            parse_scenario_csv("t,p_re,l1,l2,l3\n0,1,1,1,1\n2,1,1,1,1\n"),
            Err(ScenarioError::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_scenario_csv("/nonexistent/scenario.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/scenario.csv"));
    }

    #[test]
    fn validation_report_entries() {
        let ok = Scenario::constant(4, 1.0, [1.0, 1.0, 1.0]).unwrap();
        assert!(validate_scenario(&ok).is_empty());

        let bad = Scenario {
            p_re: vec![1.0; 10],
            loads: [vec![1.0; 9], vec![1.0; 10], vec![1.0; 10]],
        };
        let r = validate_scenario(&bad);
        assert!(r.violations.contains(&Violation::LengthMismatch {
            series: "l1",
            len: 9,
            expected: 10
        }));

        let mut nan = ok.clone();
        nan.loads[2][3] = f64::NAN;
        assert_eq!(
            validate_scenario(&nan).violations,
            vec![Violation::NonFinite {
                series: "l3",
                index: 3
            }]
        );
    }

    #[test]
    fn full_depression_without_wind_is_dark() {
        let cfg = ScenarioConfig {
            horizon_steps: 96,
            cyclone_window: [0, 96],
            cyclone_depression: 1.0,
            wind_capacity_kw: 0.0,
            ..Default::default()
        };
        let s = synth_cyclone_scenario(&cfg).unwrap();
        assert!(s.p_re.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let cfg = ScenarioConfig::default();
        assert_eq!(
            synth_cyclone_scenario(&cfg).unwrap(),
            synth_cyclone_scenario(&cfg).unwrap()
        );
    }

    #[test]
    fn default_generation_within_installed_capacity() {
        let s = synth_cyclone_scenario(&ScenarioConfig::default()).unwrap();
        assert_eq!(s.horizon(), 720);
        // Exhaustive scan against solar + wind nameplate (140 + 80 kW).
        assert!(s.p_re.iter().all(|&p| (0.0..=220.0).contains(&p)));
    }

    #[test]
    fn storm_kills_wind_after_peak() {
        let cfg = ScenarioConfig {
            solar_capacity_kw: 0.0,
            ..Default::default()
        };
        let s = synth_cyclone_scenario(&cfg).unwrap();
        let [start, end] = cfg.cyclone_window;
        let peak = start + (end - start) / 2;
        assert!(s.p_re[peak..end].iter().all(|&p| p == 0.0));
        assert!((s.p_re[peak - 1] - cfg.wind_capacity_kw).abs() < 1e-9);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = ScenarioConfig {
            cyclone_window: [10, 5],
            cyclone_depression: 1.5,
            ..Default::default()
        };
        let errs = cfg.validate();
        assert_eq!(errs.len(), 2);
        assert!(synth_cyclone_scenario(&cfg).is_err());
    }
}
