//! Consolidated run report: resilience, battery life, reward convergence and
//! the explanation index, written as text, CSV and three SVG line charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::RunConfig;
use crate::env::N_TIERS;
use crate::metrics::{
    annualize, battery_throughput, estimate_battery_life, reward_curve_summary, BatteryLife,
    BatteryLifeEstimate, ConvergenceReport, ResilienceReport,
};
use crate::ppo::METRICS_HEADER;
use crate::scenario::STEP_HOURS;
use crate::trajectory::Trajectory;

pub const METRICS_FILE: &str = "metrics.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const EXPLANATIONS_DIR: &str = "explanations";
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";
pub const SOC_SVG: &str = "soc.svg";
pub const SUPPLY_SVG: &str = "supply.svg";
pub const REWARD_SVG: &str = "reward.svg";

/// Files a run directory must hold before a report can be built.
pub const REQUIRED_ARTIFACTS: [&str; 3] = [CONFIG_FILE, METRICS_FILE, TRAJECTORY_FILE];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("run directory {dir} is missing: {}", .missing.join(", "))]
    Missing { dir: String, missing: Vec<String> },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("metrics log needs at least 2 updates, found {0}")]
    TooFewUpdates(usize),
}

/// One row of the training metrics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub update: usize,
    pub mean_reward_norm: f64,
    pub ri: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != METRICS_HEADER {
        return Err(format!("unexpected header `{header}`"));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let num = |k: usize| -> Result<f64, String> {
            rec.get(k)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| format!("row {i}: column {k} is missing or not a number"))
        };
        let update = rec
            .get(0)
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| format!("row {i}: bad update index"))?;
        rows.push(MetricsRow {
            update,
            mean_reward_norm: num(1)?,
            ri: num(2)?,
            policy_loss: num(3)?,
            value_loss: num(4)?,
            entropy: num(5)?,
            clip_frac: num(6)?,
        });
    }
    Ok(rows)
}

/// A named polyline for [`line_chart_svg`].
#[derive(Debug, Clone)]
pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
    pub dashed: bool,
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders series sharing one x axis (the sample index) as an SVG line chart.
/// `y_range` fixes the vertical axis; otherwise it spans the data.
pub fn line_chart_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    y_range: Option<(f64, f64)>,
) -> String {
    const W: f64 = 800.0;
    const H: f64 = 420.0;
    const L: f64 = 70.0;
    const R: f64 = 170.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    let pw = W - L - R;
    let ph = H - T - B;

    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let (y0, y1) = y_range.unwrap_or_else(|| {
        let finite = series
            .iter()
            .flat_map(|s| s.values.iter().copied())
            .filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
        nice_range(lo, hi)
    });
    let x_max = (n.max(2) - 1) as f64;
    let px = |i: usize| L + pw * i as f64 / x_max;
    let py = |v: f64| T + ph * (1.0 - (v - y0) / (y1 - y0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        L + pw / 2.0,
        xml_escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{L}" y="{T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let v = y0 + (y1 - y0) * k as f64 / 4.0;
        let y = py(v);
        let _ = writeln!(
            s,
            r##"<line x1="{L}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##,
            L + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            L - 6.0,
            y + 4.0,
            fmt_tick(v)
        );
    }
    for k in 0..=4 {
        let i = (x_max * k as f64 / 4.0).round() as usize;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{i}</text>"#,
            px(i),
            T + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        L + pw / 2.0,
        H - 10.0,
        xml_escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        T + ph / 2.0,
        T + ph / 2.0,
        xml_escape(y_label)
    );

    for (k, ser) in series.iter().enumerate() {
        let mut pts = String::new();
        for (i, &v) in ser.values.iter().enumerate() {
            if v.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", px(i), py(v.clamp(y0, y1)));
            }
        }
        let dash = if ser.dashed {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-name="{}" fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
            xml_escape(ser.name),
            ser.color,
            pts.trim_end()
        );
        let ly = T + 14.0 + 18.0 * k as f64;
        let lx = L + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/>"#,
            lx + 22.0,
            ser.color
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 28.0,
            ly + 4.0,
            xml_escape(ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

/// Everything the `report` command summarizes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub resilience: ResilienceReport,
    pub normalized_reward: f64,
    pub horizon_steps: usize,
    pub throughput_kwh: f64,
    pub battery: BatteryLifeEstimate,
    pub rated_cycles: f64,
    pub metrics: Vec<MetricsRow>,
    pub convergence: ConvergenceReport,
    /// Explanation file stems found under `explanations/`, sorted.
    pub explanations: Vec<String>,
}

fn read(path: &Path) -> Result<String, ReportError> {
    std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Lists the required artifacts absent from `dir`.
pub fn missing_artifacts(dir: &Path) -> Vec<String> {
    REQUIRED_ARTIFACTS
        .iter()
        .filter(|f| !dir.join(f).is_file())
        .map(|f| f.to_string())
        .collect()
}

/// Loads the run directory's artifacts and derives the report.
pub fn build_report(dir: &Path) -> Result<RunReport, ReportError> {
    let missing = missing_artifacts(dir);
    if !missing.is_empty() {
        return Err(ReportError::Missing {
            dir: dir.display().to_string(),
            missing,
        });
    }
    let cfg_path = dir.join(CONFIG_FILE);
    let cfg = RunConfig::from_toml_str(&read(&cfg_path)?).map_err(|e| ReportError::Parse {
        path: cfg_path.display().to_string(),
        message: e.to_string(),
    })?;
    let metrics_path = dir.join(METRICS_FILE);
    let metrics =
        parse_metrics_csv(&read(&metrics_path)?).map_err(|message| ReportError::Parse {
            path: metrics_path.display().to_string(),
            message,
        })?;
    let traj_path = dir.join(TRAJECTORY_FILE);
    let trajectory = Trajectory::parse_csv(&read(&traj_path)?).map_err(|e| ReportError::Parse {
        path: traj_path.display().to_string(),
        message: e.to_string(),
    })?;

    let history: Vec<f64> = metrics.iter().map(|m| m.mean_reward_norm).collect();
    let convergence = reward_curve_summary(&history, cfg.report.convergence_window)
        .ok_or(ReportError::TooFewUpdates(history.len()))?;
    let resilience = ResilienceReport::from_trajectory(&trajectory, cfg.env.reward_weights);
    let throughput_kwh = battery_throughput(&trajectory);
    let hours = trajectory.len() as f64 * STEP_HOURS;
    let annual = if hours > 0.0 {
        annualize(throughput_kwh, hours)
    } else {
        0.0
    };
    let battery = estimate_battery_life(annual, cfg.report.rated_cycles, cfg.env.e_max_kwh);

    let mut explanations = Vec::new();
    if let Ok(entries) = std::fs::read_dir(dir.join(EXPLANATIONS_DIR)) {
        for entry in entries.flatten() {
            let p = entry.path();
            if p.extension().is_some_and(|e| e == "csv") {
                if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                    explanations.push(stem.to_string());
                }
            }
        }
    }
    explanations.sort();

    Ok(RunReport {
        normalized_reward: resilience.normalized_reward(),
        resilience,
        horizon_steps: trajectory.len(),
        throughput_kwh,
        battery,
        rated_cycles: cfg.report.rated_cycles,
        metrics,
        convergence,
        explanations,
    })
}

fn life_text(b: &BatteryLifeEstimate) -> String {
    match b.life {
        BatteryLife::Years(y) => format!("{y:.2} years"),
        BatteryLife::ExceedsCalendarLife => {
            "exceeds rated calendar life (no battery throughput)".into()
        }
    }
}

impl RunReport {
    pub fn text(&self) -> String {
        let mut s = String::new();
        let r = &self.resilience;
        let _ = writeln!(s, "Run report");
        let _ = writeln!(s, "==========");
        let _ = writeln!(s, "Resilience index (RI):      {:.4}", r.ri);
        let _ = writeln!(
            s,
            "Normalized episode reward:  {:.4}",
            self.normalized_reward
        );
        let _ = writeln!(s, "Evaluation horizon:         {} h", self.horizon_steps);
        for i in 0..N_TIERS {
            let _ = writeln!(
                s,
                "  tier {}: load {:>10.1} kWh, shortage {:>9.1} kWh",
                i + 1,
                r.load_totals[i],
                r.shortage_totals[i]
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "Battery throughput:         {:.1} kWh per episode",
            self.throughput_kwh
        );
        let _ = writeln!(
            s,
            "Annualized throughput:      {:.1} kWh/year",
            self.battery.annual_throughput_kwh
        );
        let _ = writeln!(
            s,
            "Lifetime throughput:        {:.0} kWh ({} rated cycles)",
            self.battery.lifetime_throughput_kwh, self.rated_cycles
        );
        let _ = writeln!(
            s,
            "Estimated battery life:     {}",
            life_text(&self.battery)
        );
        let _ = writeln!(s);
        let c = &self.convergence;
        let _ = writeln!(s, "Training updates:           {}", self.metrics.len());
        let _ = writeln!(
            s,
            "Final rolling reward:       {:.4} (window {})",
            c.final_value, c.window
        );
        let _ = writeln!(s, "Last-quartile mean reward:  {:.4}", c.last_quartile_mean);
        let _ = writeln!(s, "Convergence index:          {}", c.convergence_index);
        let _ = writeln!(s);
        if self.explanations.is_empty() {
            let _ = writeln!(s, "Explanations: none");
        } else {
            let _ = writeln!(s, "Explanations:");
            for e in &self.explanations {
                let _ = writeln!(s, "  {EXPLANATIONS_DIR}/{e}.svg");
            }
        }
        s
    }

    pub fn csv(&self) -> String {
        let r = &self.resilience;
        let years = match self.battery.life {
            BatteryLife::Years(y) => y.to_string(),
            BatteryLife::ExceedsCalendarLife => "inf".into(),
        };
        let mut rows: Vec<(String, String)> = vec![
            ("ri".into(), r.ri.to_string()),
            (
                "normalized_reward".into(),
                self.normalized_reward.to_string(),
            ),
            ("horizon_steps".into(), self.horizon_steps.to_string()),
        ];
        for i in 0..N_TIERS {
            rows.push((
                format!("load_tier{}_kwh", i + 1),
                r.load_totals[i].to_string(),
            ));
            rows.push((
                format!("shortage_tier{}_kwh", i + 1),
                r.shortage_totals[i].to_string(),
            ));
        }
        rows.extend([
            ("throughput_kwh".into(), self.throughput_kwh.to_string()),
            (
                "annual_throughput_kwh".into(),
                self.battery.annual_throughput_kwh.to_string(),
            ),
            (
                "lifetime_throughput_kwh".into(),
                self.battery.lifetime_throughput_kwh.to_string(),
            ),
            ("battery_life_years".into(), years),
            ("updates".into(), self.metrics.len().to_string()),
            (
                "final_rolling_reward".into(),
                self.convergence.final_value.to_string(),
            ),
            (
                "last_quartile_reward".into(),
                self.convergence.last_quartile_mean.to_string(),
            ),
            (
                "convergence_index".into(),
                self.convergence.convergence_index.to_string(),
            ),
            ("explanations".into(), self.explanations.len().to_string()),
        ]);
        let mut s = String::from("metric,value\n");
        for (k, v) in rows {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }
}

/// Paths written by [`write_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub text: PathBuf,
    pub csv: PathBuf,
    pub charts: [PathBuf; 3],
}

/// Builds the report for `dir` and writes the text, CSV and chart files into it.
/// Rewriting from unchanged inputs reproduces the same bytes.
pub fn write_report(dir: &Path) -> Result<(RunReport, ReportFiles), ReportError> {
    let report = build_report(dir)?;
    let trajectory = Trajectory::parse_csv(&read(&dir.join(TRAJECTORY_FILE))?).map_err(|e| {
        ReportError::Parse {
            path: dir.join(TRAJECTORY_FILE).display().to_string(),
            message: e.to_string(),
        }
    })?;

    let soc: Vec<f64> = trajectory.steps.iter().map(|s| s.soc).collect();
    let soc_svg = line_chart_svg(
        "State of charge",
        "hour",
        "SOC",
        &[Series {
            name: "SOC",
            color: "#1f77b4",
            values: &soc,
            dashed: false,
        }],
        Some((0.0, 1.0)),
    );

    let tier = |f: fn(&crate::trajectory::StepRecord, usize) -> f64, i: usize| -> Vec<f64> {
        trajectory.steps.iter().map(|s| f(s, i)).collect()
    };
    let colors = ["#d62728", "#ff7f0e", "#2ca02c"];
    let names_load = ["tier 1 demand", "tier 2 demand", "tier 3 demand"];
    let names_sup = ["tier 1 supplied", "tier 2 supplied", "tier 3 supplied"];
    let loads: Vec<Vec<f64>> = (0..N_TIERS).map(|i| tier(|s, i| s.loads[i], i)).collect();
    let served: Vec<Vec<f64>> = (0..N_TIERS)
        .map(|i| tier(|s, i| s.loads[i] - s.shortages[i], i))
        .collect();
    let mut supply_series = Vec::new();
    for i in 0..N_TIERS {
        supply_series.push(Series {
            name: names_load[i],
            color: colors[i],
            values: &loads[i],
            dashed: true,
        });
        supply_series.push(Series {
            name: names_sup[i],
            color: colors[i],
            values: &served[i],
            dashed: false,
        });
    }
    let supply_svg = line_chart_svg(
        "Per-tier demand and supply",
        "hour",
        "power (kW)",
        &supply_series,
        None,
    );

    let reward: Vec<f64> = report.metrics.iter().map(|m| m.mean_reward_norm).collect();
    // Zero shortages everywhere scores exactly 1.
    let oracle = vec![1.0; reward.len()];
    let reward_svg = line_chart_svg(
        "Training reward",
        "update",
        "normalized episode reward",
        &[
            Series {
                name: "reward",
                color: "#1f77b4",
                values: &reward,
                dashed: false,
            },
            Series {
                name: "rolling mean",
                color: "#ff7f0e",
                values: &report.convergence.rolling_mean,
                dashed: true,
            },
            Series {
                name: "oracle (no shortages)",
                color: "#7f7f7f",
                values: &oracle,
                dashed: true,
            },
        ],
        None,
    );

    let files = ReportFiles {
        text: dir.join(REPORT_TEXT),
        csv: dir.join(REPORT_CSV),
        charts: [
            dir.join(SOC_SVG),
            dir.join(SUPPLY_SVG),
            dir.join(REWARD_SVG),
        ],
    };
    let outputs = [
        (&files.text, report.text()),
        (&files.csv, report.csv()),
        (&files.charts[0], soc_svg),
        (&files.charts[1], supply_svg),
        (&files.charts[2], reward_svg),
    ];
    for (path, body) in outputs {
        std::fs::write(path, body).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok((report, files))
}
