//! The `microgrid-rl` command line.
//!
//! ```text
//! microgrid-rl [--config FILE] [--seed N] [--out DIR] <command>
//!
//!   scenario                      write the synthetic scenario to DIR/scenario.csv
//!   train    [--scenario CSV]     train PPO; metrics.csv, checkpoints/, config.toml
//!   eval     [--checkpoint P] [--scenario CSV] [--stochastic]
//!                                 trajectory.csv, resilience.csv, resilience.txt
//!   explain  (--step N | --mode idle|charge|discharge) [--action-dim D]...
//!                                 explanations/step<t>_<action>.{svg,csv,txt}
//!   report                        report.txt, report.csv, soc.svg, supply.svg, reward.svg
//! ```
//!
//! `DIR` defaults to `<run.output_dir>/<run.run_id>` from the config. Exit
//! codes: 0 success, 1 user error (bad flags, invalid config, missing or
//! malformed inputs), 2 internal error (non-finite training loss, failed
//! writes). Every command checks its configuration and inputs before it
//! writes anything.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::env::{ACTION_CHARGE, ACTION_DISCHARGE, N_ACTIONS};
use crate::explain::{
    explain_action, render_explanation, FeatureBounds, FeatureStats, ACTION_NAMES,
};
use crate::metrics::ResilienceReport;
use crate::neural::Checkpoint;
use crate::ppo::{evaluate_policy, train, write_metrics_csv, TrainError, TrainStats};
use crate::report::{write_report, CONFIG_FILE, EXPLANATIONS_DIR, METRICS_FILE, TRAJECTORY_FILE};
use crate::scenario::{
    load_scenario_csv, save_scenario_csv, synth_cyclone_scenario, validate_scenario, Scenario,
};
use crate::trajectory::{Mode, Trajectory};

pub const SCENARIO_FILE: &str = "scenario.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "checkpoint_final.json";
pub const RESILIENCE_CSV: &str = "resilience.csv";
pub const RESILIENCE_TEXT: &str = "resilience.txt";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.txt";

pub fn checkpoint_name(update: usize) -> String {
    format!("checkpoint_{update:04}.json")
}

#[derive(Debug, Parser)]
#[command(
    name = "microgrid-rl",
    version,
    about = "Battery dispatch for an islanded microgrid: PPO training and LIME explanations"
)]
pub struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `run.seed` and every component seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Run directory; overrides `run.output_dir`/`run.run_id`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic cyclone scenario.
    Scenario,
    /// Train the PPO agent.
    Train(TrainArgs),
    /// Evaluate a checkpoint over one episode.
    Eval(EvalArgs),
    /// Explain the actor's decision at one trajectory step.
    Explain(ExplainArgs),
    /// Consolidate a run directory into a report.
    Report,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Scenario CSV (t,p_re,l1,l2,l3); defaults to `run.scenario_path`, then the synthetic generator.
    #[arg(long, value_name = "CSV")]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Defaults to DIR/checkpoints/checkpoint_final.json.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Defaults to DIR/scenario.csv when present, then as for `train`.
    #[arg(long, value_name = "CSV")]
    pub scenario: Option<PathBuf>,
    /// Sample actions from the policy instead of using its mean.
    #[arg(long)]
    pub stochastic: bool,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("selector").required(true).args(["step", "mode"])))]
pub struct ExplainArgs {
    /// Defaults to DIR/checkpoints/checkpoint_final.json.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Defaults to DIR/trajectory.csv.
    #[arg(long, value_name = "CSV")]
    pub trajectory: Option<PathBuf>,
    /// Trajectory row to explain.
    #[arg(long)]
    pub step: Option<usize>,
    /// Explain the first step in this battery mode.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Action dimensions to explain (0 charging, 1 discharging, 2..4 load weights); default 0 and 1.
    #[arg(long = "action-dim", value_name = "D")]
    pub action_dims: Vec<usize>,
}

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::User(m) | CliError::Internal(m) => m,
        }
    }
}

fn user(msg: impl std::fmt::Display) -> CliError {
    CliError::User(msg.to_string())
}

fn internal(msg: impl std::fmt::Display) -> CliError {
    CliError::Internal(msg.to_string())
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, body)
        .map_err(|e| internal(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| internal(format!("cannot create {}: {e}", path.display())))
}

/// Loads, overrides and validates the configuration; returns it with the run directory.
pub fn resolve_config(cli: &Cli) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(user)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = Some(seed);
    }
    let cfg = cfg.validated().map_err(user)?.resolve_seeds();
    let dir = cli.out.clone().unwrap_or_else(|| cfg.run_dir());
    Ok((cfg, dir))
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    if !path.is_file() {
        return Err(user(format!("scenario file not found: {}", path.display())));
    }
    let s =
        load_scenario_csv(path).map_err(|e| user(format!("scenario {}: {e}", path.display())))?;
    let report = validate_scenario(&s);
    if !report.is_empty() {
        return Err(user(format!(
            "scenario {} is invalid: {report}",
            path.display()
        )));
    }
    Ok(s)
}

fn scenario_for(
    cfg: &RunConfig,
    explicit: Option<&Path>,
    run_dir: Option<&Path>,
) -> Result<Scenario, CliError> {
    if let Some(p) = explicit {
        return load_scenario(p);
    }
    if let Some(p) = run_dir
        .map(|d| d.join(SCENARIO_FILE))
        .filter(|p| p.is_file())
    {
        return load_scenario(&p);
    }
    if let Some(p) = &cfg.run.scenario_path {
        return load_scenario(p);
    }
    synth_cyclone_scenario(&cfg.scenario).map_err(user)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    if !path.is_file() {
        return Err(user(format!("checkpoint not found: {}", path.display())));
    }
    Checkpoint::load(path).map_err(user)
}

fn scenario_summary(s: &Scenario) -> String {
    let h = s.horizon();
    let re: f64 = s.p_re.iter().sum();
    let load: f64 = (0..h).map(|t| s.total_load_at(t)).sum();
    let deficit = (0..h).filter(|&t| s.p_re[t] < s.total_load_at(t)).count();
    format!("{h} steps, renewable {re:.0} kWh, load {load:.0} kWh, {deficit} deficit hours")
}

fn cmd_scenario(cfg: &RunConfig, dir: &Path) -> Result<String, CliError> {
    let s = synth_cyclone_scenario(&cfg.scenario).map_err(user)?;
    create_dir(dir)?;
    let path = dir.join(SCENARIO_FILE);
    save_scenario_csv(&s, &path).map_err(internal)?;
    Ok(format!(
        "wrote {}: {}",
        path.display(),
        scenario_summary(&s)
    ))
}

fn cmd_train(cfg: &RunConfig, dir: &Path, args: &TrainArgs) -> Result<String, CliError> {
    let scenario = Arc::new(scenario_for(cfg, args.scenario.as_deref(), None)?);
    let ckpt_dir = dir.join(CHECKPOINT_DIR);
    create_dir(&ckpt_dir)?;
    save_scenario_csv(&scenario, dir.join(SCENARIO_FILE)).map_err(internal)?;
    write_file(&dir.join(CONFIG_FILE), cfg.to_toml())?;

    let every = cfg.ppo.checkpoint_every;
    let mut history: Vec<TrainStats> = Vec::new();
    let result = train(&cfg.ppo, &cfg.env, scenario, |trainer, stats| {
        history.push(*stats);
        let done = trainer.updates_done();
        if every > 0 && done % every == 0 {
            Checkpoint::new(trainer.policy(), trainer.value(), done)
                .save(ckpt_dir.join(checkpoint_name(done)))
                .map_err(|e| TrainFailure::Write(e.to_string()))?;
        }
        Ok::<_, TrainFailure>(())
    });

    let mut metrics = Vec::new();
    write_metrics_csv(&history, &mut metrics).expect("write to memory");
    write_file(&dir.join(METRICS_FILE), &metrics)?;

    let out = match result {
        Ok(out) => out,
        Err(TrainFailure::Train(e @ TrainError::NonFinite { .. })) => {
            let diag = dir.join(DIAGNOSTIC_FILE);
            let mut text = format!("{e}\n\nlast logged updates:\n");
            for s in history.iter().rev().take(5).rev() {
                let _ = writeln!(text, "{}", s.csv_row());
            }
            write_file(&diag, text)?;
            return Err(internal(format!(
                "training diverged: {e}; diagnostic written to {}",
                diag.display()
            )));
        }
        Err(TrainFailure::Train(TrainError::Config(m))) => return Err(user(m)),
        Err(TrainFailure::Train(e)) => return Err(internal(e)),
        Err(TrainFailure::Write(m)) => return Err(internal(m)),
    };
    let final_path = ckpt_dir.join(FINAL_CHECKPOINT);
    Checkpoint::new(&out.policy, &out.value, out.history.len())
        .save(&final_path)
        .map_err(internal)?;
    let last = out.history.last();
    Ok(format!(
        "trained {} updates; final reward {:.4}, RI {:.4}; wrote {}",
        out.history.len(),
        last.map_or(f64::NAN, |s| s.mean_reward_norm),
        last.map_or(f64::NAN, |s| s.ri),
        final_path.display()
    ))
}

#[derive(Debug)]
enum TrainFailure {
    Train(TrainError),
    Write(String),
}

impl From<TrainError> for TrainFailure {
    fn from(e: TrainError) -> Self {
        TrainFailure::Train(e)
    }
}

fn resilience_csv(r: &ResilienceReport, normalized: f64) -> String {
    let mut s = String::from("metric,value\n");
    let _ = writeln!(s, "ri,{}", r.ri);
    let _ = writeln!(s, "episode_reward,{}", r.episode_reward());
    let _ = writeln!(s, "normalized_reward,{normalized}");
    for i in 0..3 {
        let _ = writeln!(s, "load_tier{}_kwh,{}", i + 1, r.load_totals[i]);
        let _ = writeln!(s, "shortage_tier{}_kwh,{}", i + 1, r.shortage_totals[i]);
    }
    s
}

fn resilience_text(r: &ResilienceReport, normalized: f64, steps: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Resilience index: {:.4}", r.ri);
    let _ = writeln!(
        s,
        "Normalized episode reward: {normalized:.4} over {steps} steps"
    );
    for i in 0..3 {
        let _ = writeln!(
            s,
            "tier {}: load {:.1} kWh, shortage {:.1} kWh",
            i + 1,
            r.load_totals[i],
            r.shortage_totals[i]
        );
    }
    s
}

fn cmd_eval(cfg: &RunConfig, dir: &Path, args: &EvalArgs) -> Result<String, CliError> {
    let ckpt_path = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| dir.join(CHECKPOINT_DIR).join(FINAL_CHECKPOINT));
    let ckpt = load_checkpoint(&ckpt_path)?;
    let (policy, _) = ckpt.networks().map_err(user)?;
    let scenario = scenario_for(cfg, args.scenario.as_deref(), Some(dir))?;
    let eval = evaluate_policy(
        &policy,
        &cfg.env,
        &scenario,
        1,
        !args.stochastic,
        cfg.eval_seed(),
    )
    .map_err(internal)?;
    let ep = &eval.episodes[0];

    create_dir(dir)?;
    ep.trajectory
        .save_csv(dir.join(TRAJECTORY_FILE))
        .map_err(internal)?;
    write_file(
        &dir.join(RESILIENCE_CSV),
        resilience_csv(&ep.report, ep.normalized_reward),
    )?;
    write_file(
        &dir.join(RESILIENCE_TEXT),
        resilience_text(&ep.report, ep.normalized_reward, ep.trajectory.len()),
    )?;
    Ok(format!(
        "RI {:.4}, normalized reward {:.4}; wrote {}",
        ep.report.ri,
        ep.normalized_reward,
        dir.join(TRAJECTORY_FILE).display()
    ))
}

fn cmd_explain(cfg: &RunConfig, dir: &Path, args: &ExplainArgs) -> Result<String, CliError> {
    let dims = if args.action_dims.is_empty() {
        vec![ACTION_CHARGE, ACTION_DISCHARGE]
    } else {
        args.action_dims.clone()
    };
    if let Some(&d) = dims.iter().find(|&&d| d >= N_ACTIONS) {
        return Err(user(format!(
            "--action-dim {d} is out of range (0..{N_ACTIONS})"
        )));
    }
    let ckpt_path = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| dir.join(CHECKPOINT_DIR).join(FINAL_CHECKPOINT));
    let traj_path = args
        .trajectory
        .clone()
        .unwrap_or_else(|| dir.join(TRAJECTORY_FILE));
    if !traj_path.is_file() {
        return Err(user(format!(
            "trajectory not found: {}",
            traj_path.display()
        )));
    }
    let traj = Trajectory::load_csv(&traj_path).map_err(user)?;
    if traj.is_empty() {
        return Err(user(format!(
            "trajectory {} has no steps",
            traj_path.display()
        )));
    }
    let record = match (args.step, args.mode) {
        (Some(i), _) => *traj.steps.get(i).ok_or_else(|| {
            user(format!(
                "step {i} is out of range: trajectory {} has {} steps",
                traj_path.display(),
                traj.len()
            ))
        })?,
        (None, Some(mode)) => *traj.first_in_mode(mode).ok_or_else(|| {
            user(format!(
                "no {} step in trajectory {}",
                mode.name(),
                traj_path.display()
            ))
        })?,
        (None, None) => unreachable!("clap requires --step or --mode"),
    };
    let (policy, _) = load_checkpoint(&ckpt_path)?.networks().map_err(user)?;

    let states: Vec<_> = traj.steps.iter().map(|s| s.features()).collect();
    let stats = FeatureStats::from_states(&states);
    let bounds = FeatureBounds::from_env(&cfg.env);
    let x = record.features();
    let mut explanations = Vec::with_capacity(dims.len());
    for &d in &dims {
        explanations
            .push(explain_action(&policy, &x, d, &cfg.explain, &stats, &bounds).map_err(internal)?);
    }

    let out_dir = dir.join(EXPLANATIONS_DIR);
    let mut msg = format!("step {} ({}):\n", record.t, record.mode().name());
    for e in &explanations {
        let stem = format!("step{:04}_{}", record.t, ACTION_NAMES[e.action_dim]);
        let files = render_explanation(e, &out_dir, &stem).map_err(internal)?;
        let _ = write!(
            msg,
            "  {:<12} R2 {:.3}{}  ",
            e.action_name(),
            e.fidelity,
            if e.is_low_trust() { " (low trust)" } else { "" }
        );
        let coefs: Vec<String> = e
            .feature_names()
            .iter()
            .zip(&e.std_coefficients)
            .map(|(n, c)| format!("{n} {c:+.3}"))
            .collect();
        let _ = writeln!(msg, "{}  -> {}", coefs.join(", "), files.svg.display());
    }
    Ok(msg.trim_end().to_string())
}

fn cmd_report(dir: &Path) -> Result<String, CliError> {
    let (report, files) = write_report(dir).map_err(|e| match e {
        crate::report::ReportError::Io { .. } => internal(e),
        other => user(other),
    })?;
    Ok(format!(
        "{}\nwrote {}",
        report.text().trim_end(),
        files.text.display()
    ))
}

/// Executes a parsed command line, returning the message for stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let (cfg, dir) = resolve_config(cli)?;
    match &cli.command {
        Command::Scenario => cmd_scenario(&cfg, &dir),
        Command::Train(a) => cmd_train(&cfg, &dir, a),
        Command::Eval(a) => cmd_eval(&cfg, &dir, a),
        Command::Explain(a) => cmd_explain(&cfg, &dir, a),
        Command::Report => cmd_report(&dir),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
