//! Command-line driver.
//!
//! Every command writes its outputs plus `manifest.json` into `--out`.
//! Scenario commands also echo the fully resolved scenario as
//! `resolved_scenario.json`, which can be fed back in to repeat the run.
//! Nothing time-dependent is recorded, so identical inputs give identical
//! bytes.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mergeplan::config::{self, ConfigError, ScenarioConfig};
use mergeplan::io::{self as mio, IoError};
use mergeplan::opportunity::{classify, decide};
use mergeplan::planner::{self, LateralSpec, LongitudinalSpec, PlanError};
use mergeplan::simulator;
use mergeplan::smoother::{self, SmootherConfig};
use mergeplan::{Point2, ReferenceLine};
use serde::Serialize;
use serde_json::Value;

pub mod selftest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SCHEMA: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "mergeplan", version, about = "Highway merge planning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
struct Common {
    /// Scenario JSON, or a polyline CSV for `smooth`.
    input: Option<PathBuf>,
    #[arg(long = "scenario", value_name = "PATH")]
    scenario: Option<PathBuf>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Parameter override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-sweep smoother diagnostics.
    #[arg(long)]
    diagnostics: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide and plan once from the initial state.
    Plan(Common),
    /// Smooth a polyline CSV.
    Smooth(Common),
    /// Run a closed-loop scenario.
    Simulate(Common),
    /// Repeat `simulate` (or `smooth` for CSV input) over values of one key.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Run the randomized oracle suites.
    Selftest(Common),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error("planning failed: {0}")]
    Infeasible(#[from] PlanError),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Config(ConfigError::Read { .. } | ConfigError::Override(_)) => EXIT_USAGE,
            Self::Config(_) | Self::Input(_) => EXIT_SCHEMA,
            Self::Infeasible(_) => EXIT_INFEASIBLE,
            Self::Internal(_) => EXIT_INTERNAL,
        }
    }
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    input: Option<String>,
    output: String,
    seed: u64,
    overrides: BTreeMap<String, String>,
    parameters: Value,
    outputs: Vec<String>,
}

struct Run<'a> {
    command: &'a str,
    common: &'a Common,
    overrides: Vec<(String, String)>,
    outputs: Vec<String>,
}

impl<'a> Run<'a> {
    fn new(command: &'a str, common: &'a Common) -> Result<Self, CliError> {
        let overrides = common.set.iter().map(|s| config::parse_override(s)).collect::<Result<_, _>>()?;
        fs::create_dir_all(&common.out)
            .map_err(|e| internal(format!("cannot create {}: {e}", common.out.display())))?;
        Ok(Self { command, common, overrides, outputs: Vec::new() })
    }

    fn input(&self) -> Result<&'a Path, CliError> {
        match (&self.common.input, &self.common.scenario) {
            (Some(a), Some(b)) if a != b => Err(CliError::Usage("give the input either positionally or with --scenario".into())),
            (Some(p), _) | (None, Some(p)) => Ok(p),
            (None, None) => Err(CliError::Usage(format!("`{}` needs an input file", self.command))),
        }
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.common.out.join(name)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).map_err(internal)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| internal(format!("cannot write {}: {e}", path.display())))
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.path(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| internal(format!("cannot write {}: {e}", path.display())))
    }

    fn scenario(&mut self) -> Result<ScenarioConfig, CliError> {
        let cfg = config::load_scenario(self.input()?, &self.overrides)?.resolved();
        self.write_json("resolved_scenario.json", &cfg)?;
        Ok(cfg)
    }

    fn finish(mut self, parameters: Value) -> Result<(), CliError> {
        let manifest = Manifest {
            tool: "mergeplan",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            input: self.input().ok().map(|p| p.display().to_string()),
            output: self.common.out.display().to_string(),
            seed: self.common.seed,
            overrides: self.overrides.iter().cloned().collect(),
            parameters,
            outputs: {
                let mut o = self.outputs.clone();
                o.push("manifest.json".into());
                o
            },
        };
        self.write_json("manifest.json", &manifest)
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn io_error(e: IoError) -> CliError {
    match e {
        IoError::Io(e) => internal(e),
        other => CliError::Input(other.to_string()),
    }
}

/// Smoother settings from `--set` keys, with or without a `smoother.`
/// prefix.
pub fn smoother_config(overrides: &[(String, String)]) -> Result<SmootherConfig, CliError> {
    let mut value = to_value(&SmootherConfig::default());
    for (key, raw) in overrides {
        let field = key.strip_prefix("smoother.").unwrap_or(key);
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
        value
            .as_object_mut()
            .expect("config serializes to an object")
            .insert(field.to_string(), parsed);
    }
    let cfg: SmootherConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        ConfigError::Schema { field: format!("smoother.{}", e.path()), message: e.into_inner().to_string() }
    })?;
    cfg.validate().map_err(|m| ConfigError::Schema { field: "smoother".into(), message: m })?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct PlanOutput {
    decision: mergeplan::opportunity::OpportunityDecision,
    gap: mergeplan::opportunity::MergeScenario,
    plan: planner::PlanSummary,
    smooth: Option<smoother::SmoothReport>,
}

fn cmd_plan(common: &Common) -> Result<(), CliError> {
    let mut run = Run::new("plan", common)?;
    let cfg = run.scenario()?;
    let targets: Vec<_> = cfg.targets.iter().map(|t| t.motion()).collect();
    let gap = classify(cfg.ego.v, &targets, &cfg.opportunity);
    let decision = decide(cfg.ego.v, &gap, &cfg.opportunity);
    let pc = &cfg.planner;
    let lat = LateralSpec::from_config(pc, cfg.ego_d(), 0.0, 0.0, cfg.lane.lane_width);
    let target = planner::longitudinal_target(&gap, cfg.v_set(), pc);
    let lon = LongitudinalSpec::from_config(pc, 0.0, cfg.ego.v, cfg.ego.a, target);
    let reference = ReferenceLine::new(Point2::new(cfg.ego.s, 0.0), 0.0, cfg.lane.lane_width)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let result = planner::plan(&lat, &lon, &reference, pc)?;
    mio::write_trajectory_csv(&result.trajectory, run.create("raw_trajectory.csv")?).map_err(io_error)?;
    let (trajectory, report) = if cfg.sim.smooth {
        let (t, r) = smoother::smooth(&result.trajectory, &reference, &cfg.smoother).map_err(internal)?;
        (t, Some(r))
    } else {
        (result.trajectory.clone(), None)
    };
    mio::write_trajectory_csv(&trajectory, run.create("trajectory.csv")?).map_err(io_error)?;
    if common.diagnostics {
        let outcomes = planner::sweep(&lat, &lon, pc);
        let rows: Vec<Value> = outcomes
            .iter()
            .map(|(te, r)| match r {
                Ok(s) => serde_json::json!({ "te": te, "cost_lat": s.cost_lat, "cost_lon": s.cost_lon, "cost_total": s.cost_total }),
                Err(e) => serde_json::json!({ "te": te, "error": e.to_string() }),
            })
            .collect();
        run.write_json("te_sweep.json", &rows)?;
    }
    run.write_json("plan.json", &PlanOutput { decision, gap, plan: result.summary(), smooth: report })?;
    run.finish(to_value(&cfg))
}

fn write_sweeps(report: &smoother::SmoothReport, out: BufWriter<File>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "max_curvature", "max_offset"]).map_err(internal)?;
    for s in &report.sweeps {
        w.write_record([s.iteration.to_string(), mio::fmt_g6(s.max_curvature), mio::fmt_g6(s.max_offset)])
            .map_err(internal)?;
    }
    w.flush().map_err(internal)
}

fn read_polyline(path: &Path) -> Result<Vec<Point2>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    mio::read_polyline_csv(file).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn cmd_smooth(common: &Common) -> Result<(), CliError> {
    let mut run = Run::new("smooth", common)?;
    let cfg = smoother_config(&run.overrides)?;
    let points = read_polyline(run.input()?)?;
    let (smoothed, report) = smoother::smooth_polyline(&points, &cfg).map_err(|e| CliError::Input(e.to_string()))?;
    mio::write_polyline_csv(&smoothed, run.create("smoothed.csv")?).map_err(io_error)?;
    run.write_json("report.json", &report)?;
    if common.diagnostics {
        write_sweeps(&report, run.create("sweeps.csv")?)?;
    }
    run.finish(to_value(&cfg))
}

#[derive(Debug, Serialize)]
struct SimOutput<'a> {
    summary: &'a simulator::SimSummary,
    events: &'a [simulator::Event],
}

fn cmd_simulate(common: &Common) -> Result<(), CliError> {
    let mut run = Run::new("simulate", common)?;
    let cfg = run.scenario()?;
    let log = simulator::run(&cfg);
    log.write_csv(run.create("simlog.csv")?).map_err(io_error)?;
    run.write_json("summary.json", &SimOutput { summary: &log.summary, events: &log.events })?;
    if common.diagnostics {
        if let Some(report) = &log.summary.smooth {
            write_sweeps(report, run.create("sweeps.csv")?)?;
        }
    }
    run.finish(to_value(&cfg))
}

fn is_polyline(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn cmd_sweep(common: &Common, param: &str, values: &[String]) -> Result<(), CliError> {
    let mut run = Run::new("sweep", common)?;
    let input = run.input()?;
    let with = |value: &String| {
        let mut o = run.overrides.clone();
        o.push((param.to_string(), value.clone()));
        o
    };
    let mut table = csv::Writer::from_writer(Vec::new());
    let cell = |v: Option<f64>| v.map_or(String::new(), mio::fmt_g6);
    if is_polyline(input) {
        let points = read_polyline(input)?;
        let configs = values.iter().map(|v| smoother_config(&with(v))).collect::<Result<Vec<_>, _>>()?;
        let reports: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> =
                configs.iter().map(|cfg| s.spawn(|| smoother::smooth_polyline(&points, cfg))).collect();
            handles.into_iter().map(|h| h.join().expect("smoothing thread")).collect()
        });
        table
            .write_record([param, "iterations", "stop_reason", "max_curvature", "max_heading_deg", "max_offset"])
            .map_err(internal)?;
        for (k, (value, outcome)) in values.iter().zip(reports).enumerate() {
            let (_, r) = outcome.map_err(|e| CliError::Input(e.to_string()))?;
            run.write_json(&format!("run{k:03}_report.json"), &r)?;
            table
                .write_record([
                    value.clone(),
                    r.iterations_run.to_string(),
                    format!("{:?}", r.stop_reason),
                    mio::fmt_g6(r.max_curvature_after),
                    mio::fmt_g6(r.max_heading_after.to_degrees()),
                    mio::fmt_g6(r.max_offset),
                ])
                .map_err(internal)?;
        }
    } else {
        let configs = values
            .iter()
            .map(|v| config::load_scenario(input, &with(v)).map(|c| c.resolved()))
            .collect::<Result<Vec<_>, _>>()?;
        let logs: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = configs.iter().map(|cfg| s.spawn(|| simulator::run(cfg))).collect();
            handles.into_iter().map(|h| h.join().expect("simulation thread")).collect()
        });
        table
            .write_record([
                param, "merge_time", "te", "cost_total", "settled_at", "final_p_dist", "final_speed_error",
                "peak_v_lat", "peak_a_lat", "peak_a_lon",
            ])
            .map_err(internal)?;
        for (k, (value, log)) in values.iter().zip(&logs).enumerate() {
            let s = &log.summary;
            run.write_json(&format!("run{k:03}_summary.json"), &SimOutput { summary: s, events: &log.events })?;
            table
                .write_record([
                    value.clone(),
                    cell(s.merge_time),
                    cell(s.plan.as_ref().map(|p| p.te)),
                    cell(s.plan.as_ref().map(|p| p.cost_total)),
                    cell(s.settled_at),
                    mio::fmt_g6(s.final_p_dist),
                    mio::fmt_g6(s.final_speed_error),
                    mio::fmt_g6(s.peak_v_lat),
                    mio::fmt_g6(s.peak_a_lat),
                    mio::fmt_g6(s.peak_a_lon),
                ])
                .map_err(internal)?;
        }
    }
    let bytes = table.into_inner().map_err(internal)?;
    let path = run.path("sweep.csv");
    fs::write(&path, bytes).map_err(internal)?;
    run.finish(serde_json::json!({ "param": param, "values": values }))
}

fn cmd_selftest(common: &Common) -> Result<bool, CliError> {
    let mut run = Run::new("selftest", common)?;
    let report = selftest::run_all(common.seed);
    for line in report.lines() {
        println!("{line}");
    }
    let passed = report.passed();
    run.write_json("selftest.json", &report)?;
    run.finish(serde_json::json!({ "seed": common.seed }))?;
    Ok(passed)
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match &cli.command {
        Command::Plan(c) => cmd_plan(c),
        Command::Smooth(c) => cmd_smooth(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Sweep { common, param, values } => cmd_sweep(common, param, values),
        Command::Selftest(c) => match cmd_selftest(c) {
            Ok(true) => Ok(()),
            Ok(false) => Err(CliError::Internal("selftest failed".into())),
            Err(e) => Err(e),
        },
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
