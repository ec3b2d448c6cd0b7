//! Command-line front end for the feeder shedding simulator.
//!
//! Exit codes: 0 success, 1 usage or scenario-validation problems,
//! 2 runtime failures (simulation aborts, unwritable outputs).

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use gridshed_core::engine::{compare_runs, run, EngineError, SimulationResult};
use gridshed_core::output::{write_comparison, write_outputs};
use gridshed_core::rng::sweep_row_seed;
use gridshed_core::scenario::{
    apply_override, apply_overrides, parse_override, parse_scenario_str, resolve_scenario,
    ScenarioConfig, ScenarioError,
};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "gridshed",
    version,
    about = "Deterministic islanded-feeder load shedding simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write timeseries.csv, events.json, summary.json
    Run(RunArgs),
    /// Parse and validate a scenario without running it
    Validate(ValidateArgs),
    /// Run two scenarios over the same plant and write a side-by-side CSV
    Compare(CompareArgs),
    /// Run a scenario over a grid of parameter values
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file
    scenario: PathBuf,
    /// Override a scenario value, e.g. --set sim.seed=7 (repeatable)
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
    /// Output directory (default: $GRIDSHED_OUT/<name> or out/<name>)
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario file
    scenario: PathBuf,
    /// Override a scenario value before validating (repeatable)
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct CompareArgs {
    /// First scenario file
    scenario_a: PathBuf,
    /// Second scenario file (must describe the same plant)
    scenario_b: PathBuf,
    /// Override applied to both scenarios (repeatable)
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
    /// Comparison CSV path (default: $GRIDSHED_OUT/compare.csv or out/compare.csv)
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario file
    scenario: PathBuf,
    /// Fixed override applied to every row (repeatable)
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
    /// Swept axis, e.g. --axis ufls.tau2_s=300,900 (repeatable; rows are
    /// the cartesian product in the order the axes are given)
    #[arg(long = "axis", value_name = "PATH=V1,V2,...", required = true)]
    axis: Vec<String>,
    /// Worker threads (the result is identical for any value)
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Sweep CSV path (default: $GRIDSHED_OUT/sweep.csv or out/sweep.csv)
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Failures that are the caller's to fix versus the environment's.
enum AppError {
    User(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for AppError {
    fn from(e: E) -> Self {
        let err = e.into();
        let user = err.chain().any(|cause| {
            cause.is::<ScenarioError>()
                || matches!(cause.downcast_ref(), Some(EngineError::NotComparable(_)))
        });
        if user {
            AppError::User(err)
        } else {
            AppError::Runtime(err)
        }
    }
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => 0,
        Err(AppError::User(e)) => {
            eprintln!("error: {e:#}");
            1
        }
        Err(AppError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

/// Load a scenario with overrides already applied.
fn load_with_overrides(path: &Path, sets: &[String]) -> Result<ScenarioConfig, AppError> {
    let text = fs::read_to_string(path)
        .map_err(ScenarioError::from)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut value = parse_scenario_str(&text)
        .with_context(|| format!("cannot parse {}", path.display()))?;
    apply_overrides(&mut value, sets)?;
    Ok(resolve_scenario(value, path.parent())
        .with_context(|| format!("invalid scenario {}", path.display()))?)
}

fn default_out(leaf: &str) -> PathBuf {
    match std::env::var_os("GRIDSHED_OUT") {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(leaf),
        _ => Path::new("out").join(leaf),
    }
}

fn summary_line(result: &SimulationResult) -> String {
    format!(
        "{}: {} UFLS events, {:.3} MWh served, max |df| {:.3} Hz",
        result.scenario_name,
        result.metrics.ufls_event_count,
        result.metrics.energy_served_mwh,
        result.metrics.max_freq_deviation_hz
    )
}

fn cmd_run(args: RunArgs) -> Result<(), AppError> {
    let cfg = load_with_overrides(&args.scenario, &args.set)?;
    let result = run(&cfg)?;
    let out = args.out.unwrap_or_else(|| default_out(&cfg.name));
    write_outputs(&result, &out)?;
    println!("{}", summary_line(&result));
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), AppError> {
    let cfg = load_with_overrides(&args.scenario, &args.set)?;
    println!(
        "ok: {} ({} groups, {} devices, {:.0} s horizon, seed {})",
        cfg.name,
        cfg.topology.groups.len(),
        cfg.devices.len(),
        cfg.horizon_s,
        cfg.seed
    );
    println!("config fingerprint   {}", cfg.fingerprint());
    println!("topology fingerprint {}", cfg.topology_fingerprint());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), AppError> {
    let a = run(&load_with_overrides(&args.scenario_a, &args.set)?)?;
    let b = run(&load_with_overrides(&args.scenario_b, &args.set)?)?;
    let cmp = compare_runs(&a, &b)?;
    let out = args.out.unwrap_or_else(|| default_out("compare.csv"));
    write_comparison(&cmp, &out)?;
    println!("{}", summary_line(&a));
    println!("{}", summary_line(&b));
    println!(
        "delta: {:+.3} MWh served ({} vs {})",
        b.metrics.energy_served_mwh - a.metrics.energy_served_mwh,
        cmp.name_b,
        cmp.name_a
    );
    eprintln!("wrote {}", out.display());
    Ok(())
}

/// One swept axis: a scenario path and the raw values it takes.
struct Axis {
    path: String,
    values: Vec<String>,
}

fn parse_axis(spec: &str) -> Result<Axis, ScenarioError> {
    let (path, list) = spec.split_once('=').ok_or_else(|| {
        ScenarioError::OverrideValue(format!("`{spec}` is not of the form path=v1,v2,..."))
    })?;
    let values: Vec<String> = list
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(ScenarioError::OverrideValue(format!(
            "axis `{path}` has no values"
        )));
    }
    Ok(Axis {
        path: path.trim().to_string(),
        values,
    })
}

fn cmd_sweep(args: SweepArgs) -> Result<(), AppError> {
    let text = fs::read_to_string(&args.scenario)
        .map_err(ScenarioError::from)
        .with_context(|| format!("cannot read {}", args.scenario.display()))?;
    let mut base = parse_scenario_str(&text)
        .with_context(|| format!("cannot parse {}", args.scenario.display()))?;
    apply_overrides(&mut base, &args.set)?;

    let axes: Vec<Axis> = args
        .axis
        .iter()
        .map(|s| parse_axis(s))
        .collect::<Result<_, _>>()?;
    let n_rows: usize = axes.iter().map(|a| a.values.len()).product();

    // Materialize every row up front (cell assignment plus per-row seed)
    // so failures surface deterministically and workers stay independent.
    let base_dir = args.scenario.parent().map(Path::to_path_buf);
    let mut rows: Vec<(usize, Vec<String>, ScenarioConfig)> = Vec::with_capacity(n_rows);
    for index in 0..n_rows {
        let mut value = base.clone();
        let mut cells = Vec::with_capacity(axes.len());
        let mut rest = index;
        for axis in &axes {
            let pick = rest % axis.values.len();
            rest /= axis.values.len();
            let cell = &axis.values[pick];
            let (_, parsed) = parse_override(&format!("{}={}", axis.path, cell))?;
            apply_override(&mut value, &axis.path, parsed)
                .with_context(|| format!("row {index}"))?;
            cells.push(cell.clone());
        }
        let base_seed = value
            .get("sim")
            .and_then(|s| s.get("seed"))
            .and_then(|s| s.as_integer())
            .unwrap_or(0) as u64;
        let row_seed = sweep_row_seed(base_seed, index as u64);
        apply_override(
            &mut value,
            "sim.seed",
            toml::Value::Integer(row_seed as i64),
        )?;
        let cfg = resolve_scenario(value, base_dir.as_deref())
            .with_context(|| format!("row {index} is not a valid scenario"))?;
        rows.push((index, cells, cfg));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .context("cannot build worker pool")
        .map_err(AppError::Runtime)?;
    let mut results: Vec<(usize, Vec<String>, SimulationResult)> = pool.install(|| {
        rows.into_par_iter()
            .map(|(index, cells, cfg)| {
                let result = run(&cfg)?;
                Ok((index, cells, result))
            })
            .collect::<Result<Vec<_>, EngineError>>()
    })?;
    results.sort_by_key(|(index, _, _)| *index);

    let mut csv = String::from("index,seed");
    for axis in &axes {
        write!(csv, ",{}", axis.path).unwrap();
    }
    csv.push_str(
        ",ufls_events,energy_served_mwh,max_freq_deviation_hz,puf_mean,puf_max,vuf_mean_percent,vuf_max_percent\n",
    );
    for (index, cells, result) in &results {
        write!(csv, "{index},{}", result.seed).unwrap();
        for cell in cells {
            write!(csv, ",{cell}").unwrap();
        }
        let m = &result.metrics;
        writeln!(
            csv,
            ",{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            m.ufls_event_count,
            m.energy_served_mwh,
            m.max_freq_deviation_hz,
            m.puf_mean,
            m.puf_max,
            m.vuf_mean_percent,
            m.vuf_max_percent
        )
        .unwrap();
    }

    let out = args.out.unwrap_or_else(|| default_out("sweep.csv"));
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))
                .map_err(AppError::Runtime)?;
        }
    }
    fs::write(&out, csv)
        .with_context(|| format!("cannot write {}", out.display()))
        .map_err(AppError::Runtime)?;
    eprintln!("wrote {} rows to {}", results.len(), out.display());
    Ok(())
}
