use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use hmpc_core::controllers::ControllerKind;
use hmpc_core::scenario::{Scenario, ScenarioFile};
use hmpc_core::sim::{max_limit_excess, ExecutionLog};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::input::{prepare, Overrides};
use crate::output::{log_csv, log_header, summary_csv, timing_stats, write_json, OutputGuard, SCHEMA_VERSION, VERSION};

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Builtin scenario name (e.g. spiral_E) or scenario file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, value_parser = ["hmpc", "mpc", "hqp"])]
    pub controller: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Record measured controller times in solve_time_us (otherwise 0).
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

pub fn run_summary(sc: &Scenario, log: &ExecutionLog, timing: bool) -> Value {
    let mut statuses = BTreeMap::new();
    for r in &log.records {
        *statuses.entry(r.status.as_str()).or_insert(0usize) += 1;
    }
    json!({
        "controller": log.controller.as_str(),
        "cycles": log.len(),
        "soft_failures": log.soft_failures(),
        "status_counts": statuses,
        "max_limit_excess": max_limit_excess(log, &sc.chain.limits()),
        "timing": if timing { timing_stats(log) } else { Value::Null },
    })
}

/// Run manifest; `dof` fixes the log columns when all runs share a chain size.
pub fn manifest(command: &str, scenarios: Vec<Value>, runs: Vec<Value>, timing: bool, dof: Option<usize>) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "version": VERSION,
        "command": command,
        "timing": timing,
        "log_columns": dof.map(log_header),
        "scenarios": scenarios,
        "runs": runs,
    })
}

pub fn scenario_echo(file: &ScenarioFile, sc: &Scenario) -> Value {
    json!({ "name": sc.name, "chain": sc.chain.name, "dof": sc.chain.dof(), "config": file })
}

/// Writes `log.csv` and `summary.csv` for one run into `dir`.
pub fn write_run(guard: &OutputGuard, dir: &Path, log: &ExecutionLog, timing: bool) -> CliResult<()> {
    guard.create_dir(dir)?;
    guard.write(&dir.join("log.csv"), &log_csv(log, timing)?)?;
    guard.write(&dir.join("summary.csv"), &summary_csv(log)?)
}

pub fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let mut pairs = args.overrides.pairs()?;
    if let Some(c) = &args.controller {
        pairs.insert(0, ("controller".into(), format!("{c:?}")));
    }
    let (file, sc) = prepare(&args.scenario, &pairs)?;
    let reference = sc.reference().map_err(CliError::from_setup)?;
    let kind: ControllerKind = sc.controller;

    let guard = OutputGuard::default();
    guard.create_dir(&args.out)?;
    let log = hmpc_core::sim::run_on_reference(&sc, &reference, kind).map_err(CliError::from_run)?;
    write_run(&guard, &args.out, &log, args.timing)?;
    let m = manifest(
        "run",
        vec![scenario_echo(&file, &sc)],
        vec![run_summary(&sc, &log, args.timing)],
        args.timing,
        Some(sc.chain.dof()),
    );
    write_json(&guard, &args.out.join("manifest.json"), &m)?;
    guard.commit();
    eprintln!(
        "{}: {} cycles with {}, {} soft failures -> {}",
        sc.name,
        log.len(),
        kind,
        log.soft_failures(),
        args.out.display()
    );
    Ok(())
}
