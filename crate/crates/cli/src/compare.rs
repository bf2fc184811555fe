use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use clap::Args;
use hmpc_core::controllers::ControllerKind;
use hmpc_core::sim::{run_on_reference, summarize, ExecutionLog};
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::input::{prepare, Overrides};
use crate::output::{boxstats_csv, error_metrics, write_csv_rows, write_json, OutputGuard};
use crate::run::{manifest, run_summary, scenario_echo, write_run};

pub const DEFAULT_SCENARIOS: [&str; 5] = ["spiral_A", "spiral_B", "spiral_C", "spiral_D", "spiral_E"];

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Scenario names or files; defaults to the five stock spirals.
    #[arg(long)]
    pub scenario: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Concurrent runs; defaults to the available cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

pub const WINNERS_HEADER: [&str; 6] = ["scenario", "metric", "hmpc_median", "mpc_median", "hqp_median", "winner"];

/// Lowest median wins; ties go to the earlier controller in [`ControllerKind::ALL`].
fn winner_rows(scenario: &str, logs: &[&ExecutionLog]) -> Vec<Vec<String>> {
    let metrics: Vec<Vec<(&str, Vec<f64>)>> = logs.iter().map(|l| error_metrics(l)).collect();
    (0..metrics[0].len())
        .map(|m| {
            let medians: Vec<f64> =
                metrics.iter().map(|ms| summarize(&ms[m].1).map_or(f64::NAN, |s| s.median)).collect();
            let mut best = 0;
            for (i, v) in medians.iter().enumerate() {
                if *v < medians[best] || medians[best].is_nan() {
                    best = i;
                }
            }
            let mut row = vec![scenario.to_string(), metrics[0][m].0.to_string()];
            row.extend(medians.iter().map(|v| v.to_string()));
            row.push(logs[best].controller.as_str().to_string());
            row
        })
        .collect()
}

pub fn cmd_compare(args: &CompareArgs) -> CliResult<()> {
    let pairs = args.overrides.pairs()?;
    if pairs.iter().any(|(k, _)| k == "controller") {
        return Err(CliError::Config("compare runs every controller; drop the controller override".into()));
    }
    let names: Vec<String> = if args.scenario.is_empty() {
        DEFAULT_SCENARIOS.iter().map(|s| s.to_string()).collect()
    } else {
        args.scenario.clone()
    };
    let mut prepared = Vec::new();
    for name in &names {
        let (file, sc) = prepare(name, &pairs)?;
        let reference = sc.reference().map_err(CliError::from_setup)?;
        prepared.push((file, sc, reference));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some((_, sc, _)) = prepared.iter().find(|(_, sc, _)| !seen.insert(sc.name.clone())) {
        return Err(CliError::Config(format!("scenario name {:?} appears twice", sc.name)));
    }

    let guard = OutputGuard::default();
    guard.create_dir(&args.out)?;
    let jobs: Vec<(usize, ControllerKind)> =
        (0..prepared.len()).flat_map(|s| ControllerKind::ALL.map(|k| (s, k))).collect();
    let workers = args
        .jobs
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, jobs.len());
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let results: Mutex<Vec<Option<CliResult<ExecutionLog>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::SeqCst);
                if j >= jobs.len() || abort.load(Ordering::SeqCst) {
                    break;
                }
                let (si, kind) = jobs[j];
                let (_, sc, reference) = &prepared[si];
                let out = run_on_reference(sc, reference, kind).map_err(CliError::from_run).and_then(|log| {
                    let dir = args.out.join(&sc.name).join(kind.as_str());
                    write_run(&guard, &dir, &log, args.timing)?;
                    Ok(log)
                });
                match &out {
                    Ok(log) => eprintln!("{} / {}: {} cycles, {} soft failures", sc.name, kind, log.len(), log.soft_failures()),
                    Err(_) => abort.store(true, Ordering::SeqCst),
                }
                results.lock().unwrap()[j] = Some(out);
            });
        }
    });
    let mut logs = Vec::with_capacity(jobs.len());
    for r in results.into_inner().unwrap() {
        match r {
            Some(Ok(log)) => logs.push(log),
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    if logs.len() != jobs.len() {
        return Err(CliError::Failed("comparison aborted".into()));
    }

    let all: Vec<&ExecutionLog> = logs.iter().collect();
    guard.write(&args.out.join("boxstats.csv"), &boxstats_csv(&all)?)?;
    let mut winners = Vec::new();
    let mut runs: Vec<Value> = Vec::new();
    for (si, chunk) in all.chunks(ControllerKind::ALL.len()).enumerate() {
        let sc = &prepared[si].1;
        winners.extend(winner_rows(&sc.name, chunk));
        runs.extend(chunk.iter().map(|l| {
            let mut v = run_summary(sc, l, args.timing);
            v["scenario"] = Value::String(sc.name.clone());
            v
        }));
    }
    for row in winners.iter().filter(|r| r[1] == "ep_norm") {
        println!("{:<14} ep_norm median  hmpc {:>10.3e}  mpc {:>10.3e}  hqp {:>10.3e}  winner {}", row[0],
            row[2].parse::<f64>().unwrap_or(f64::NAN), row[3].parse::<f64>().unwrap_or(f64::NAN),
            row[4].parse::<f64>().unwrap_or(f64::NAN), row[5]);
    }
    write_csv_rows(&guard, &args.out.join("winners.csv"), &WINNERS_HEADER, winners)?;
    let echo = prepared.iter().map(|(f, sc, _)| scenario_echo(f, sc)).collect();
    let dof = prepared[0].1.chain.dof();
    let shared = prepared.iter().all(|(_, sc, _)| sc.chain.dof() == dof).then_some(dof);
    let m = manifest("compare", echo, runs, args.timing, shared);
    write_json(&guard, &args.out.join("manifest.json"), &m)?;
    guard.commit();
    Ok(())
}
