use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use hmpc_core::chain::{self, ChainModel};
use hmpc_core::oracles::{
    acceleration_bound_check, error_bound_check, estimate_derivative_bounds, kinematics_check_with,
    run_order_experiment, OrderExperimentConfig, OrderExperimentReport,
};
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, CliResult};
use crate::input::load_chain_arg;
use crate::output::{write_csv_rows, OutputGuard};

pub const KINEMATICS_STATES: usize = 100;
pub const BOUND_SAMPLES: usize = 1000;
pub const DERIVATIVE_SAMPLES: usize = 10_000;
/// Step size whose neglected second-order term is compared with its nominal 4e-4.
pub const NOMINAL_STEP: f64 = 0.02;
pub const NOMINAL_NEGLECTED: f64 = 4e-4;

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Builtin chain name or chain file.
    #[arg(long, default_value = "2R")]
    pub chain: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Per-step joint motions, strictly decreasing, rad.
    #[arg(long, value_delimiter = ',', default_value = "0.04,0.02,0.01,0.005")]
    pub steps: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Negative control: perturb the analytic Jacobian before the difference check.
    #[arg(long, hide = true)]
    pub corrupt_jacobian: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub rule: String,
    pub pass: bool,
}

fn at_most(name: &'static str, value: f64, limit: f64) -> Check {
    Check { name, value, rule: format!("<= {limit:e}"), pass: value <= limit }
}

fn at_least(name: &'static str, value: f64, limit: f64) -> Check {
    Check { name, value, rule: format!(">= {limit}"), pass: value >= limit }
}

fn within(name: &'static str, value: f64, lo: f64, hi: f64) -> Check {
    Check { name, value, rule: format!("in [{lo:e}, {hi:e}]"), pass: value >= lo && value <= hi }
}

fn corrupted(c: &ChainModel, q: &DVector<f64>) -> hmpc_core::Result<DMatrix<f64>> {
    let mut j = chain::jacobian(c, q)?;
    j[(0, 0)] += 1e-3 * j.amax().max(1.0);
    Ok(j)
}

fn order_checks(report: &OrderExperimentReport) -> Vec<Check> {
    let nan = f64::NAN;
    let v = &report.velocity;
    let mut out = vec![
        at_least("velocity_win_rate", v.min_win_rate(), 0.95),
        at_least("acceleration_win_rate", report.acceleration.min_win_rate(), 0.95),
        within("frozen_slope", v.frozen_slope.unwrap_or(nan), 1.7, 2.2),
        at_least("relinearized_slope", v.relinearized_slope.unwrap_or(nan), 2.5),
    ];
    if let Some(k) = report.step_sizes.iter().position(|&h| (h - NOMINAL_STEP).abs() < 1e-12) {
        out.push(within(
            "neglected_term_scale",
            report.neglected_term_scale[k],
            NOMINAL_NEGLECTED / 2.0,
            NOMINAL_NEGLECTED * 2.0,
        ));
    }
    out
}

/// Runs every oracle check on `chain`; returns the checks and the order report.
pub fn run_checks(chain: &ChainModel, args: &VerifyArgs) -> CliResult<(Vec<Check>, OrderExperimentReport)> {
    let fail = |e: hmpc_core::Error| CliError::Failed(e.to_string());
    let mut checks = Vec::new();

    let jac: &dyn Fn(&ChainModel, &DVector<f64>) -> hmpc_core::Result<DMatrix<f64>> =
        if args.corrupt_jacobian { &corrupted } else { &|c, q| chain::jacobian(c, q) };
    let k = kinematics_check_with(chain, KINEMATICS_STATES, args.seed, jac).map_err(fail)?;
    checks.push(at_most("jacobian_fd_rel", k.jacobian_rel, 1e-6));
    checks.push(at_most("jacobian_dot_fd_rel", k.jacobian_dot_rel, 1e-5));
    checks.push(at_most("hessian_position_asymmetry", k.hessian_asymmetry, 1e-4));
    checks.push(within("richardson_ratio", k.richardson_ratio, 3.0, 5.0));

    let cfg = OrderExperimentConfig {
        step_sizes: args.steps.clone(),
        trials: args.trials,
        seed: args.seed,
        ..OrderExperimentConfig::default()
    };
    cfg.validate().map_err(CliError::from_setup)?;
    let report = run_order_experiment(chain, &cfg).map_err(fail)?;
    checks.extend(order_checks(&report));

    let bounds = estimate_derivative_bounds(chain, DERIVATIVE_SAMPLES, args.seed).map_err(fail)?;
    let b = error_bound_check(chain, BOUND_SAMPLES, args.seed, bounds.l_h).map_err(fail)?;
    checks.push(at_most("error_bound_violations", b.violations as f64, 0.0));
    let seeds = [args.seed, args.seed + 1, args.seed + 2];
    let a = acceleration_bound_check(chain, BOUND_SAMPLES, &seeds).map_err(fail)?;
    checks.push(at_most("acceleration_bound_violations", a.violations.iter().sum::<usize>() as f64, 0.0));
    Ok((checks, report))
}

pub fn cmd_verify(args: &VerifyArgs) -> CliResult<()> {
    let chain = load_chain_arg(&args.chain)?;
    let start = Instant::now();
    let guard = OutputGuard::default();
    guard.create_dir(&args.out)?;
    let (checks, report) = run_checks(&chain, args)?;

    let rows = report.csv_rows().into_iter().map(|r| r.to_vec()).collect();
    write_csv_rows(&guard, &args.out.join("order_report.csv"), &OrderExperimentReport::CSV_HEADER, rows)?;
    let rows = checks
        .iter()
        .map(|c| vec![c.name.to_string(), c.value.to_string(), c.rule.clone(), if c.pass { "PASS" } else { "FAIL" }.into()])
        .collect();
    write_csv_rows(&guard, &args.out.join("checks.csv"), &["check", "value", "rule", "result"], rows)?;
    guard.commit();

    println!("{:<32} {:>14}  {:<28} result", "check", "value", "rule");
    for c in &checks {
        println!("{:<32} {:>14.6e}  {:<28} {}", c.name, c.value, c.rule, if c.pass { "PASS" } else { "FAIL" });
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    eprintln!("verify {}: {} checks in {:.1} s", chain.name, checks.len(), start.elapsed().as_secs_f64());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("failed checks: {}", failed.join(", "))))
    }
}
