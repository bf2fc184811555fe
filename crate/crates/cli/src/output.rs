//! CSV and manifest writers. Column layouts are part of the versioned output
//! schema; bump [`SCHEMA_VERSION`] whenever one changes.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use hmpc_core::scenario::AXIS_NAMES;
use hmpc_core::sim::{summarize, tracking_errors, ErrorSummary, ExecutionLog};
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const VERSION: &str = env!("HMPC_BUILD_VERSION");

/// Tracks written files and removes them on drop unless committed, so a
/// failed command leaves no partial output behind.
#[derive(Debug, Default)]
pub struct OutputGuard {
    files: Mutex<Vec<PathBuf>>,
    dirs: Mutex<Vec<PathBuf>>,
    committed: bool,
}

impl OutputGuard {
    /// Creates `dir` and its missing parents, remembering the ones it made.
    pub fn create_dir(&self, dir: &Path) -> CliResult<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir).map_err(|e| CliError::io(&format!("creating {}", dir.display()), e))?;
        let mut dirs = self.dirs.lock().unwrap();
        dirs.extend(missing.into_iter().rev());
        Ok(())
    }

    pub fn write(&self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        self.files.lock().unwrap().push(path.to_path_buf());
        fs::write(path, bytes).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in self.files.get_mut().unwrap().iter() {
            let _ = fs::remove_file(f);
        }
        // Deepest first; only directories this guard created, and only if empty.
        for d in self.dirs.get_mut().unwrap().iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

pub fn log_header(dof: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for prefix in ["q", "qd", "u_qd", "u_qdd"] {
        h.extend((0..dof).map(|i| format!("{prefix}_{i}")));
    }
    for (prefix, axes) in [
        ("p", &["x", "y", "z"][..]),
        ("o", &["w", "x", "y", "z"][..]),
        ("pref", &["x", "y", "z"][..]),
        ("oref", &["w", "x", "y", "z"][..]),
        ("ep", &["x", "y", "z"][..]),
        ("eo", &["x", "y", "z"][..]),
    ] {
        h.extend(axes.iter().map(|a| format!("{prefix}_{a}")));
    }
    h.push("qp_status".into());
    h.push("solve_time_us".into());
    h
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::io("csv", e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::io("csv", e))?;
    }
    w.into_inner().map_err(|e| CliError::io("csv", e))
}

fn strings<'a, I: IntoIterator<Item = &'a f64>>(values: I) -> impl Iterator<Item = String> + use<'a, I> {
    // Adding zero turns -0 into 0.
    values.into_iter().map(|v| (v + 0.0).to_string())
}

/// `log.csv`; solve times are zeroed unless `timing`, keeping the file
/// reproducible byte for byte.
pub fn log_csv(log: &ExecutionLog, timing: bool) -> CliResult<Vec<u8>> {
    let n = log.dof;
    let rows = log.records.iter().map(|r| {
        let mut row = vec![r.t.to_string()];
        row.extend(strings(r.q.iter()));
        row.extend(strings(r.qd.iter()));
        row.extend(strings(r.u.rows(0, n).iter()));
        row.extend(strings(r.u.rows(n, n).iter()));
        row.extend(strings(r.x.p.iter()));
        row.extend(strings(r.x.o.iter()));
        row.extend(strings(r.x_ref.p.iter()));
        row.extend(strings(r.x_ref.o.iter()));
        row.extend(strings(r.e_p.iter()));
        row.extend(strings(r.e_o.iter()));
        row.push(r.status.as_str().to_string());
        row.push(if timing { r.solve_time.as_micros().to_string() } else { "0".into() });
        row
    });
    csv_bytes(&log_header(n), rows)
}

/// Error series keyed by metric name: the two error norms, then each axis.
pub fn error_metrics(log: &ExecutionLog) -> Vec<(&'static str, Vec<f64>)> {
    let mut out = vec![
        ("ep_norm", log.records.iter().map(|r| r.e_p.norm()).collect()),
        ("eo_norm", log.records.iter().map(|r| r.e_o.norm()).collect()),
    ];
    out.extend(AXIS_NAMES.into_iter().zip(tracking_errors(log)));
    out
}

pub const STATS_COLUMNS: [&str; 9] = ["count", "median", "q1", "q3", "iqr", "whisker_low", "whisker_high", "outliers", "max"];

fn stats_fields(s: &ErrorSummary) -> Vec<String> {
    vec![
        s.count.to_string(),
        s.median.to_string(),
        s.q1.to_string(),
        s.q3.to_string(),
        s.iqr.to_string(),
        s.whisker_low.to_string(),
        s.whisker_high.to_string(),
        s.outliers.to_string(),
        s.max.to_string(),
    ]
}

fn header(keys: &[&str]) -> Vec<String> {
    keys.iter().chain(STATS_COLUMNS.iter()).map(|s| s.to_string()).collect()
}

/// `summary.csv`: box statistics of every error metric of one run.
pub fn summary_csv(log: &ExecutionLog) -> CliResult<Vec<u8>> {
    let rows = error_metrics(log).into_iter().filter_map(|(name, series)| {
        let s = summarize(&series)?;
        let mut row = vec![log.scenario.clone(), log.controller.as_str().into(), name.into()];
        row.extend(stats_fields(&s));
        Some(row)
    });
    csv_bytes(&header(&["scenario", "controller", "metric"]), rows)
}

/// `boxstats.csv`: one row per scenario, controller and task axis.
pub fn boxstats_csv(logs: &[&ExecutionLog]) -> CliResult<Vec<u8>> {
    let mut rows = Vec::new();
    for log in logs {
        for (axis, series) in AXIS_NAMES.iter().zip(tracking_errors(log)) {
            let Some(s) = summarize(&series) else { continue };
            let mut row = vec![log.scenario.clone(), log.chain.clone(), log.controller.as_str().into(), axis.to_string()];
            row.extend(stats_fields(&s));
            rows.push(row);
        }
    }
    csv_bytes(&header(&["scenario", "chain", "controller", "axis"]), rows)
}

pub fn write_csv_rows(guard: &OutputGuard, path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> CliResult<()> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    guard.write(path, &csv_bytes(&header, rows)?)
}

pub fn write_json(guard: &OutputGuard, path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io("manifest", e))?;
    text.push('\n');
    guard.write(path, text.as_bytes())
}

/// Median, 99th percentile and max of the logged controller times, microseconds.
pub fn timing_stats(log: &ExecutionLog) -> Value {
    let mut t: Vec<f64> = log.records.iter().map(|r| r.solve_time.as_secs_f64() * 1e6).collect();
    if t.is_empty() {
        return Value::Null;
    }
    t.sort_by(f64::total_cmp);
    let q = |p: f64| hmpc_core::sim::quantile(&t, p);
    serde_json::json!({ "median_us": q(0.5), "p99_us": q(0.99), "max_us": t[t.len() - 1] })
}
