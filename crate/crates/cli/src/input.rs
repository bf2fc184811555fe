use std::path::Path;

use clap::Args;
use hmpc_core::chain::ChainModel;
use hmpc_core::morphology::{load_chain, lookup_chain};
use hmpc_core::scenario::{builtin_scenario, with_overrides, Scenario, ScenarioFile};

use crate::error::{CliError, CliResult};

/// Settings shared by `run` and `compare`, applied on top of the scenario file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Control period and prediction step, seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// High-level horizon of H-MPC; also the horizon of weighted MPC.
    #[arg(long = "horizon-h")]
    pub horizon_high: Option<usize>,
    /// Low-level horizon of H-MPC.
    #[arg(long = "horizon-l")]
    pub horizon_low: Option<usize>,
    /// Any scenario key as `dotted.key=value`, e.g. `weights.position=500`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub extra: Vec<String>,
}

impl Overrides {
    /// Flag settings as dotted key/value pairs; `--override` entries come last and win.
    pub fn pairs(&self) -> CliResult<Vec<(String, String)>> {
        let mut out = Vec::new();
        if let Some(dt) = self.dt {
            out.push(("horizons.dt".to_string(), format!("{dt:?}")));
        }
        if let Some(seed) = self.seed {
            out.push(("seed".to_string(), seed.to_string()));
        }
        if let Some(h) = self.horizon_high {
            out.push(("horizons.high".to_string(), h.to_string()));
            out.push(("horizons.n".to_string(), h.to_string()));
        }
        if let Some(l) = self.horizon_low {
            out.push(("horizons.low".to_string(), l.to_string()));
        }
        for e in &self.extra {
            let (k, v) = e
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override {e:?} is not of the form KEY=VALUE")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }
}

fn looks_like_path(arg: &str) -> bool {
    arg.contains(std::path::MAIN_SEPARATOR) || arg.contains('/') || arg.ends_with(".toml")
}

/// A scenario file on disk, or a builtin scenario name.
pub fn load_scenario_file(arg: &str) -> CliResult<ScenarioFile> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("reading {arg}: {e}")))?;
        return ScenarioFile::parse(&text).map_err(|e| CliError::Config(format!("{arg}: {e}")));
    }
    if looks_like_path(arg) {
        return Err(CliError::Config(format!("scenario file {arg} does not exist")));
    }
    builtin_scenario(arg).ok_or_else(|| {
        CliError::Config(format!("unknown scenario {arg:?}; builtin names are spiral_X and extension_X for X in A..E"))
    })
}

/// Loads, overrides and validates a scenario before anything runs.
pub fn prepare(arg: &str, extra: &[(String, String)]) -> CliResult<(ScenarioFile, Scenario)> {
    let file = load_scenario_file(arg)?;
    let file = with_overrides(&file, extra).map_err(|e| CliError::Config(format!("{arg}: {e}")))?;
    let sc = file.to_scenario().map_err(|e| match CliError::from_setup(e) {
        CliError::Config(m) => CliError::Config(format!("{arg}: {m}")),
        other => other,
    })?;
    Ok((file, sc))
}

/// A builtin chain name, or a chain config file.
pub fn load_chain_arg(arg: &str) -> CliResult<ChainModel> {
    if let Some(chain) = lookup_chain(arg) {
        return Ok(chain);
    }
    let path = Path::new(arg);
    if !path.is_file() {
        return Err(CliError::Config(format!("{arg:?} is neither a builtin chain nor a chain file")));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("reading {arg}: {e}")))?;
    load_chain(&text).map_err(CliError::from_setup)
}
