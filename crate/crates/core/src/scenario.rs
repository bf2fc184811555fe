//! Closed-loop scenarios: builtin spiral and full-extension tasks, and the
//! TOML scenario file.
//!
//! ```toml
//! name = "my_task"
//! chain = "E"                      # builtin name, or an inline chain table
//! initial_q = [0.0, 0.5, 0.5, 0.5, 0.0, 0.5]
//! initial_qd = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]   # optional
//! waypoints = [[0.3, 0.0, 0.4], [0.3, 0.1, 0.4]]   # after the start pose
//! orientation_goal = [0.0, 0.0, 1.5708]  # world rotation vector applied to the start orientation
//! controller = "hmpc"              # hmpc | mpc | hqp
//! seed = 0
//! hold = 0.0                       # seconds of regulation after the path ends
//! noise = 0.0                      # uniform joint-measurement noise amplitude, rad
//!
//! [speed]
//! v_max = 0.05
//! a_max = 0.05
//!
//! [weights]
//! position = 1000.0
//! orientation = 100.0
//! velocity = 1.0
//! input = 0.01
//! secondary_gain = 0.01
//! priority = ["px", "py", "pz"]
//!
//! [horizons]
//! n = 10
//! high = 10
//! low = 10
//! dt = 0.01
//! ```
//!
//! The start pose is the tool pose at `initial_q`; `waypoints` lists the
//! positions visited after it.

use std::f64::consts::PI;

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::chain::{self, ChainModel, EndEffectorState, JointState};
use crate::controllers::{ControllerConfig, ControllerKind, ControllerWeights, HorizonConfig};
use crate::morphology::{builtin_morphology, lookup_chain, ChainSpec};
use crate::so3;
use crate::trajectory::{
    build_reference, fit_position_trajectory, make_orientation_trajectory, ReferenceSample, ReferenceTrajectory,
    Waypoint,
};
use crate::{Error, Result};

pub const SPIRAL_RADIUS: f64 = 0.15;
/// Rise per turn, meters.
pub const SPIRAL_PITCH: f64 = 0.05;
pub const SPIRAL_TURNS: f64 = 2.0;
pub const SPIRAL_WAYPOINTS: usize = 16;
/// Outward reach of the full-extension task, meters.
pub const EXTENSION_REACH: f64 = 0.1;

pub const AXIS_NAMES: [&str; 6] = ["px", "py", "pz", "ox", "oy", "oz"];

/// Start poses of the builtin spirals; the helix around world z passes
/// through the tool position at this pose and stays inside the workspace.
pub fn spiral_home(chain: &str) -> Option<Vec<f64>> {
    let q: &[f64] = match chain.to_ascii_uppercase().as_str() {
        "A" => &[0.0, 0.14, 2.26, 1.23],
        "B" => &[-0.23, -1.40, 2.37, 0.31, 1.93],
        "C" => &[-0.73, -0.92, 0.39, 1.99, 0.30],
        "D" => &[-0.31, -1.16, 1.97, 0.16, 1.45, 0.40],
        "E" => &[-0.20, 1.14, 0.89, 2.09, -0.65, 0.60],
        _ => return None,
    };
    Some(q.to_vec())
}

/// Task-space speed limits of the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpeed {
    pub v_max: f64,
    pub a_max: f64,
}

impl Default for TaskSpeed {
    fn default() -> Self {
        Self { v_max: 0.05, a_max: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainRef {
    Builtin(String),
    Inline(ChainSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub position: f64,
    pub orientation: f64,
    pub velocity: f64,
    pub input: f64,
    pub secondary_gain: f64,
    pub priority: Vec<String>,
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self {
            position: 1e3,
            orientation: 1e2,
            velocity: 1.0,
            input: 1e-2,
            secondary_gain: 0.01,
            priority: AXIS_NAMES[..3].iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSpec {
    pub n: usize,
    pub high: usize,
    pub low: usize,
    pub dt: f64,
}

impl Default for HorizonSpec {
    fn default() -> Self {
        let h = HorizonConfig::default();
        Self { n: h.n, high: h.n_high, low: h.n_low, dt: h.dt }
    }
}

/// Serialized form of a [`Scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub chain: ChainRef,
    pub initial_q: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_qd: Option<Vec<f64>>,
    #[serde(default)]
    pub waypoints: Vec<[f64; 3]>,
    #[serde(default)]
    pub orientation_goal: [f64; 3],
    #[serde(default = "default_controller")]
    pub controller: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub hold: f64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub speed: TaskSpeed,
    #[serde(default)]
    pub weights: WeightSpec,
    #[serde(default)]
    pub horizons: HorizonSpec,
}

fn default_controller() -> String {
    ControllerKind::Hmpc.as_str().into()
}

/// A validated closed-loop task.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub chain: ChainModel,
    pub initial: JointState,
    /// Positions after the start pose.
    pub waypoints: Vec<Vector3<f64>>,
    /// Absolute goal orientation of the tool.
    pub orientation_goal: Matrix3<f64>,
    pub controller: ControllerKind,
    pub config: ControllerConfig,
    pub speed: TaskSpeed,
    pub hold: f64,
    pub seed: u64,
    pub noise: f64,
}

fn priority_from_names(names: &[String]) -> Result<[bool; 6]> {
    let mut p = [false; 6];
    for name in names {
        let i = AXIS_NAMES
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| Error::Config(format!("unknown priority axis {name:?}, expected one of {AXIS_NAMES:?}")))?;
        p[i] = true;
    }
    Ok(p)
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        let chain = match &self.chain {
            ChainRef::Builtin(name) => {
                lookup_chain(name).ok_or_else(|| Error::Config(format!("unknown builtin chain {name:?}")))?
            }
            ChainRef::Inline(spec) => spec.to_chain()?,
        };
        let n = chain.dof();
        if self.initial_q.len() != n {
            return Err(Error::Config(format!("initial_q has {} entries, chain has {n} joints", self.initial_q.len())));
        }
        let qd = match &self.initial_qd {
            Some(v) if v.len() != n => {
                return Err(Error::Config(format!("initial_qd has {} entries, chain has {n} joints", v.len())))
            }
            Some(v) => DVector::from_column_slice(v),
            None => DVector::zeros(n),
        };
        let controller = ControllerKind::parse(&self.controller)
            .ok_or_else(|| Error::Config(format!("unknown controller {:?}", self.controller)))?;
        let w = &self.weights;
        let weights = ControllerWeights::diagonal(
            n,
            w.position,
            w.orientation,
            w.velocity,
            w.input,
            priority_from_names(&w.priority)?,
        );
        let h = self.horizons;
        let config = ControllerConfig {
            weights,
            horizon: HorizonConfig { n: h.n, n_high: h.high, n_low: h.low, dt: h.dt },
            secondary_gain: w.secondary_gain,
            ..ControllerConfig::defaults(n)
        };
        let initial = JointState::new(DVector::from_column_slice(&self.initial_q), qd);
        let (_, r0) = chain::forward_kinematics(&chain, &initial.q)?;
        let goal = so3::exp(&Vector3::from(self.orientation_goal)) * r0;
        let sc = Scenario {
            name: self.name.clone(),
            chain,
            initial,
            waypoints: self.waypoints.iter().map(|w| Vector3::from(*w)).collect(),
            orientation_goal: goal,
            controller,
            config,
            speed: self.speed,
            hold: self.hold,
            seed: self.seed,
            noise: self.noise,
        };
        sc.validate()?;
        Ok(sc)
    }
}

/// Sets `key` (dotted path) to `value` parsed as a TOML value; bare words
/// that do not parse are taken as strings.
pub fn apply_override(doc: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(value.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part:?} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

/// Re-parses `file` with the overrides applied; unknown keys are rejected.
pub fn with_overrides(file: &ScenarioFile, overrides: &[(String, String)]) -> Result<ScenarioFile> {
    let mut doc = toml::Table::try_from(file).map_err(|e| Error::Config(e.to_string()))?;
    for (k, v) in overrides {
        apply_override(&mut doc, k, v)?;
    }
    toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.config.validate(self.chain.dof())?;
        let lim = self.chain.limits();
        for i in 0..self.chain.dof() {
            let q = self.initial.q[i];
            if !(q >= lim.q_lower[i] && q <= lim.q_upper[i]) {
                return Err(Error::Config(format!(
                    "initial q[{i}] = {q} outside [{}, {}]",
                    lim.q_lower[i], lim.q_upper[i]
                )));
            }
            if !(self.initial.qd[i].abs() <= lim.qd_max[i]) {
                return Err(Error::Config(format!("initial qd[{i}] = {} exceeds {}", self.initial.qd[i], lim.qd_max[i])));
            }
        }
        if self.waypoints.iter().any(|w| !w.iter().all(|v| v.is_finite())) {
            return Err(Error::Config("waypoints must be finite".into()));
        }
        if !so3::is_rotation(&self.orientation_goal, 1e-9) {
            return Err(Error::Config("orientation goal is not a rotation".into()));
        }
        if !(self.hold >= 0.0 && self.hold.is_finite()) {
            return Err(Error::Config(format!("hold must be >= 0, got {}", self.hold)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.config.horizon.dt
    }

    /// Reference from the start pose through the waypoints to the goal
    /// orientation. A path of zero length gives a single held sample.
    pub fn reference(&self) -> Result<ReferenceTrajectory> {
        let (p0, r0) = chain::forward_kinematics(&self.chain, &self.initial.q)?;
        let mut points = vec![p0];
        for w in &self.waypoints {
            if (w - points.last().unwrap()).norm() > 1e-12 {
                points.push(*w);
            }
        }
        if points.len() == 1 {
            if so3::log(&(r0.transpose() * self.orientation_goal)).norm() > 1e-9 {
                return Err(Error::Trajectory("a zero-length path cannot change orientation".into()));
            }
            let state = EndEffectorState {
                p: p0,
                o: so3::quat_from_rotation(&r0),
                pd: Vector3::zeros(),
                w: Vector3::zeros(),
            };
            return Ok(ReferenceTrajectory { dt: self.dt(), samples: vec![ReferenceSample { t: 0.0, state }] });
        }
        let waypoints: Vec<Waypoint> = points.into_iter().map(Waypoint::at).collect();
        let ptraj = fit_position_trajectory(&waypoints, self.speed.v_max, self.speed.a_max)?;
        let otraj = make_orientation_trajectory(&r0, &self.orientation_goal, ptraj.duration())?;
        build_reference(&ptraj, &otraj, self.dt())
    }

    /// Control cycles covering the reference plus the hold time.
    pub fn cycles(&self, reference: &ReferenceTrajectory) -> usize {
        ((reference.duration() + self.hold) / self.dt() - 1e-9).ceil().max(0.0) as usize
    }
}

fn builtin_file(name: &str, chain: &str, initial_q: Vec<f64>, waypoints: Vec<[f64; 3]>, goal: [f64; 3]) -> ScenarioFile {
    ScenarioFile {
        name: name.into(),
        chain: ChainRef::Builtin(chain.into()),
        initial_q,
        initial_qd: None,
        waypoints,
        orientation_goal: goal,
        controller: default_controller(),
        seed: 0,
        hold: 0.0,
        noise: 0.0,
        speed: TaskSpeed::default(),
        weights: WeightSpec::default(),
        horizons: HorizonSpec::default(),
    }
}

/// Helix around world z through the tool position at the spiral home pose,
/// goal orientation a quarter turn about z.
pub fn spiral_scenario(chain: &str) -> Result<ScenarioFile> {
    let model = builtin_morphology(chain).ok_or_else(|| Error::Config(format!("unknown builtin chain {chain:?}")))?;
    let home = spiral_home(&model.name).expect("every builtin chain has a spiral home");
    let (p0, _) = chain::forward_kinematics(&model, &DVector::from_column_slice(&home))?;
    let center = p0 + Vector3::new(SPIRAL_RADIUS, 0.0, 0.0);
    let sweep = 2.0 * PI * SPIRAL_TURNS;
    let waypoints = (1..=SPIRAL_WAYPOINTS)
        .map(|k| {
            let th = sweep * k as f64 / SPIRAL_WAYPOINTS as f64;
            let p = center
                + Vector3::new(-SPIRAL_RADIUS * th.cos(), -SPIRAL_RADIUS * th.sin(), SPIRAL_PITCH * th / (2.0 * PI));
            [p.x, p.y, p.z]
        })
        .collect();
    Ok(builtin_file(&format!("spiral_{}", model.name), &model.name, home, waypoints, [0.0, 0.0, PI / 2.0]))
}

/// Chain straight at `q = 0`, asked to reach further along its tool direction.
pub fn extension_scenario(chain: &str) -> Result<ScenarioFile> {
    let model = builtin_morphology(chain).ok_or_else(|| Error::Config(format!("unknown builtin chain {chain:?}")))?;
    let q0 = DVector::zeros(model.dof());
    let (p0, r0) = chain::forward_kinematics(&model, &q0)?;
    let p = p0 + r0 * Vector3::z() * EXTENSION_REACH;
    let mut file = builtin_file(&format!("extension_{}", model.name), &model.name, vec![0.0; model.dof()], vec![[p.x, p.y, p.z]], [0.0; 3]);
    file.hold = 1.0;
    Ok(file)
}

/// `spiral_X` or `extension_X` for a builtin chain `X`.
pub fn builtin_scenario(name: &str) -> Option<ScenarioFile> {
    let (kind, chain) = name.rsplit_once('_')?;
    match kind {
        "spiral" => spiral_scenario(chain).ok(),
        "extension" | "singular" => extension_scenario(chain).ok(),
        _ => None,
    }
}

/// All builtin stock scenarios, spirals first.
pub fn stock_scenarios() -> Vec<ScenarioFile> {
    let chains = ["A", "B", "C", "D", "E"];
    let mut out: Vec<ScenarioFile> = chains.iter().map(|c| spiral_scenario(c).unwrap()).collect();
    out.extend(chains.iter().map(|c| extension_scenario(c).unwrap()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_files_round_trip() {
        for file in stock_scenarios() {
            let text = file.to_toml();
            let back = ScenarioFile::parse(&text).unwrap();
            assert_eq!(back, file, "{}", file.name);
            back.to_scenario().unwrap();
        }
    }

    #[test]
    fn spiral_starts_at_home_and_climbs() {
        let sc = spiral_scenario("E").unwrap().to_scenario().unwrap();
        let reference = sc.reference().unwrap();
        let (p0, _) = chain::forward_kinematics(&sc.chain, &sc.initial.q).unwrap();
        assert!((reference.samples[0].state.p - p0).norm() < 1e-12);
        let last = reference.samples.last().unwrap().state.p;
        let rise = SPIRAL_PITCH * SPIRAL_TURNS;
        assert!((last - p0 - Vector3::new(0.0, 0.0, rise)).norm() < 1e-9);
        assert_eq!(sc.waypoints.len(), SPIRAL_WAYPOINTS);
    }

    #[test]
    fn overrides_apply_and_reject_unknown_keys() {
        let file = spiral_scenario("A").unwrap();
        let o = |k: &str, v: &str| (k.to_string(), v.to_string());
        let changed = with_overrides(&file, &[o("horizons.dt", "0.02"), o("controller", "hqp"), o("seed", "9")]).unwrap();
        assert_eq!(changed.horizons.dt, 0.02);
        assert_eq!(changed.controller, "hqp");
        assert_eq!(changed.seed, 9);
        assert!(with_overrides(&file, &[o("horizons.bogus", "1")]).is_err());
        assert!(with_overrides(&file, &[o("seed", "\"x\"")]).is_err());
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut file = spiral_scenario("A").unwrap();
        file.initial_q[1] = 3.0;
        assert!(matches!(file.to_scenario(), Err(Error::Config(_))));
        let mut file = spiral_scenario("A").unwrap();
        file.weights.priority = vec!["pw".into()];
        assert!(file.to_scenario().is_err());
        let mut file = spiral_scenario("A").unwrap();
        file.chain = ChainRef::Builtin("Z".into());
        assert!(file.to_scenario().is_err());
    }

    #[test]
    fn zero_length_task_has_static_reference() {
        let mut file = spiral_scenario("B").unwrap();
        file.waypoints.clear();
        file.orientation_goal = [0.0; 3];
        file.hold = 0.5;
        let sc = file.to_scenario().unwrap();
        let reference = sc.reference().unwrap();
        assert_eq!(reference.samples.len(), 1);
        assert_eq!(sc.cycles(&reference), 50);
    }
}
