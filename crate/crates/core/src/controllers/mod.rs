//! Receding-horizon controllers: weighted MPC, single-step HQP and the
//! two-level hierarchical MPC.
//!
//! Inputs are `u = [qd_cmd; qdd_cmd]` per step. All controllers share one
//! condensed QP builder ([`condense`]); they differ in the error weight and
//! in where the kinematic maps are linearized.

mod condensed;
mod hierarchical;

use std::fmt;
use std::time::Duration;

use nalgebra::{DMatrix, DVector, SMatrix};

use crate::chain::{ChainModel, EndEffectorState, JointState, LimitVectors};
use crate::error::check_len;
use crate::{Error, Result};
use hmpc_qp::{ActiveSetSolver, QpSettings};

pub use condensed::{build_mpc_qp, condense, frozen_models, CondensedMpc, StepModel};
pub use hierarchical::{high_level_step, hmpc_step, low_level_step, HmpcOutput};

pub type Matrix12 = SMatrix<f64, 12, 12>;

/// Penalty used when the low-level coupling has to be relaxed.
pub const COUPLING_PENALTY: f64 = 1e6;
/// Iteration cap of the controller QPs.
pub const CONTROLLER_MAX_ITER: usize = 2000;

/// Error weight `Q` (rows: position, orientation, linear velocity, angular
/// velocity), input weight `R` and priority selector `P` over
/// (position x/y/z, orientation x/y/z).
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerWeights {
    pub q: Matrix12,
    pub r: DMatrix<f64>,
    pub priority: [bool; 6],
}

/// Position tracking first, orientation second.
pub const POSITION_PRIORITY: [bool; 6] = [true, true, true, false, false, false];

impl ControllerWeights {
    /// Position 1e3, orientation 1e2, velocities 1, `R = 1e-2 I`, position priority.
    pub fn defaults(dof: usize) -> Self {
        Self::diagonal(dof, 1e3, 1e2, 1.0, 1e-2, POSITION_PRIORITY)
    }

    pub fn diagonal(dof: usize, position: f64, orientation: f64, velocity: f64, input: f64, priority: [bool; 6]) -> Self {
        let mut d = [0.0; 12];
        for i in 0..3 {
            d[i] = position;
            d[3 + i] = orientation;
            d[6 + i] = velocity;
            d[9 + i] = velocity;
        }
        Self {
            q: Matrix12::from_diagonal(&SMatrix::<f64, 12, 1>::from_row_slice(&d)),
            r: DMatrix::identity(2 * dof, 2 * dof) * input,
            priority,
        }
    }

    pub fn dof(&self) -> usize {
        self.r.nrows() / 2
    }

    /// Checks `Q` PSD, `R` PD, and that both priority groups are smaller than the DoF.
    pub fn validate(&self, dof: usize) -> Result<()> {
        check_len("input weight", 2 * dof, self.r.nrows())?;
        check_len("input weight columns", 2 * dof, self.r.ncols())?;
        let sym = |m: &DMatrix<f64>| (m - m.transpose()).amax() <= 1e-10;
        let q = DMatrix::from_column_slice(12, 12, self.q.as_slice());
        if !sym(&q) || q.symmetric_eigenvalues().min() < -1e-12 {
            return Err(Error::Controller("Q must be symmetric positive semi-definite".into()));
        }
        if !sym(&self.r) || self.r.clone().cholesky().is_none() {
            return Err(Error::Controller("R must be symmetric positive definite".into()));
        }
        let high = self.priority.iter().filter(|&&p| p).count();
        if high >= dof || 6 - high >= dof {
            return Err(Error::Controller(format!(
                "priority split {high}/{} needs both groups smaller than the {dof} DoF",
                6 - high
            )));
        }
        Ok(())
    }
}

/// `P` lifted to the 12 error rows: pose rows and their velocity rows.
pub fn priority_mask(priority: &[bool; 6]) -> [bool; 12] {
    let mut m = [false; 12];
    for i in 0..6 {
        m[i] = priority[i];
        m[6 + i] = priority[i];
    }
    m
}

/// `S Q S` with `S = diag(1 on selected rows, sqrt(gain) elsewhere)`.
pub fn scale_secondary(q: &Matrix12, priority: &[bool; 6], gain: f64) -> Matrix12 {
    let mask = priority_mask(priority);
    let s = SMatrix::<f64, 12, 1>::from_fn(|i, _| if mask[i] { 1.0 } else { gain.sqrt() });
    Matrix12::from_fn(|i, j| q[(i, j)] * s[i] * s[j])
}

/// Error weight of the high level: non-priority rows and columns zeroed.
pub fn high_level_weight(q: &Matrix12, priority: &[bool; 6]) -> Matrix12 {
    scale_secondary(q, priority, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonConfig {
    /// Steps of the weighted MPC baseline.
    pub n: usize,
    pub n_high: usize,
    pub n_low: usize,
    pub dt: f64,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self { n: 10, n_high: 10, n_low: 10, dt: 0.01 }
    }
}

impl HorizonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_high == 0 || self.n_low == 0 {
            return Err(Error::Controller("horizons must be at least 1".into()));
        }
        if self.n_low > self.n_high {
            return Err(Error::Controller(format!(
                "low-level horizon {} exceeds high-level horizon {}",
                self.n_low, self.n_high
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Controller(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Joint trajectory predicted by the high level.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPrediction {
    /// `N + 1` positions, starting at the current state.
    pub q_seq: Vec<DVector<f64>>,
    pub qd_seq: Vec<DVector<f64>>,
    /// `N` inputs `[qd_cmd; qdd_cmd]`.
    pub u_seq: Vec<DVector<f64>>,
}

impl JointPrediction {
    pub fn steps(&self) -> usize {
        self.u_seq.len()
    }
}

/// Plant recursion `qd' = qd_cmd + qdd dt`, `q' = q + qd_cmd dt + 1/2 qdd dt^2`.
pub fn integrate_joints(q: &DVector<f64>, qd: &DVector<f64>, u: &DVector<f64>, dt: f64) -> (DVector<f64>, DVector<f64>) {
    let n = q.len();
    debug_assert_eq!(qd.len(), n);
    let (v, a) = (u.rows(0, n), u.rows(n, n));
    let q_next = q + v * dt + a * (0.5 * dt * dt);
    let qd_next = v + a * dt;
    (q_next, qd_next)
}

/// Rolls `inputs` out from `(q0, qd0)`.
pub fn rollout(q0: &DVector<f64>, qd0: &DVector<f64>, inputs: Vec<DVector<f64>>, dt: f64) -> JointPrediction {
    let mut q_seq = vec![q0.clone()];
    let mut qd_seq = vec![qd0.clone()];
    for u in &inputs {
        let (q, qd) = integrate_joints(q_seq.last().unwrap(), qd_seq.last().unwrap(), u, dt);
        q_seq.push(q);
        qd_seq.push(qd);
    }
    JointPrediction { q_seq, qd_seq, u_seq: inputs }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControlStatus {
    Optimal,
    /// Low-level coupling was replaced by its penalty.
    Relaxed,
    /// High level failed; the low level tracked a zero-motion prediction.
    HighLevelFallback,
    /// No usable solution; the caller should reuse its previous input.
    Failed,
}

impl ControlStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Relaxed => "relaxed",
            Self::HighLevelFallback => "high_fallback",
            Self::Failed => "failed",
        }
    }

    pub fn is_usable(&self) -> bool {
        !matches!(self, Self::Failed)
    }
}

impl fmt::Display for ControlStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Wall-clock split of one controller step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepTiming {
    pub high_level: Duration,
    pub rollout: Duration,
    pub low_level: Duration,
}

impl StepTiming {
    pub fn total(&self) -> Duration {
        self.high_level + self.rollout + self.low_level
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    /// First input `[qd_cmd; qdd_cmd]`.
    pub u: DVector<f64>,
    /// Full optimal input sequence (empty on failure).
    pub sequence: Vec<DVector<f64>>,
    pub predicted_cost: f64,
    pub status: ControlStatus,
    pub solve_time: Duration,
    pub timing: StepTiming,
}

impl ControlOutput {
    pub(crate) fn failed(dof: usize, solve_time: Duration) -> Self {
        Self {
            u: DVector::zeros(2 * dof),
            sequence: Vec::new(),
            predicted_cost: f64::NAN,
            status: ControlStatus::Failed,
            solve_time,
            timing: StepTiming { high_level: solve_time, ..Default::default() },
        }
    }
}

/// Clamps `u` into the velocity and acceleration boxes.
pub(crate) fn clamp_input(u: &mut DVector<f64>, lim: &LimitVectors) {
    let n = lim.len();
    for i in 0..n {
        u[i] = u[i].clamp(-lim.qd_max[i], lim.qd_max[i]);
        u[n + i] = u[n + i].clamp(-lim.qdd_max[i], lim.qdd_max[i]);
    }
}

/// Splits a stacked solution into per-step inputs.
pub(crate) fn split_steps(x: &DVector<f64>, width: usize) -> Vec<DVector<f64>> {
    (0..x.len() / width).map(|k| x.rows(k * width, width).into_owned()).collect()
}

/// Previous solution shifted one step, last input repeated.
pub(crate) fn shifted_warm_start(prev: &[DVector<f64>], steps: usize) -> Option<DVector<f64>> {
    if prev.is_empty() {
        return None;
    }
    let width = prev[0].len();
    let mut x = DVector::zeros(width * steps);
    for k in 0..steps {
        let src = &prev[(k + 1).min(prev.len() - 1)];
        x.rows_mut(k * width, width).copy_from(src);
    }
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    Hmpc,
    WeightedMpc,
    Hqp,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [Self::Hmpc, Self::WeightedMpc, Self::Hqp];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Hmpc => "hmpc",
            Self::WeightedMpc => "mpc",
            Self::Hqp => "hqp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hmpc" => Some(Self::Hmpc),
            "mpc" | "weighted_mpc" => Some(Self::WeightedMpc),
            "hqp" => Some(Self::Hqp),
            _ => None,
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything a controller needs besides the current state.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub weights: ControllerWeights,
    pub horizon: HorizonConfig,
    /// Weight ratio of secondary to priority rows in the weighted baseline.
    pub secondary_gain: f64,
    pub qp: QpSettings,
}

impl ControllerConfig {
    pub fn defaults(dof: usize) -> Self {
        Self {
            weights: ControllerWeights::defaults(dof),
            horizon: HorizonConfig::default(),
            secondary_gain: 0.01,
            qp: QpSettings { max_iter: CONTROLLER_MAX_ITER, ..Default::default() },
        }
    }

    pub fn validate(&self, dof: usize) -> Result<()> {
        self.weights.validate(dof)?;
        self.horizon.validate()?;
        if !(self.secondary_gain >= 0.0 && self.secondary_gain.is_finite()) {
            return Err(Error::Controller(format!("secondary gain must be >= 0, got {}", self.secondary_gain)));
        }
        Ok(())
    }

    pub fn weighted_q(&self) -> Matrix12 {
        scale_secondary(&self.weights.q, &self.weights.priority, self.secondary_gain)
    }
}

/// A stateful controller: owns its QP workspaces and warm-start memory.
pub trait Controller: Send {
    fn kind(&self) -> ControllerKind;

    /// Reference states needed per step, starting at the current time.
    fn window(&self) -> usize;

    /// One control step from `state`; `reference[k]` is the reference `k` steps ahead.
    fn step(&mut self, chain: &ChainModel, state: &JointState, reference: &[EndEffectorState]) -> Result<ControlOutput>;
}

/// Weighted MPC over `steps` steps; with one step this is the HQP baseline.
pub struct WeightedMpc {
    config: ControllerConfig,
    steps: usize,
    kind: ControllerKind,
    solver: ActiveSetSolver,
    previous: Vec<DVector<f64>>,
}

impl WeightedMpc {
    pub fn new(config: ControllerConfig) -> Self {
        let steps = config.horizon.n;
        Self::with_steps(config, steps, ControllerKind::WeightedMpc)
    }

    pub fn hqp(config: ControllerConfig) -> Self {
        Self::with_steps(config, 1, ControllerKind::Hqp)
    }

    fn with_steps(config: ControllerConfig, steps: usize, kind: ControllerKind) -> Self {
        let solver = ActiveSetSolver::new(config.qp);
        Self { config, steps, kind, solver, previous: Vec::new() }
    }
}

impl Controller for WeightedMpc {
    fn kind(&self) -> ControllerKind {
        self.kind
    }

    fn window(&self) -> usize {
        self.steps + 1
    }

    fn step(&mut self, chain: &ChainModel, state: &JointState, reference: &[EndEffectorState]) -> Result<ControlOutput> {
        let q = self.config.weighted_q();
        let warm = shifted_warm_start(&self.previous, self.steps);
        let out = condensed::solve_frozen(
            &mut self.solver,
            chain,
            state,
            reference,
            &q,
            &self.config.weights.r,
            self.steps,
            self.config.horizon.dt,
            warm.as_ref(),
        )?;
        self.previous = out.sequence.clone();
        Ok(out)
    }
}

/// Two-level hierarchical MPC.
pub struct Hmpc {
    config: ControllerConfig,
    high: ActiveSetSolver,
    low: ActiveSetSolver,
    previous_high: Vec<DVector<f64>>,
    previous_low: Vec<DVector<f64>>,
}

impl Hmpc {
    pub fn new(config: ControllerConfig) -> Self {
        let high = ActiveSetSolver::new(config.qp);
        let low = ActiveSetSolver::new(config.qp);
        Self { config, high, low, previous_high: Vec::new(), previous_low: Vec::new() }
    }
}

impl Controller for Hmpc {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Hmpc
    }

    fn window(&self) -> usize {
        self.config.horizon.n_high + 1
    }

    fn step(&mut self, chain: &ChainModel, state: &JointState, reference: &[EndEffectorState]) -> Result<ControlOutput> {
        let h = self.config.horizon;
        let warm_high = shifted_warm_start(&self.previous_high, h.n_high);
        let warm_low = shifted_warm_start(&self.previous_low, h.n_low);
        let out = hierarchical::hmpc_with(
            &mut self.high,
            &mut self.low,
            chain,
            state,
            reference,
            &self.config,
            warm_high.as_ref(),
            warm_low.as_ref(),
        )?;
        self.previous_high = out.prediction.u_seq.clone();
        self.previous_low = out.control.sequence.clone();
        Ok(out.control)
    }
}

pub fn make_controller(kind: ControllerKind, config: ControllerConfig) -> Box<dyn Controller> {
    match kind {
        ControllerKind::Hmpc => Box::new(Hmpc::new(config)),
        ControllerKind::WeightedMpc => Box::new(WeightedMpc::new(config)),
        ControllerKind::Hqp => Box::new(WeightedMpc::hqp(config)),
    }
}

/// Weighted MPC step with a fresh solver (`config.horizon.n` steps).
pub fn weighted_mpc_step(
    chain: &ChainModel,
    state: &JointState,
    reference: &[EndEffectorState],
    config: &ControllerConfig,
) -> Result<ControlOutput> {
    WeightedMpc::new(config.clone()).step(chain, state, reference)
}

/// Single-step weighted MPC.
pub fn hqp_step(
    chain: &ChainModel,
    state: &JointState,
    reference: &[EndEffectorState],
    config: &ControllerConfig,
) -> Result<ControlOutput> {
    WeightedMpc::hqp(config.clone()).step(chain, state, reference)
}

#[cfg(test)]
mod tests;
