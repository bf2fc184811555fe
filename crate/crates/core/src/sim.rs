//! Closed-loop execution against a kinematic double-integrator plant, and
//! tracking statistics.

use std::fmt;
use std::time::Duration;

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{self, ChainModel, EndEffectorState, JointState, LimitVectors};
pub use crate::controllers::integrate_joints;
use crate::controllers::{make_controller, ControlStatus, Controller, ControllerKind};
use crate::scenario::{Scenario, AXIS_NAMES};
use crate::so3;
use crate::trajectory::ReferenceTrajectory;
use crate::Result;

/// Consecutive failed cycles during which the previous input is re-applied.
pub const HOLD_CYCLES: usize = 10;

/// Outcome of one control cycle as applied to the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CycleStatus {
    Optimal,
    Relaxed,
    HighLevelFallback,
    /// Controller failed; previous input re-applied.
    Hold,
    /// Controller failed beyond the hold budget; zero input applied.
    Zero,
}

impl CycleStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Relaxed => "relaxed",
            Self::HighLevelFallback => "high_fallback",
            Self::Hold => "hold",
            Self::Zero => "zero",
        }
    }

    pub fn is_soft_failure(&self) -> bool {
        matches!(self, Self::Hold | Self::Zero)
    }
}

impl fmt::Display for CycleStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub t: f64,
    /// Joint state at the start of the cycle.
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub u: DVector<f64>,
    pub x: EndEffectorState,
    pub x_ref: EndEffectorState,
    pub e_p: Vector3<f64>,
    pub e_o: Vector3<f64>,
    pub status: CycleStatus,
    pub solve_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionLog {
    pub scenario: String,
    pub chain: String,
    pub controller: ControllerKind,
    pub dof: usize,
    pub dt: f64,
    pub records: Vec<CycleRecord>,
}

impl ExecutionLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn soft_failures(&self) -> usize {
        self.records.iter().filter(|r| r.status.is_soft_failure()).count()
    }
}

/// Componentwise `|p - p_ref|` and `|log(R R_ref')|`.
pub fn pose_errors(x: &EndEffectorState, x_ref: &EndEffectorState) -> (Vector3<f64>, Vector3<f64>) {
    let e_p = (x.p - x_ref.p).abs();
    let e_o = so3::log(&(x.rotation() * x_ref.rotation().transpose())).abs();
    (e_p, e_o)
}

/// True if `u` keeps the next joint state inside the boxes.
fn is_safe(state: &JointState, u: &DVector<f64>, lim: &LimitVectors, dt: f64) -> bool {
    let n = state.q.len();
    let (q, qd) = integrate_joints(&state.q, &state.qd, u, dt);
    (0..n).all(|i| {
        let lo = lim.q_lower[i].min(state.q[i]);
        let hi = lim.q_upper[i].max(state.q[i]);
        q[i] >= lo
            && q[i] <= hi
            && qd[i].abs() <= lim.qd_max[i]
            && u[i].abs() <= lim.qd_max[i]
            && u[n + i].abs() <= lim.qdd_max[i]
    })
}

/// Closed-loop options besides the controller itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopOptions {
    pub cycles: usize,
    pub seed: u64,
    /// Uniform joint-measurement noise amplitude; zero disables it.
    pub noise: f64,
}

/// Runs `cycles` control cycles; never aborts on controller failure.
///
/// A failed cycle re-applies the previous input (if it is still safe) for
/// up to [`HOLD_CYCLES`] consecutive cycles, then applies zero input.
pub fn run_with_controller(
    chain: &ChainModel,
    initial: &JointState,
    reference: &ReferenceTrajectory,
    controller: &mut dyn Controller,
    options: LoopOptions,
) -> Result<Vec<CycleRecord>> {
    let n = chain.dof();
    let dt = reference.dt;
    let lim = chain.limits();
    let window = controller.window();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut state = initial.clone();
    let mut previous = DVector::zeros(2 * n);
    let mut failures = 0;
    let mut records = Vec::with_capacity(options.cycles);
    for k in 0..options.cycles {
        let x = chain::end_effector_state(chain, &state)?;
        let refs = reference.window(k, window);
        let measured = if options.noise > 0.0 {
            let noisy = DVector::from_fn(n, |i, _| state.q[i] + rng.random_range(-options.noise..=options.noise));
            JointState::new(noisy, state.qd.clone())
        } else {
            state.clone()
        };
        let (out, solve_time) = match controller.step(chain, &measured, &refs) {
            Ok(out) => {
                let t = out.solve_time;
                (Some(out), t)
            }
            Err(_) => (None, Duration::ZERO),
        };
        let usable = out.filter(|o| o.status.is_usable() && o.u.iter().all(|v| v.is_finite()));
        let (u, status) = match usable {
            Some(o) => {
                failures = 0;
                let status = match o.status {
                    ControlStatus::Relaxed => CycleStatus::Relaxed,
                    ControlStatus::HighLevelFallback => CycleStatus::HighLevelFallback,
                    _ => CycleStatus::Optimal,
                };
                (o.u, status)
            }
            None => {
                failures += 1;
                if failures <= HOLD_CYCLES && is_safe(&state, &previous, &lim, dt) {
                    (previous.clone(), CycleStatus::Hold)
                } else {
                    (DVector::zeros(2 * n), CycleStatus::Zero)
                }
            }
        };
        let x_ref = refs[0];
        let (e_p, e_o) = pose_errors(&x, &x_ref);
        let (q_next, qd_next) = integrate_joints(&state.q, &state.qd, &u, dt);
        records.push(CycleRecord {
            t: k as f64 * dt,
            q: state.q.clone(),
            qd: state.qd.clone(),
            u: u.clone(),
            x,
            x_ref,
            e_p,
            e_o,
            status,
            solve_time,
        });
        previous = u;
        state = JointState::new(q_next, qd_next);
    }
    Ok(records)
}

/// Plans the reference and runs the scenario's controller on it.
pub fn run_closed_loop(sc: &Scenario) -> Result<ExecutionLog> {
    sc.validate()?;
    let reference = sc.reference()?;
    run_on_reference(sc, &reference, sc.controller)
}

/// Runs `kind` on a precomputed reference, so several controllers can share one.
pub fn run_on_reference(sc: &Scenario, reference: &ReferenceTrajectory, kind: ControllerKind) -> Result<ExecutionLog> {
    let mut controller = make_controller(kind, sc.config.clone());
    let options = LoopOptions { cycles: sc.cycles(reference), seed: sc.seed, noise: sc.noise };
    let records = run_with_controller(&sc.chain, &sc.initial, reference, controller.as_mut(), options)?;
    Ok(ExecutionLog {
        scenario: sc.name.clone(),
        chain: sc.chain.name.clone(),
        controller: kind,
        dof: sc.chain.dof(),
        dt: reference.dt,
        records,
    })
}

/// Per-axis error series, in the order of [`AXIS_NAMES`].
pub fn tracking_errors(log: &ExecutionLog) -> [Vec<f64>; 6] {
    std::array::from_fn(|axis| {
        log.records.iter().map(|r| if axis < 3 { r.e_p[axis] } else { r.e_o[axis - 3] }).collect()
    })
}

/// Box-plot statistics of one error series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    /// Most extreme samples within 1.5 IQR of the box.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: usize,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `None` for an empty series or one containing NaN.
pub fn summarize(series: &[f64]) -> Option<ErrorSummary> {
    if series.is_empty() || series.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut s = series.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || s.iter().copied().filter(|&v| v >= lo_fence && v <= hi_fence);
    Some(ErrorSummary {
        count: s.len(),
        median,
        q1,
        q3,
        iqr,
        whisker_low: inside().fold(f64::INFINITY, f64::min),
        whisker_high: inside().fold(f64::NEG_INFINITY, f64::max),
        outliers: s.iter().filter(|&&v| v < lo_fence || v > hi_fence).count(),
        max: s[s.len() - 1],
    })
}

/// Summaries of all six axes, keyed by axis name.
pub fn summarize_log(log: &ExecutionLog) -> Vec<(&'static str, ErrorSummary)> {
    tracking_errors(log)
        .iter()
        .zip(AXIS_NAMES)
        .filter_map(|(series, name)| summarize(series).map(|s| (name, s)))
        .collect()
}

/// Largest excess of any logged joint position, velocity or commanded
/// acceleration over its box; zero when all limits hold.
pub fn max_limit_excess(log: &ExecutionLog, lim: &LimitVectors) -> f64 {
    let n = log.dof;
    let mut worst = 0.0_f64;
    for r in &log.records {
        for i in 0..n {
            worst = worst
                .max(r.q[i] - lim.q_upper[i])
                .max(lim.q_lower[i] - r.q[i])
                .max(r.qd[i].abs() - lim.qd_max[i])
                .max(r.u[i].abs() - lim.qd_max[i])
                .max(r.u[n + i].abs() - lim.qdd_max[i]);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::spiral_scenario;
    use nalgebra::Matrix3;

    #[test]
    fn integration_closed_form() {
        let q0 = DVector::from_vec(vec![0.1, -0.2]);
        let (v, a) = (0.3, -0.05);
        let u = DVector::from_vec(vec![v, v, a, a]);
        let dt = 0.01;
        let (mut q, mut qd) = (q0.clone(), DVector::zeros(2));
        for _ in 0..100 {
            // constant commanded input: the velocity command is re-applied as-is
            (q, qd) = integrate_joints(&q, &qd, &u, dt);
        }
        let expected = &q0 + DVector::from_element(2, 100.0 * (v * dt + 0.5 * a * dt * dt));
        assert!((&q - expected).amax() < 1e-12);
        assert!((qd.add_scalar(-(v + a * dt))).amax() < 1e-15);
        let rest = integrate_joints(&q0, &DVector::zeros(2), &DVector::zeros(4), dt);
        assert_eq!(rest.0, q0);
    }

    #[test]
    fn summary_quantiles() {
        let s = summarize(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.median, s.q1, s.q3, s.iqr), (3.0, 2.0, 4.0, 2.0));
        assert_eq!(s.outliers, 0);
        let c = summarize(&[0.7; 9]).unwrap();
        assert_eq!((c.median, c.iqr, c.outliers), (0.7, 0.0, 0));
        let mut spike = vec![1.0, 1.1, 0.9, 1.05, 0.95, 1.0];
        spike.push(100.0);
        let s = summarize(&spike).unwrap();
        assert_eq!(s.outliers, 1);
        assert!(s.whisker_high <= 1.1 && s.max == 100.0);
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn orientation_error_of_z_rotation() {
        let mut x = EndEffectorState {
            p: Vector3::new(0.1, 0.2, 0.3),
            o: nalgebra::Vector4::new(1.0, 0.0, 0.0, 0.0),
            pd: Vector3::zeros(),
            w: Vector3::zeros(),
        };
        let x_ref = x;
        let (ep, eo) = pose_errors(&x, &x_ref);
        assert_eq!((ep, eo), (Vector3::zeros(), Vector3::zeros()));
        x.o = so3::quat_from_rotation(&(so3::axis_angle(&Vector3::z(), 0.1) * Matrix3::identity()));
        let (_, eo) = pose_errors(&x, &x_ref);
        assert!((eo - Vector3::new(0.0, 0.0, 0.1)).amax() < 1e-12);
    }

    #[test]
    fn regulation_at_fixed_point() {
        let mut file = spiral_scenario("C").unwrap();
        file.waypoints.clear();
        file.orientation_goal = [0.0; 3];
        file.hold = 0.3;
        for kind in ["hmpc", "mpc", "hqp"] {
            file.controller = kind.into();
            let log = run_closed_loop(&file.to_scenario().unwrap()).unwrap();
            assert_eq!(log.len(), 30);
            let worst = log.records.iter().map(|r| r.e_p.amax()).fold(0.0, f64::max);
            assert!(worst <= 1e-6, "{kind}: {worst}");
            for (k, r) in log.records.iter().enumerate() {
                assert_eq!(r.t, k as f64 * 0.01);
            }
        }
    }
}
