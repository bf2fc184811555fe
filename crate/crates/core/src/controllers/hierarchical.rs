use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::condensed::{condense, frozen_models, output_from, StepModel};
use super::{
    high_level_weight, priority_mask, rollout, ControlOutput, ControlStatus, ControllerConfig, JointPrediction,
    COUPLING_PENALTY,
};
use crate::chain::{self, ChainModel, EndEffectorState, JointState, KinematicMaps, LimitVectors};
use crate::so3;
use crate::{Error, Result};
use hmpc_qp::{ActiveSetSolver, QpStatus};

/// Composite result of one hierarchical step.
#[derive(Debug, Clone, PartialEq)]
pub struct HmpcOutput {
    /// Low-level result; this is what gets applied.
    pub control: ControlOutput,
    pub high: ControlOutput,
    pub prediction: JointPrediction,
}

/// Priority-only MPC at the frozen linearization, plus its joint rollout.
///
/// On QP failure the prediction is the zero-input rollout.
pub fn high_level_step(
    maps: &KinematicMaps,
    x0: &EndEffectorState,
    state: &JointState,
    reference: &[EndEffectorState],
    config: &ControllerConfig,
    lim: &LimitVectors,
) -> Result<(ControlOutput, JointPrediction)> {
    let out = high_level_with(&mut ActiveSetSolver::new(config.qp), maps, x0, state, reference, config, lim, None)?;
    let pred = predict(&out, state, config);
    Ok((out, pred))
}

/// Rollout of the high-level inputs, or of zero input if they are unusable.
fn predict(out: &ControlOutput, state: &JointState, config: &ControllerConfig) -> JointPrediction {
    let h = config.horizon;
    let inputs = if out.status.is_usable() {
        out.sequence.clone()
    } else {
        vec![DVector::zeros(2 * state.q.len()); h.n_high]
    };
    rollout(&state.q, &state.qd, inputs, h.dt)
}

#[allow(clippy::too_many_arguments)]
fn high_level_with(
    solver: &mut ActiveSetSolver,
    maps: &KinematicMaps,
    x0: &EndEffectorState,
    state: &JointState,
    reference: &[EndEffectorState],
    config: &ControllerConfig,
    lim: &LimitVectors,
    warm: Option<&DVector<f64>>,
) -> Result<ControlOutput> {
    let started = Instant::now();
    let h = config.horizon;
    let q1 = high_level_weight(&config.weights.q, &config.weights.priority);
    let models = frozen_models(maps, x0, h.n_high, h.dt);
    let cqp = condense(x0, &state.q, reference, &models, &q1, &config.weights.r, lim, h.dt)?;
    let sol = solver.solve(&cqp.problem, warm)?;
    Ok(output_from(&sol, &cqp, lim, started))
}

/// Orthonormal rows spanning the row space of `m`.
fn row_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V'");
    let cutoff = 1e-8 * svd.singular_values.max().max(1.0);
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > cutoff).collect();
    DMatrix::from_fn(keep.len(), m.ncols(), |r, c| v_t[(keep[r], c)])
}

/// Re-linearized MPC along `pred` with the full error weight.
///
/// Step `i` uses `B_kin` at `(q_i, qd_i)` of the prediction. The priority
/// rows of `B_kin_i u2_i` are pinned to `B_kin_i u1_i`; if that is
/// infeasible the pinning becomes a penalty of weight [`COUPLING_PENALTY`].
pub fn low_level_step(
    chain: &ChainModel,
    x0: &EndEffectorState,
    state: &JointState,
    reference: &[EndEffectorState],
    config: &ControllerConfig,
    lim: &LimitVectors,
    pred: &JointPrediction,
) -> Result<ControlOutput> {
    low_level_with(&mut ActiveSetSolver::new(config.qp), chain, x0, state, reference, config, lim, pred, None)
}

#[allow(clippy::too_many_arguments)]
fn low_level_with(
    solver: &mut ActiveSetSolver,
    chain: &ChainModel,
    x0: &EndEffectorState,
    state: &JointState,
    reference: &[EndEffectorState],
    config: &ControllerConfig,
    lim: &LimitVectors,
    pred: &JointPrediction,
    warm: Option<&DVector<f64>>,
) -> Result<ControlOutput> {
    let started = Instant::now();
    let h = config.horizon;
    let n = state.q.len();
    let width = 2 * n;
    if pred.steps() < h.n_low {
        return Err(Error::Controller(format!(
            "prediction covers {} steps, low level needs {}",
            pred.steps(),
            h.n_low
        )));
    }
    let mut models = Vec::with_capacity(h.n_low);
    for i in 0..h.n_low {
        let s = JointState::new(pred.q_seq[i].clone(), pred.qd_seq[i].clone());
        let b_kin = chain::build_b_kin(chain, &s)?;
        let (_, r) = chain::forward_kinematics(chain, &s.q)?;
        models.push(StepModel { b_kin, o_lin: so3::quat_from_rotation(&r) });
    }
    let mut cqp = condense(x0, &state.q, reference, &models, &config.weights.q, &config.weights.r, lim, h.dt)?;

    let mask = priority_mask(&config.weights.priority);
    let selected: Vec<usize> = (0..12).filter(|&r| mask[r]).collect();
    let nv = width * h.n_low;
    let mut rows: Vec<(usize, DVector<f64>, f64)> = Vec::new();
    let mut bases = Vec::with_capacity(h.n_low);
    for (i, m) in models.iter().enumerate() {
        let sel = DMatrix::from_fn(selected.len(), width, |r, c| m.b_kin[(selected[r], c)]);
        let basis = if selected.is_empty() { DMatrix::zeros(0, width) } else { row_basis(&sel) };
        for r in 0..basis.nrows() {
            let row = basis.row(r).transpose();
            rows.push((i, row.clone(), row.dot(&pred.u_seq[i])));
        }
        bases.push(basis);
    }

    let base = cqp.problem.clone();
    let m0 = base.num_constraints();
    let mut a = DMatrix::zeros(m0 + rows.len(), nv);
    a.view_mut((0, 0), (m0, nv)).copy_from(&base.constraints);
    let mut lo = DVector::zeros(m0 + rows.len());
    let mut up = DVector::zeros(m0 + rows.len());
    lo.rows_mut(0, m0).copy_from(&base.constraint_lower);
    up.rows_mut(0, m0).copy_from(&base.constraint_upper);
    for (k, (step, row, value)) in rows.iter().enumerate() {
        a.view_mut((m0 + k, step * width), (1, width)).copy_from(&row.transpose());
        lo[m0 + k] = *value;
        up[m0 + k] = *value;
    }
    cqp.problem = base.clone().with_constraints(a, lo, up);
    let sol = solver.solve(&cqp.problem, warm)?;
    if sol.status == QpStatus::Optimal {
        return Ok(output_from(&sol, &cqp, lim, started));
    }

    // relax: + penalty * sum_i |V_i (u2_i - u1_i)|^2
    let mut relaxed = base;
    for (i, basis) in bases.iter().enumerate() {
        let proj = basis.transpose() * basis * (2.0 * COUPLING_PENALTY);
        let mut block = relaxed.hessian.view_mut((i * width, i * width), (width, width));
        block += &proj;
        let mut g = relaxed.gradient.rows_mut(i * width, width);
        g -= &proj * &pred.u_seq[i];
        cqp.constant += COUPLING_PENALTY * (basis * &pred.u_seq[i]).norm_squared();
    }
    cqp.problem = relaxed;
    let sol = solver.solve(&cqp.problem, None)?;
    let mut out = output_from(&sol, &cqp, lim, started);
    if out.status == ControlStatus::Optimal {
        out.status = ControlStatus::Relaxed;
    }
    Ok(out)
}

/// High level, rollout, then low level; returns the low-level first input.
pub fn hmpc_step(
    chain: &ChainModel,
    state: &JointState,
    reference: &[EndEffectorState],
    config: &ControllerConfig,
) -> Result<HmpcOutput> {
    let mut high = ActiveSetSolver::new(config.qp);
    let mut low = ActiveSetSolver::new(config.qp);
    hmpc_with(&mut high, &mut low, chain, state, reference, config, None, None)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn hmpc_with(
    high_solver: &mut ActiveSetSolver,
    low_solver: &mut ActiveSetSolver,
    chain: &ChainModel,
    state: &JointState,
    reference: &[EndEffectorState],
    config: &ControllerConfig,
    warm_high: Option<&DVector<f64>>,
    warm_low: Option<&DVector<f64>>,
) -> Result<HmpcOutput> {
    let h = config.horizon;
    let t0 = Instant::now();
    let maps = chain::kinematic_maps(chain, state, h.dt)?;
    let x0 = chain::end_effector_state(chain, state)?;
    let lim = chain.limits();
    let high = high_level_with(high_solver, &maps, &x0, state, reference, config, &lim, warm_high)?;
    let high_time = t0.elapsed();
    let t1 = Instant::now();
    let prediction = predict(&high, state, config);
    let rollout_time = t1.elapsed();
    let t2 = Instant::now();
    let mut control =
        low_level_with(low_solver, chain, &x0, state, reference, config, &lim, &prediction, warm_low)?;
    let low_time = t2.elapsed();
    if !high.status.is_usable() && control.status.is_usable() {
        control.status = ControlStatus::HighLevelFallback;
    }
    control.timing.high_level = high_time;
    control.timing.rollout = rollout_time;
    control.timing.low_level = low_time;
    control.solve_time = control.timing.total();
    Ok(HmpcOutput { control, high, prediction })
}
