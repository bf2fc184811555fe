use std::time::Instant;

use nalgebra::{DMatrix, DVector, SMatrix, Vector4};

use super::{clamp_input, split_steps, ControlOutput, ControlStatus, Matrix12, StepTiming};
use crate::chain::{self, ChainModel, EndEffectorState, JointState, KinematicMaps, LimitVectors};
use crate::error::check_len;
use crate::so3;
use crate::{Error, Result};
use hmpc_qp::{ActiveSetSolver, QpProblem, QpSolution, QpStatus};

type Matrix13 = SMatrix<f64, 13, 13>;
type Vector13 = SMatrix<f64, 13, 1>;

/// Linearization used for one prediction step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepModel {
    /// `[[J, 0], [Jdot, J]]` at the step's joint state.
    pub b_kin: DMatrix<f64>,
    /// Quaternion at which `G(o)` is evaluated.
    pub o_lin: Vector4<f64>,
}

/// Condensed QP over the stacked inputs `[u_0; ...; u_{N-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedMpc {
    pub problem: QpProblem,
    /// Cost at `u = 0`; total cost is `objective(u) + constant`.
    pub constant: f64,
    pub dof: usize,
    pub steps: usize,
}

/// 12x13 map from a state difference to the error coordinates of the cost.
///
/// The orientation rows apply `M(o_ref)`, giving the vector part of
/// `o * conj(o_ref)` to first order.
fn error_map(o_ref: &Vector4<f64>) -> SMatrix<f64, 12, 13> {
    let mut c = SMatrix::<f64, 12, 13>::zeros();
    for i in 0..3 {
        c[(i, i)] = 1.0;
        c[(6 + i, 7 + i)] = 1.0;
        c[(9 + i, 10 + i)] = 1.0;
    }
    c.fixed_view_mut::<3, 4>(3, 3).copy_from(&so3::quat_error_matrix(o_ref));
    c
}

/// Linearizations frozen at the current state; the quaternion is propagated
/// with the current angular velocity.
pub fn frozen_models(maps: &KinematicMaps, x0: &EndEffectorState, steps: usize, dt: f64) -> Vec<StepModel> {
    let mut o = x0.o;
    (0..steps)
        .map(|_| {
            let model = StepModel { b_kin: maps.b_kin.clone(), o_lin: o };
            o = so3::normalize(o + so3::rate_matrix_unchecked(&o) * x0.w * (0.5 * dt));
            model
        })
        .collect()
}

/// Builds the condensed tracking QP.
///
/// Prediction: `x_{k+1} = x_k + B_e(o_lin_k) B_kin_k u_k` from `x0`. Cost:
/// `sum_k |C_k (x_k - x_ref_k)|^2_Q + |u_k|^2_R` for `k = 1..N`. Constraints:
/// velocity and acceleration boxes, the next-step velocity `qd + qdd dt`
/// inside the velocity box, and accumulated positions
/// `q0 + sum_{j<k} (qd_j dt + 1/2 qdd_j dt^2)` inside the position box.
#[allow(clippy::too_many_arguments)]
pub fn condense(
    x0: &EndEffectorState,
    q0: &DVector<f64>,
    reference: &[EndEffectorState],
    models: &[StepModel],
    q_weight: &Matrix12,
    r_weight: &DMatrix<f64>,
    lim: &LimitVectors,
    dt: f64,
) -> Result<CondensedMpc> {
    let n = q0.len();
    let steps = models.len();
    let width = 2 * n;
    if steps == 0 {
        return Err(Error::Controller("horizon must be at least 1".into()));
    }
    if reference.len() < steps + 1 {
        return Err(Error::Controller(format!(
            "reference window has {} states, need {}",
            reference.len(),
            steps + 1
        )));
    }
    check_len("limit vectors", n, lim.len())?;
    check_len("input weight", width, r_weight.nrows())?;
    for m in models {
        check_len("kinematic map columns", width, m.b_kin.ncols())?;
    }

    // suffix sums of A_k = C_k' Q C_k and a_k = A_k (x0 - x_ref_k)
    let x0v = x0.to_vector();
    let mut a_suffix = vec![Matrix13::zeros(); steps + 2];
    let mut b_suffix = vec![Vector13::zeros(); steps + 2];
    let mut constant = 0.0;
    for k in (1..=steps).rev() {
        let mut target = reference[k];
        if target.o.dot(&x0.o) < 0.0 {
            target.o = -target.o;
        }
        let c = error_map(&target.o);
        let a = c.transpose() * q_weight * c;
        let diff = x0v - target.to_vector();
        let ad = a * diff;
        constant += diff.dot(&ad);
        a_suffix[k] = a_suffix[k + 1] + a;
        b_suffix[k] = b_suffix[k + 1] + ad;
    }

    let phi: Vec<DMatrix<f64>> = models
        .iter()
        .map(|m| {
            let be = chain::b_e_unchecked(&m.o_lin, dt);
            let be = DMatrix::from_column_slice(13, 12, be.as_slice());
            be * &m.b_kin
        })
        .collect();
    let a_dyn: Vec<DMatrix<f64>> = a_suffix.iter().map(|a| DMatrix::from_column_slice(13, 13, a.as_slice())).collect();

    let nv = width * steps;
    let mut h = DMatrix::zeros(nv, nv);
    let mut g = DVector::zeros(nv);
    for i in 0..steps {
        let left = phi[i].transpose() * &a_dyn[i + 1];
        for j in 0..=i {
            let block = &left * &phi[j] * 2.0;
            h.view_mut((i * width, j * width), (width, width)).copy_from(&block);
            if i != j {
                h.view_mut((j * width, i * width), (width, width)).copy_from(&block.transpose());
            }
        }
        let bi = DVector::from_column_slice(b_suffix[i + 1].as_slice());
        g.rows_mut(i * width, width).copy_from(&(phi[i].transpose() * bi * 2.0));
        let mut diag = h.view_mut((i * width, i * width), (width, width));
        diag += r_weight * 2.0;
    }
    let h = (&h + h.transpose()) * 0.5;

    let mut lower = DVector::zeros(nv);
    let mut upper = DVector::zeros(nv);
    for k in 0..steps {
        for i in 0..n {
            lower[k * width + i] = -lim.qd_max[i];
            upper[k * width + i] = lim.qd_max[i];
            lower[k * width + n + i] = -lim.qdd_max[i];
            upper[k * width + n + i] = lim.qdd_max[i];
        }
    }

    let rows = 2 * n * steps;
    let mut a = DMatrix::zeros(rows, nv);
    let mut lower_a = DVector::zeros(rows);
    let mut upper_a = DVector::zeros(rows);
    for k in 0..steps {
        for i in 0..n {
            // position after k + 1 steps; zero input must stay feasible
            let row = k * n + i;
            for j in 0..=k {
                a[(row, j * width + i)] = dt;
                a[(row, j * width + n + i)] = 0.5 * dt * dt;
            }
            lower_a[row] = (lim.q_lower[i] - q0[i]).min(0.0);
            upper_a[row] = (lim.q_upper[i] - q0[i]).max(0.0);
            // velocity at the start of step k + 1
            let row = steps * n + k * n + i;
            a[(row, k * width + i)] = 1.0;
            a[(row, k * width + n + i)] = dt;
            lower_a[row] = -lim.qd_max[i];
            upper_a[row] = lim.qd_max[i];
        }
    }

    let problem = QpProblem::new(h, g).with_bounds(lower, upper).with_constraints(a, lower_a, upper_a);
    Ok(CondensedMpc { problem, constant, dof: n, steps })
}

/// MPC QP with all steps linearized at the current state.
#[allow(clippy::too_many_arguments)]
pub fn build_mpc_qp(
    maps: &KinematicMaps,
    x0: &EndEffectorState,
    q0: &DVector<f64>,
    reference: &[EndEffectorState],
    q_weight: &Matrix12,
    r_weight: &DMatrix<f64>,
    steps: usize,
    dt: f64,
    lim: &LimitVectors,
) -> Result<CondensedMpc> {
    condense(x0, q0, reference, &frozen_models(maps, x0, steps, dt), q_weight, r_weight, lim, dt)
}

pub(crate) fn output_from(sol: &QpSolution, cqp: &CondensedMpc, lim: &LimitVectors, started: Instant) -> ControlOutput {
    let elapsed = started.elapsed();
    if sol.status != QpStatus::Optimal {
        return ControlOutput::failed(cqp.dof, elapsed);
    }
    let mut sequence = split_steps(&sol.x, 2 * cqp.dof);
    for u in &mut sequence {
        clamp_input(u, lim);
    }
    ControlOutput {
        u: sequence[0].clone(),
        sequence,
        predicted_cost: sol.objective + cqp.constant,
        status: ControlStatus::Optimal,
        solve_time: elapsed,
        timing: StepTiming { high_level: elapsed, ..Default::default() },
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_frozen(
    solver: &mut ActiveSetSolver,
    chain: &ChainModel,
    state: &JointState,
    reference: &[EndEffectorState],
    q_weight: &Matrix12,
    r_weight: &DMatrix<f64>,
    steps: usize,
    dt: f64,
    warm: Option<&DVector<f64>>,
) -> Result<ControlOutput> {
    let started = Instant::now();
    let maps = chain::kinematic_maps(chain, state, dt)?;
    let x0 = chain::end_effector_state(chain, state)?;
    let lim = chain.limits();
    let cqp = build_mpc_qp(&maps, &x0, &state.q, reference, q_weight, r_weight, steps, dt, &lim)?;
    let sol = solver.solve(&cqp.problem, warm)?;
    Ok(output_from(&sol, &cqp, &lim, started))
}
