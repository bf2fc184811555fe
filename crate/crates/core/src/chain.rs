//! Serial-chain kinematics.
//!
//! Each module applies its fixed `parent_transform`, then rotates about its
//! local `axis` by the joint angle. The end-effector frame is
//! `base * prod_i(parent_i * Rot(axis_i, q_i)) * tool`.
//! Jacobians are geometric, world-frame, taken at the end-effector point,
//! with linear rows first.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3, Vector4};

use crate::error::check_len;
use crate::so3;
use crate::Result;

/// Rotation plus translation. Not guaranteed rigid; see [`RigidTransform::violation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation }
    }

    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Reason the transform is not rigid at tolerance 1e-12, if any.
    pub fn violation(&self) -> Option<String> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Some("non-finite entries".into());
        }
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        if ortho > 1e-12 {
            return Some(format!("rotation not orthonormal (|R'R - I| = {ortho:e})"));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > 1e-12 {
            return Some(format!("rotation determinant {det} != 1"));
        }
        None
    }
}

/// Joint box limits, symmetric in velocity and acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits {
    pub q_lower: f64,
    pub q_upper: f64,
    pub qd_max: f64,
    pub qdd_max: f64,
}

impl Default for JointLimits {
    fn default() -> Self {
        Self { q_lower: -2.75, q_upper: 2.75, qd_max: 2.0, qdd_max: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointModule {
    /// Unit rotation axis in the module frame.
    pub axis: Vector3<f64>,
    pub parent_transform: RigidTransform,
    pub limits: JointLimits,
}

impl JointModule {
    pub fn new(axis: Vector3<f64>, parent_transform: RigidTransform) -> Self {
        Self { axis, parent_transform, limits: JointLimits::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    pub name: String,
    pub modules: Vec<JointModule>,
    pub base_transform: RigidTransform,
    pub tool_transform: RigidTransform,
}

/// Stacked per-joint limit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitVectors {
    pub q_lower: DVector<f64>,
    pub q_upper: DVector<f64>,
    pub qd_max: DVector<f64>,
    pub qdd_max: DVector<f64>,
}

impl LimitVectors {
    pub fn len(&self) -> usize {
        self.q_lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_lower.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qd: DVector<f64>) -> Self {
        Self { q, qd }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self { q, qd: DVector::zeros(n) }
    }
}

/// `x_e = [p, o, pd, w]`, 13 numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndEffectorState {
    pub p: Vector3<f64>,
    /// Unit quaternion `(w, x, y, z)`, `w >= 0`.
    pub o: Vector4<f64>,
    pub pd: Vector3<f64>,
    /// World-frame angular velocity.
    pub w: Vector3<f64>,
}

impl EndEffectorState {
    pub fn to_vector(&self) -> SMatrix<f64, 13, 1> {
        let mut x = SMatrix::<f64, 13, 1>::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.p);
        x.fixed_rows_mut::<4>(3).copy_from(&self.o);
        x.fixed_rows_mut::<3>(7).copy_from(&self.pd);
        x.fixed_rows_mut::<3>(10).copy_from(&self.w);
        x
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        so3::rotation_from_quat(&self.o)
    }
}

/// 13x12 map from `[pd, w, pdd, wd]` to increments of `[p, o, pd, w]`.
pub type StateIncrementMap = SMatrix<f64, 13, 12>;

/// Jacobian, its derivative and the mapping matrices at one joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicMaps {
    pub j: DMatrix<f64>,
    pub jdot: DMatrix<f64>,
    /// `[[J, 0], [Jdot, J]]`, 12 x 2n.
    pub b_kin: DMatrix<f64>,
    pub b_e: StateIncrementMap,
}

/// World-frame joint origins and axes plus the end-effector pose.
#[derive(Debug, Clone)]
pub struct Frames {
    pub origins: Vec<Vector3<f64>>,
    pub axes: Vec<Vector3<f64>>,
    pub p: Vector3<f64>,
    pub r: Matrix3<f64>,
}

impl ChainModel {
    pub fn dof(&self) -> usize {
        self.modules.len()
    }

    pub fn limits(&self) -> LimitVectors {
        let f = |g: fn(&JointLimits) -> f64| DVector::from_iterator(self.dof(), self.modules.iter().map(|m| g(&m.limits)));
        LimitVectors {
            q_lower: f(|l| l.q_lower),
            q_upper: f(|l| l.q_upper),
            qd_max: f(|l| l.qd_max),
            qdd_max: f(|l| l.qdd_max),
        }
    }

    pub fn frames(&self, q: &DVector<f64>) -> Result<Frames> {
        check_len("joint vector", self.dof(), q.len())?;
        let mut t = self.base_transform;
        let mut origins = Vec::with_capacity(self.dof());
        let mut axes = Vec::with_capacity(self.dof());
        for (module, &angle) in self.modules.iter().zip(q.iter()) {
            t = t.compose(&module.parent_transform);
            origins.push(t.translation);
            axes.push(t.rotation * module.axis);
            t.rotation *= so3::axis_angle(&module.axis, angle);
        }
        let tip = t.compose(&self.tool_transform);
        Ok(Frames { origins, axes, p: tip.translation, r: tip.rotation })
    }
}

pub fn forward_kinematics(chain: &ChainModel, q: &DVector<f64>) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let f = chain.frames(q)?;
    Ok((f.p, f.r))
}

fn jacobian_from_frames(f: &Frames) -> DMatrix<f64> {
    let n = f.axes.len();
    let mut j = DMatrix::zeros(6, n);
    for i in 0..n {
        let z = f.axes[i];
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&z.cross(&(f.p - f.origins[i])));
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
    }
    j
}

pub fn jacobian(chain: &ChainModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    Ok(jacobian_from_frames(&chain.frames(q)?))
}

// Velocity propagation: w_i = sum_{j<=i} z_j qd_j, dz_i = w_{i-1} x z_i,
// dp_i = sum_{j<i} z_j x (p_i - p_j) qd_j.
fn jacobian_dot_from_frames(f: &Frames, qd: &DVector<f64>) -> DMatrix<f64> {
    let n = f.axes.len();
    let mut jdot = DMatrix::zeros(6, n);
    let twist_at = |point: &Vector3<f64>, upto: usize| {
        let mut v = Vector3::zeros();
        for k in 0..upto {
            v += f.axes[k].cross(&(point - f.origins[k])) * qd[k];
        }
        v
    };
    let pe_dot = twist_at(&f.p, n);
    let mut omega_prev = Vector3::zeros();
    for i in 0..n {
        let z = f.axes[i];
        let z_dot = omega_prev.cross(&z);
        let pi_dot = twist_at(&f.origins[i], i);
        let lin = z_dot.cross(&(f.p - f.origins[i])) + z.cross(&(pe_dot - pi_dot));
        jdot.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        jdot.fixed_view_mut::<3, 1>(3, i).copy_from(&z_dot);
        omega_prev += z * qd[i];
    }
    jdot
}

pub fn jacobian_dot(chain: &ChainModel, q: &DVector<f64>, qd: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_len("joint velocity", chain.dof(), qd.len())?;
    Ok(jacobian_dot_from_frames(&chain.frames(q)?, qd))
}

pub fn quat_rate_matrix(o: &Vector4<f64>) -> Result<nalgebra::Matrix4x3<f64>> {
    so3::quat_rate_matrix(o)
}

pub fn assemble_b_kin(j: &DMatrix<f64>, jdot: &DMatrix<f64>) -> DMatrix<f64> {
    let n = j.ncols();
    let mut b = DMatrix::zeros(12, 2 * n);
    b.view_mut((0, 0), (6, n)).copy_from(j);
    b.view_mut((6, 0), (6, n)).copy_from(jdot);
    b.view_mut((6, n), (6, n)).copy_from(j);
    b
}

pub fn build_b_kin(chain: &ChainModel, s: &JointState) -> Result<DMatrix<f64>> {
    check_len("joint velocity", chain.dof(), s.qd.len())?;
    let f = chain.frames(&s.q)?;
    Ok(assemble_b_kin(&jacobian_from_frames(&f), &jacobian_dot_from_frames(&f, &s.qd)))
}

/// Forward-Euler increment map `blockdiag(I dt, 1/2 G(o) dt, I dt, I dt)`.
pub fn build_b_e(o: &Vector4<f64>, dt: f64) -> Result<StateIncrementMap> {
    so3::check_unit(o)?;
    Ok(b_e_unchecked(o, dt))
}

pub(crate) fn b_e_unchecked(o: &Vector4<f64>, dt: f64) -> StateIncrementMap {
    let mut b = StateIncrementMap::zeros();
    let eye = Matrix3::identity() * dt;
    b.fixed_view_mut::<3, 3>(0, 0).copy_from(&eye);
    b.fixed_view_mut::<4, 3>(3, 3).copy_from(&(so3::rate_matrix_unchecked(o) * (0.5 * dt)));
    b.fixed_view_mut::<3, 3>(7, 6).copy_from(&eye);
    b.fixed_view_mut::<3, 3>(10, 9).copy_from(&eye);
    b
}

pub fn kinematic_maps(chain: &ChainModel, s: &JointState, dt: f64) -> Result<KinematicMaps> {
    check_len("joint velocity", chain.dof(), s.qd.len())?;
    let f = chain.frames(&s.q)?;
    let j = jacobian_from_frames(&f);
    let jdot = jacobian_dot_from_frames(&f, &s.qd);
    let b_kin = assemble_b_kin(&j, &jdot);
    let o = so3::quat_from_rotation(&f.r);
    Ok(KinematicMaps { j, jdot, b_kin, b_e: b_e_unchecked(&o, dt) })
}

pub fn end_effector_state(chain: &ChainModel, s: &JointState) -> Result<EndEffectorState> {
    check_len("joint velocity", chain.dof(), s.qd.len())?;
    let f = chain.frames(&s.q)?;
    let twist = jacobian_from_frames(&f) * &s.qd;
    Ok(EndEffectorState {
        p: f.p,
        o: so3::quat_from_rotation(&f.r),
        pd: Vector3::new(twist[0], twist[1], twist[2]),
        w: Vector3::new(twist[3], twist[4], twist[5]),
    })
}
