//! Rotation and quaternion helpers.
//!
//! Quaternions are stored scalar-first as `Vector4 = (w, x, y, z)` and kept in
//! the `w >= 0` hemisphere. Angular velocities are world-frame.

use nalgebra::{Matrix3, Matrix3x4, Matrix4x3, Rotation3, UnitQuaternion, Vector3, Vector4};

use crate::{Error, Result};

pub const UNIT_TOL: f64 = 1e-9;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation by `angle` about the unit vector `axis` (Rodrigues).
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = skew(axis);
    let (s, c) = angle.sin_cos();
    Matrix3::identity() + k * s + k * k * (1.0 - c)
}

pub fn exp(v: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*v).into_inner()
}

/// Rotation vector of `r`, angle in `[0, pi]`.
///
/// Goes through the quaternion so small angles keep full relative precision.
pub fn log(r: &Matrix3<f64>) -> Vector3<f64> {
    let o = quat_from_rotation(r);
    let v = Vector3::new(o[1], o[2], o[3]);
    let s = v.norm();
    if s == 0.0 {
        return Vector3::zeros();
    }
    v * (2.0 * s.atan2(o[0]) / s)
}

pub fn canonicalize(o: Vector4<f64>) -> Vector4<f64> {
    if o[0] < 0.0 {
        -o
    } else {
        o
    }
}

/// Normalizes and sign-canonicalizes.
pub fn normalize(o: Vector4<f64>) -> Vector4<f64> {
    canonicalize(o / o.norm())
}

pub fn quat_from_rotation(r: &Matrix3<f64>) -> Vector4<f64> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    normalize(Vector4::new(q.w, q.i, q.j, q.k))
}

pub fn rotation_from_quat(o: &Vector4<f64>) -> Matrix3<f64> {
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(o[0], o[1], o[2], o[3]));
    q.to_rotation_matrix().into_inner()
}

pub fn check_unit(o: &Vector4<f64>) -> Result<()> {
    let norm = o.norm();
    if (norm - 1.0).abs() <= UNIT_TOL {
        Ok(())
    } else {
        Err(Error::NonUnitQuaternion(norm))
    }
}

/// `G(o)` with `do/dt = 1/2 G(o) w` for world-frame `w`.
pub fn quat_rate_matrix(o: &Vector4<f64>) -> Result<Matrix4x3<f64>> {
    check_unit(o)?;
    Ok(rate_matrix_unchecked(o))
}

pub(crate) fn rate_matrix_unchecked(o: &Vector4<f64>) -> Matrix4x3<f64> {
    let (w, e) = (o[0], Vector3::new(o[1], o[2], o[3]));
    let lower = Matrix3::identity() * w - skew(&e);
    let mut g = Matrix4x3::zeros();
    g.row_mut(0).copy_from(&(-e.transpose()));
    g.fixed_view_mut::<3, 3>(1, 0).copy_from(&lower);
    g
}

/// `M(r)` such that `M(r) o` is the vector part of `o * conj(r)`.
///
/// `M(r) r = 0`, and for `o` near `r` the result is half the world-frame
/// rotation vector taking `r` to `o`.
pub fn quat_error_matrix(r: &Vector4<f64>) -> Matrix3x4<f64> {
    let (w, e) = (r[0], Vector3::new(r[1], r[2], r[3]));
    let mut m = Matrix3x4::zeros();
    m.column_mut(0).copy_from(&(-e));
    m.fixed_view_mut::<3, 3>(0, 1).copy_from(&(Matrix3::identity() * w + skew(&e)));
    m
}

/// Hamilton product.
pub fn quat_mul(a: &Vector4<f64>, b: &Vector4<f64>) -> Vector4<f64> {
    let (aw, av) = (a[0], Vector3::new(a[1], a[2], a[3]));
    let (bw, bv) = (b[0], Vector3::new(b[1], b[2], b[3]));
    let v = bv * aw + av * bw + av.cross(&bv);
    Vector4::new(aw * bw - av.dot(&bv), v.x, v.y, v.z)
}

pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    (r.transpose() * r - Matrix3::identity()).abs().max() <= tol && (r.determinant() - 1.0).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_rate_matrix() {
        let g = quat_rate_matrix(&Vector4::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(g.row(0).norm(), 0.0);
        assert_eq!(g.fixed_view::<3, 3>(1, 0).into_owned(), Matrix3::identity());
    }

    #[test]
    fn rate_matrix_rejects_non_unit() {
        assert!(matches!(quat_rate_matrix(&Vector4::new(1.1, 0.0, 0.0, 0.0)), Err(Error::NonUnitQuaternion(_))));
    }

    #[test]
    fn rate_matrix_is_left_multiplication() {
        let o = normalize(Vector4::new(0.3, -0.5, 0.2, 0.7));
        let w = Vector3::new(0.4, -1.0, 0.25);
        let lhs = quat_rate_matrix(&o).unwrap() * w;
        let rhs = quat_mul(&Vector4::new(0.0, w.x, w.y, w.z), &o);
        assert!((lhs - rhs).amax() < 1e-15);
    }

    #[test]
    fn error_matrix_annihilates_reference() {
        let r = normalize(Vector4::new(0.9, 0.1, -0.3, 0.2));
        assert!((quat_error_matrix(&r) * r).amax() < 1e-15);
        let o = normalize(Vector4::new(0.2, 0.5, 0.1, -0.4));
        let v = quat_mul(&o, &Vector4::new(r[0], -r[1], -r[2], -r[3]));
        assert!((quat_error_matrix(&r) * o - Vector3::new(v[1], v[2], v[3])).amax() < 1e-15);
    }

    #[test]
    fn quaternion_round_trip() {
        let r = exp(&Vector3::new(0.3, -2.0, 1.1));
        let o = quat_from_rotation(&r);
        assert!(o[0] >= 0.0);
        assert!((o.norm() - 1.0).abs() < 1e-12);
        assert!((rotation_from_quat(&o) - r).amax() < 1e-12);
    }

    #[test]
    fn log_keeps_small_angle_precision() {
        let v = Vector3::new(1e-7, -2e-7, 3e-8);
        assert!((log(&exp(&v)) - v).amax() < 1e-20);
    }

    #[test]
    fn log_of_z_rotation() {
        let v = log(&axis_angle(&Vector3::z(), 0.1));
        assert!((v - Vector3::new(0.0, 0.0, 0.1)).amax() < 1e-15);
    }
}
