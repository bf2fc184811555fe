//! Task-space reference generation: cubic position segments through
//! waypoints and a constant-rate geodesic orientation.

use nalgebra::{Matrix3, Vector3};

use crate::chain::EndEffectorState;
use crate::so3;
use crate::{Error, Result};

const TIME_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Waypoint {
    pub p: Vector3<f64>,
    pub r: Option<Matrix3<f64>>,
}

impl Waypoint {
    pub fn at(p: Vector3<f64>) -> Self {
        Self { p, r: None }
    }

    pub fn posed(p: Vector3<f64>, r: Matrix3<f64>) -> Self {
        Self { p, r: Some(r) }
    }
}

/// One cubic `p(s) = c0 + c1 s + c2 s^2 + c3 s^3`, `s` in `[0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub duration: f64,
    pub coeffs: [Vector3<f64>; 4],
}

impl Segment {
    fn hermite(start: f64, duration: f64, p0: Vector3<f64>, p1: Vector3<f64>, v0: Vector3<f64>, v1: Vector3<f64>) -> Self {
        let t = duration;
        let c2 = ((p1 - p0) * 3.0 - (v0 * 2.0 + v1) * t) / (t * t);
        let c3 = ((p0 - p1) * 2.0 + (v0 + v1) * t) / (t * t * t);
        Self { start, duration, coeffs: [p0, v0, c2, c3] }
    }

    pub fn eval(&self, s: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let [c0, c1, c2, c3] = self.coeffs;
        let p = c0 + (c1 + (c2 + c3 * s) * s) * s;
        let v = c1 + (c2 * 2.0 + c3 * (3.0 * s)) * s;
        let a = c2 * 2.0 + c3 * (6.0 * s);
        (p, v, a)
    }

    /// Exact: acceleration is affine in time.
    pub fn peak_acceleration(&self) -> f64 {
        self.eval(0.0).2.norm().max(self.eval(self.duration).2.norm())
    }

    pub fn peak_speed(&self) -> f64 {
        const SAMPLES: usize = 256;
        let speed = |s: f64| self.eval(s).1.norm();
        let h = self.duration / SAMPLES as f64;
        let (mut best_k, mut best) = (0, speed(0.0));
        for k in 1..=SAMPLES {
            let v = speed(k as f64 * h);
            if v > best {
                best = v;
                best_k = k;
            }
        }
        // golden-section refinement around the best sample
        let (mut lo, mut hi) = ((best_k.max(1) - 1) as f64 * h, ((best_k + 1).min(SAMPLES)) as f64 * h);
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let a = hi - ratio * (hi - lo);
            let b = lo + ratio * (hi - lo);
            if speed(a) < speed(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        best.max(speed(0.5 * (lo + hi)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionTrajectory {
    pub segments: Vec<Segment>,
}

impl PositionTrajectory {
    pub fn duration(&self) -> f64 {
        let last = self.segments.last().expect("trajectory has segments");
        last.start + last.duration
    }

    pub fn knot_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.segments.iter().map(|s| s.start).collect();
        t.push(self.duration());
        t
    }
}

fn build_segments(points: &[Vector3<f64>], durations: &[f64], interior_velocity: bool) -> Vec<Segment> {
    let k = points.len();
    let mut vel = vec![Vector3::zeros(); k];
    if interior_velocity {
        for i in 1..k - 1 {
            vel[i] = (points[i + 1] - points[i - 1]) / (durations[i - 1] + durations[i]);
        }
    }
    let mut start = 0.0;
    let mut segments = Vec::with_capacity(k - 1);
    for i in 0..k - 1 {
        segments.push(Segment::hermite(start, durations[i], points[i], points[i + 1], vel[i], vel[i + 1]));
        start += durations[i];
    }
    segments
}

/// Cubic segments with zero end velocities and Catmull-Rom interior
/// velocities.
///
/// Each segment starts at the shortest duration meeting `1.5 L / T <= v_max`
/// and `6 L / T^2 <= a_max`; segments whose exact peaks still exceed a limit
/// (possible with non-zero interior velocities) are stretched until none do.
pub fn fit_position_trajectory(waypoints: &[Waypoint], v_max: f64, a_max: f64) -> Result<PositionTrajectory> {
    if waypoints.len() < 2 {
        return Err(Error::Trajectory(format!("need at least 2 waypoints, got {}", waypoints.len())));
    }
    if !(v_max > 0.0 && a_max > 0.0 && v_max.is_finite() && a_max.is_finite()) {
        return Err(Error::Trajectory(format!("limits must be positive, got v_max {v_max}, a_max {a_max}")));
    }
    let points: Vec<Vector3<f64>> = waypoints.iter().map(|w| w.p).collect();
    if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::Trajectory("waypoint with non-finite coordinates".into()));
    }
    // target slightly inside the limits so sampled peaks stay below them
    let (v_target, a_target) = (v_max * (1.0 - 1e-9), a_max * (1.0 - 1e-9));
    let mut durations = Vec::with_capacity(points.len() - 1);
    for (i, pair) in points.windows(2).enumerate() {
        let length = (pair[1] - pair[0]).norm();
        if length < 1e-12 {
            return Err(Error::Trajectory(format!("waypoints {i} and {} coincide", i + 1)));
        }
        durations.push((1.5 * length / v_target).max((6.0 * length / a_target).sqrt()));
    }
    for _ in 0..200 {
        let segments = build_segments(&points, &durations, true);
        let mut ok = true;
        for (i, seg) in segments.iter().enumerate() {
            let stretch = (seg.peak_speed() / v_target).max((seg.peak_acceleration() / a_target).sqrt());
            if stretch > 1.0 + 1e-12 {
                ok = false;
                durations[i] *= stretch.max(1.0 + 1e-3);
            }
        }
        if ok {
            return Ok(PositionTrajectory { segments });
        }
    }
    // zero interior velocities make the initial durations exact
    let durations: Vec<f64> = points
        .windows(2)
        .map(|pair| {
            let length = (pair[1] - pair[0]).norm();
            (1.5 * length / v_target).max((6.0 * length / a_target).sqrt())
        })
        .collect();
    Ok(PositionTrajectory { segments: build_segments(&points, &durations, false) })
}

/// Position, velocity and acceleration at `t`.
pub fn sample_position(traj: &PositionTrajectory, t: f64) -> Result<(Vector3<f64>, Vector3<f64>, Vector3<f64>)> {
    let total = traj.duration();
    if !(t >= -TIME_SLACK && t <= total + TIME_SLACK) {
        return Err(Error::Trajectory(format!("time {t} outside [0, {total}]")));
    }
    let t = t.clamp(0.0, total);
    let idx = traj.segments.partition_point(|s| s.start + s.duration < t).min(traj.segments.len() - 1);
    let seg = &traj.segments[idx];
    Ok(seg.eval((t - seg.start).clamp(0.0, seg.duration)))
}

/// `R(t) = R_in exp(t Omega^)`, with constant body rate `Omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationTrajectory {
    pub r_in: Matrix3<f64>,
    pub r_d: Matrix3<f64>,
    pub duration: f64,
    pub body_rate: Vector3<f64>,
}

impl OrientationTrajectory {
    /// Rotation and world-frame angular velocity at `t`, clamped to `[0, duration]`.
    pub fn sample(&self, t: f64) -> (Matrix3<f64>, Vector3<f64>) {
        let t = t.clamp(0.0, self.duration);
        let r = if t == self.duration { self.r_d } else { self.r_in * so3::exp(&(self.body_rate * t)) };
        (r, r * self.body_rate)
    }
}

pub fn make_orientation_trajectory(r_in: &Matrix3<f64>, r_d: &Matrix3<f64>, duration: f64) -> Result<OrientationTrajectory> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::Trajectory(format!("orientation duration must be positive, got {duration}")));
    }
    for (name, r) in [("initial", r_in), ("goal", r_d)] {
        if !so3::is_rotation(r, 1e-9) {
            return Err(Error::Trajectory(format!("{name} orientation is not a rotation matrix")));
        }
    }
    let relative = r_in.transpose() * r_d;
    let rotvec = so3::log(&relative);
    if std::f64::consts::PI - rotvec.norm() < 1e-9 || (relative.trace() + 1.0).abs() < 1e-12 {
        return Err(Error::Trajectory(
            "relative rotation of pi is ambiguous; insert an intermediate orientation".into(),
        ));
    }
    Ok(OrientationTrajectory { r_in: *r_in, r_d: *r_d, duration, body_rate: rotvec / duration })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSample {
    pub t: f64,
    pub state: EndEffectorState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub dt: f64,
    pub samples: Vec<ReferenceSample>,
}

impl ReferenceTrajectory {
    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// `len` consecutive states from index `start`, holding the final state past the end.
    pub fn window(&self, start: usize, len: usize) -> Vec<EndEffectorState> {
        let last = self.samples.len() - 1;
        (start..start + len).map(|k| self.samples[k.min(last)].state).collect()
    }
}

pub fn build_reference(ptraj: &PositionTrajectory, otraj: &OrientationTrajectory, dt: f64) -> Result<ReferenceTrajectory> {
    let total = ptraj.duration();
    if (otraj.duration - total).abs() > TIME_SLACK {
        return Err(Error::Trajectory(format!(
            "orientation duration {} differs from position duration {total}",
            otraj.duration
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Trajectory(format!("dt must be positive, got {dt}")));
    }
    if dt > total + TIME_SLACK {
        return Err(Error::Trajectory(format!("dt {dt} exceeds duration {total}")));
    }
    let count = (total / dt - 1e-9).ceil() as usize + 1;
    let samples = (0..count)
        .map(|k| {
            let t = if k + 1 == count { total } else { k as f64 * dt };
            let (p, pd, _) = sample_position(ptraj, t)?;
            let (r, w) = otraj.sample(t);
            Ok(ReferenceSample { t, state: EndEffectorState { p, o: so3::quat_from_rotation(&r), pd, w } })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferenceTrajectory { dt, samples })
}

/// Position and orientation plans through `waypoints`; the first and last
/// waypoints must carry orientations.
pub fn plan_reference(waypoints: &[Waypoint], v_max: f64, a_max: f64, dt: f64) -> Result<ReferenceTrajectory> {
    let ptraj = fit_position_trajectory(waypoints, v_max, a_max)?;
    let (Some(r_in), Some(r_d)) = (waypoints[0].r, waypoints[waypoints.len() - 1].r) else {
        return Err(Error::Trajectory("first and last waypoints need orientations".into()));
    };
    let otraj = make_orientation_trajectory(&r_in, &r_d, ptraj.duration())?;
    build_reference(&ptraj, &otraj, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn line() -> Vec<Waypoint> {
        vec![Waypoint::at(Vector3::zeros()), Waypoint::at(Vector3::x())]
    }

    #[test]
    fn single_segment_midpoint() {
        let traj = fit_position_trajectory(&line(), 1.0, 1.0).unwrap();
        let t = traj.duration();
        let (p, _, _) = sample_position(&traj, t / 2.0).unwrap();
        assert!((p - Vector3::new(0.5, 0.0, 0.0)).amax() < 1e-12);
        let (p0, v0, _) = sample_position(&traj, 0.0).unwrap();
        let (p1, v1, _) = sample_position(&traj, t).unwrap();
        assert_eq!(p0, Vector3::zeros());
        assert!((p1 - Vector3::x()).amax() < 1e-12);
        assert_eq!(v0, Vector3::zeros());
        assert!(v1.norm() < 1e-12);
    }

    #[test]
    fn single_segment_duration_formula() {
        // velocity bound dominates: 1.5 / 0.5 = 3 > sqrt(6 / 10)
        let traj = fit_position_trajectory(&line(), 0.5, 10.0).unwrap();
        assert!((traj.duration() - 3.0).abs() < 1e-6);
        // acceleration bound dominates: sqrt(6 / 0.5)
        let traj = fit_position_trajectory(&line(), 10.0, 0.5).unwrap();
        assert!((traj.duration() - 12f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_position_trajectory(&line()[..1], 1.0, 1.0).is_err());
        assert!(fit_position_trajectory(&line(), 0.0, 1.0).is_err());
        let dup = vec![Waypoint::at(Vector3::zeros()), Waypoint::at(Vector3::zeros())];
        assert!(matches!(fit_position_trajectory(&dup, 1.0, 1.0), Err(Error::Trajectory(_))));
        let traj = fit_position_trajectory(&line(), 1.0, 1.0).unwrap();
        assert!(sample_position(&traj, -1e-6).is_err());
        assert!(sample_position(&traj, traj.duration() + 1e-10).is_ok());
    }

    #[test]
    fn collinear_speed_limit() {
        let wps = vec![Waypoint::at(Vector3::zeros()), Waypoint::at(Vector3::x()), Waypoint::at(Vector3::x() * 2.0)];
        let traj = fit_position_trajectory(&wps, 0.5, 0.4).unwrap();
        let n = (traj.duration() * 10_000.0) as usize;
        for k in 0..=n {
            let (_, v, a) = sample_position(&traj, traj.duration() * k as f64 / n as f64).unwrap();
            assert!(v.norm() <= 0.5 + 1e-9);
            assert!(a.norm() <= 0.4 + 1e-9);
        }
    }

    #[test]
    fn geodesic_midpoint() {
        let goal = so3::axis_angle(&Vector3::z(), FRAC_PI_2);
        let o = make_orientation_trajectory(&Matrix3::identity(), &goal, 2.0).unwrap();
        let (r, w) = o.sample(1.0);
        assert!((r - so3::axis_angle(&Vector3::z(), FRAC_PI_4)).amax() < 1e-12);
        assert!((w.norm() - FRAC_PI_2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_orientation() {
        let r = so3::exp(&Vector3::new(0.1, 0.2, -0.3));
        let o = make_orientation_trajectory(&r, &r, 1.0).unwrap();
        for t in [0.0, 0.3, 1.0] {
            let (rt, w) = o.sample(t);
            assert!((rt - r).amax() < 1e-15);
            assert_eq!(w, Vector3::zeros());
        }
    }

    #[test]
    fn half_turn_is_rejected() {
        let goal = so3::axis_angle(&Vector3::x(), PI);
        assert!(make_orientation_trajectory(&Matrix3::identity(), &goal, 1.0).is_err());
    }

    #[test]
    fn reference_sample_counts() {
        let traj = fit_position_trajectory(&line(), 0.3, 10.0).unwrap();
        assert!((traj.duration() - 5.0).abs() < 1e-6);
        let t = traj.duration();
        let o = make_orientation_trajectory(&Matrix3::identity(), &Matrix3::identity(), t).unwrap();
        let two = build_reference(&traj, &o, t).unwrap();
        assert_eq!(two.samples.len(), 2);
        assert_eq!(two.samples[1].t, t);
        assert!(build_reference(&traj, &o, 0.0).is_err());
        assert!(build_reference(&traj, &o, t * 2.0).is_err());
    }

    #[test]
    fn five_second_reference_has_501_samples() {
        let seg = Segment::hermite(0.0, 5.0, Vector3::zeros(), Vector3::x(), Vector3::zeros(), Vector3::zeros());
        let traj = PositionTrajectory { segments: vec![seg] };
        let o = make_orientation_trajectory(&Matrix3::identity(), &so3::axis_angle(&Vector3::y(), 1.0), 5.0).unwrap();
        let r = build_reference(&traj, &o, 0.01).unwrap();
        assert_eq!(r.samples.len(), 501);
        assert_eq!(r.samples[500].t, 5.0);
        assert!(r.samples.iter().all(|s| s.state.o[0] >= 0.0 && (s.state.o.norm() - 1.0).abs() < 1e-12));
    }
}
