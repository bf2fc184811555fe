//! Brute-force oracles for the kinematic derivatives and for the model
//! error analysis of the hierarchical scheme.
//!
//! Everything here is deliberately naive: central differences of forward
//! kinematics and of the analytic Jacobian, explicit rollouts, and sampled
//! bounds. Fitted constants are empirical, not proven.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{self, ChainModel, JointState, LimitVectors};
use crate::controllers::integrate_joints;
use crate::so3;
use crate::{Error, Result};

/// Default step for first derivatives of forward kinematics.
pub const FD_STEP: f64 = 1e-6;
/// Default step for differences of the analytic Jacobian.
pub const FD_HESSIAN_STEP: f64 = 1e-4;
/// Largest joint step accepted by [`error_term`], rad.
pub const ERROR_TERM_GUARD: f64 = 0.1;

/// Central-difference geometric Jacobian. Orientation rows use the world
/// rotation vector of `R(q + h e_i) R(q - h e_i)'`, divided by `2h`.
pub fn fd_jacobian(chain: &ChainModel, q: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
    let n = chain.dof();
    let mut j = DMatrix::zeros(6, n);
    for i in 0..n {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        let (pp, rp) = chain::forward_kinematics(chain, &qp)?;
        let (pm, rm) = chain::forward_kinematics(chain, &qm)?;
        let dp = (pp - pm) / (2.0 * h);
        let dw = so3::log(&(rp * rm.transpose())) / (2.0 * h);
        j.view_mut((0, i), (3, 1)).copy_from(&dp);
        j.view_mut((3, i), (3, 1)).copy_from(&dw);
    }
    Ok(j)
}

/// `(J(q + h qd) - J(q - h qd)) / 2h`, the time derivative of `J` along `qd`.
pub fn fd_jacobian_dot(chain: &ChainModel, q: &DVector<f64>, qd: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
    let jp = chain::jacobian(chain, &(q + qd * h))?;
    let jm = chain::jacobian(chain, &(q - qd * h))?;
    Ok((jp - jm) / (2.0 * h))
}

/// Derivative of the Jacobian, `slices[i] = dJ/dq_i` (6 x n). Entry
/// `[r, i, j]` is `slices[i][(r, j)]`. Position rows are the Hessian of the
/// tool position and are symmetric in `(i, j)`; orientation rows are not.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianTensor {
    pub slices: Vec<DMatrix<f64>>,
}

impl HessianTensor {
    pub fn dof(&self) -> usize {
        self.slices.len()
    }

    /// `sum_ij a_i b_j dJ_j/dq_i`, i.e. `((dJ/dq) a) b`.
    pub fn bilinear(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        self.contract(a) * b
    }

    /// `sum_i a_i dJ/dq_i`: the change of `J` along `a`.
    pub fn contract(&self, a: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(6, self.dof());
        for (s, ai) in self.slices.iter().zip(a.iter()) {
            out += s * *ai;
        }
        out
    }

    /// `sqrt(sum_i |dJ/dq_i|^2)` with spectral norms; bounds `|bilinear(a, b)| / (|a| |b|)`.
    pub fn norm_bound(&self) -> f64 {
        self.slices.iter().map(spectral_norm).map(|s| s * s).sum::<f64>().sqrt()
    }

    /// Largest `|H[r, i, j] - H[r, j, i]|` over the position rows.
    pub fn position_asymmetry(&self) -> f64 {
        let n = self.dof();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for r in 0..3 {
                    worst = worst.max((self.slices[i][(r, j)] - self.slices[j][(r, i)]).abs());
                }
            }
        }
        worst
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// Central differences of the analytic Jacobian along each joint.
pub fn fd_hessian_tensor(chain: &ChainModel, q: &DVector<f64>, h: f64) -> Result<HessianTensor> {
    let n = chain.dof();
    let slices = (0..n)
        .map(|i| {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            Ok((chain::jacobian(chain, &qp)? - chain::jacobian(chain, &qm)?) / (2.0 * h))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HessianTensor { slices })
}

/// Second-order mismatch between the Taylor expansion along `dq1 + dq2`
/// and the re-linearized model, with its sampled bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTerm {
    pub exact: DVector<f64>,
    pub bound: f64,
}

/// `E = 1/2 (dq1 + dq2)' H (dq1 + dq2) - ((dJ/dq) dq1) dq2` at `q`, and
/// `1/2 L_H (|dq1|^2 + |dq2|^2 + |dq1| |dq2|)`.
pub fn error_term(chain: &ChainModel, q: &DVector<f64>, dq1: &DVector<f64>, dq2: &DVector<f64>, l_h: f64) -> Result<ErrorTerm> {
    for (name, d) in [("dq1", dq1), ("dq2", dq2)] {
        if d.norm() > ERROR_TERM_GUARD {
            return Err(Error::Oracle(format!("{name} norm {} exceeds the {ERROR_TERM_GUARD} rad guard", d.norm())));
        }
    }
    let h = fd_hessian_tensor(chain, q, FD_HESSIAN_STEP)?;
    let total = dq1 + dq2;
    let exact = h.bilinear(&total, &total) * 0.5 - h.bilinear(dq1, dq2);
    let (a, b) = (dq1.norm(), dq2.norm());
    Ok(ErrorTerm { exact, bound: 0.5 * l_h * (a * a + b * b + a * b) })
}

/// Uniform sample of the joint position box.
pub fn random_configuration(rng: &mut impl Rng, lim: &LimitVectors) -> DVector<f64> {
    DVector::from_fn(lim.len(), |i, _| rng.random_range(lim.q_lower[i]..=lim.q_upper[i]))
}

/// Random direction scaled to `norm`.
fn random_vector(rng: &mut impl Rng, n: usize, norm: f64) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        let len = v.norm();
        if len > 1e-3 {
            return v * (norm / len);
        }
    }
}

/// Sampled derivative bounds of the kinematics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeBounds {
    /// Bound on the Jacobian derivative (also the Hessian bound).
    pub l_h: f64,
    /// Bound on the derivative of `Jdot` with respect to `q`, at joint speeds within the box.
    pub l_jdot: f64,
    pub samples: usize,
}

/// Maximum of [`HessianTensor::norm_bound`] (and of the same bound for
/// `dJdot/dq`) over `samples` uniform configurations.
pub fn estimate_derivative_bounds(chain: &ChainModel, samples: usize, seed: u64) -> Result<DerivativeBounds> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lim = chain.limits();
    let n = chain.dof();
    let (mut l_h, mut l_jdot) = (0.0_f64, 0.0_f64);
    for _ in 0..samples {
        let q = random_configuration(&mut rng, &lim);
        l_h = l_h.max(fd_hessian_tensor(chain, &q, FD_HESSIAN_STEP)?.norm_bound());
        let qd = DVector::from_fn(n, |i, _| rng.random_range(-lim.qd_max[i]..=lim.qd_max[i]));
        let h = FD_HESSIAN_STEP;
        let slices = (0..n)
            .map(|i| {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i] += h;
                qm[i] -= h;
                Ok((chain::jacobian_dot(chain, &qp, &qd)? - chain::jacobian_dot(chain, &qm, &qd)?) / (2.0 * h))
            })
            .collect::<Result<Vec<_>>>()?;
        l_jdot = l_jdot.max(HessianTensor { slices }.norm_bound());
    }
    Ok(DerivativeBounds { l_h, l_jdot, samples })
}

/// Analytic-versus-difference agreement over random states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicsCheck {
    pub states: usize,
    /// Max over states of `max|J - J_fd| / max(max|J|, 1)`.
    pub jacobian_rel: f64,
    pub jacobian_dot_rel: f64,
    /// Max over states of the position-row asymmetry of the Hessian tensor.
    pub hessian_asymmetry: f64,
    /// Min over states of `err(2h) / err(h)` for the difference Jacobian; about 4.
    pub richardson_ratio: f64,
}

pub type JacobianFn<'a> = &'a dyn Fn(&ChainModel, &DVector<f64>) -> Result<DMatrix<f64>>;

/// [`kinematics_check_with`] against the chain's analytic Jacobian.
pub fn kinematics_check(chain: &ChainModel, states: usize, seed: u64) -> Result<KinematicsCheck> {
    kinematics_check_with(chain, states, seed, &|c, q| chain::jacobian(c, q))
}

/// Compares `jacobian` with [`fd_jacobian`] and the analytic `Jdot` with
/// [`fd_jacobian_dot`] at `states` random joint states.
pub fn kinematics_check_with(chain: &ChainModel, states: usize, seed: u64, jacobian: JacobianFn<'_>) -> Result<KinematicsCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lim = chain.limits();
    let n = chain.dof();
    let mut out = KinematicsCheck {
        states,
        jacobian_rel: 0.0,
        jacobian_dot_rel: 0.0,
        hessian_asymmetry: 0.0,
        richardson_ratio: f64::INFINITY,
    };
    let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax() / a.amax().max(1.0);
    for _ in 0..states {
        let q = random_configuration(&mut rng, &lim);
        let qd = DVector::from_fn(n, |i, _| rng.random_range(-lim.qd_max[i]..=lim.qd_max[i]));
        let j = jacobian(chain, &q)?;
        out.jacobian_rel = out.jacobian_rel.max(rel(&j, &fd_jacobian(chain, &q, FD_STEP)?));
        let jd = chain::jacobian_dot(chain, &q, &qd)?;
        out.jacobian_dot_rel = out.jacobian_dot_rel.max(rel(&jd, &fd_jacobian_dot(chain, &q, &qd, FD_STEP)?));
        out.hessian_asymmetry = out.hessian_asymmetry.max(fd_hessian_tensor(chain, &q, FD_HESSIAN_STEP)?.position_asymmetry());
        let coarse = (&j - fd_jacobian(chain, &q, 2e-3)?).amax();
        let fine = (&j - fd_jacobian(chain, &q, 1e-3)?).amax();
        if fine > 1e-12 {
            out.richardson_ratio = out.richardson_ratio.min(coarse / fine);
        }
    }
    Ok(out)
}

/// Sampled check of the second-order error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub samples: usize,
    pub violations: usize,
    /// Largest `|E| / bound`; below 1 when nothing is violated.
    pub max_ratio: f64,
    pub l_h: f64,
}

/// Draws `samples` configurations and joint steps up to the guard and
/// compares `|E|` with its bound, using `l_h` from [`estimate_derivative_bounds`].
pub fn error_bound_check(chain: &ChainModel, samples: usize, seed: u64, l_h: f64) -> Result<BoundCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lim = chain.limits();
    let n = chain.dof();
    let mut out = BoundCheck { samples, violations: 0, max_ratio: 0.0, l_h };
    for _ in 0..samples {
        let q = random_configuration(&mut rng, &lim);
        let a = rng.random_range(0.0..=ERROR_TERM_GUARD);
        let b = rng.random_range(0.0..=ERROR_TERM_GUARD);
        let dq1 = random_vector(&mut rng, n, a);
        let dq2 = random_vector(&mut rng, n, b);
        let e = error_term(chain, &q, &dq1, &dq2, l_h)?;
        let norm = e.exact.norm();
        if norm > e.bound {
            out.violations += 1;
        }
        if e.bound > 0.0 {
            out.max_ratio = out.max_ratio.max(norm / e.bound);
        }
    }
    Ok(out)
}

/// Settings of the prediction-order experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderExperimentConfig {
    /// Per-step joint motion `|qd| tau`, strictly decreasing.
    pub step_sizes: Vec<f64>,
    pub trials: usize,
    /// Steps per trial.
    pub horizon: usize,
    /// Joint speed of the high-level motion; fixes `tau = step / speed`.
    pub speed: f64,
    /// Low-level deviation from the high-level input, relative, at `reference_step`.
    pub deviation: f64,
    pub reference_step: f64,
    pub seed: u64,
}

impl Default for OrderExperimentConfig {
    fn default() -> Self {
        Self {
            step_sizes: vec![0.04, 0.02, 0.01, 0.005],
            trials: 200,
            horizon: 10,
            speed: 2.0,
            deviation: 0.1,
            reference_step: 0.02,
            seed: 0,
        }
    }
}

impl OrderExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_sizes.len() < 3 {
            return Err(Error::Oracle(format!("need at least 3 step sizes, got {}", self.step_sizes.len())));
        }
        if self.step_sizes.windows(2).any(|w| !(w[1] < w[0])) || self.step_sizes.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::Oracle("step sizes must be positive and strictly decreasing".into()));
        }
        if self.trials < 50 {
            return Err(Error::Oracle(format!("need at least 50 trials, got {}", self.trials)));
        }
        if self.horizon == 0 || !(self.speed > 0.0) {
            return Err(Error::Oracle("horizon and speed must be positive".into()));
        }
        Ok(())
    }
}

/// Errors of one model section at every step size.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSection {
    /// Mean per-step error of the model re-linearized along the high-level rollout.
    pub relinearized: Vec<f64>,
    /// Mean per-step error of the model frozen at the initial state.
    pub frozen: Vec<f64>,
    /// Fraction of trials where the re-linearized error is the smaller one.
    pub win_rate: Vec<f64>,
    /// Log-log least-squares slopes; `None` if the fit is degenerate.
    pub relinearized_slope: Option<f64>,
    pub frozen_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderExperimentReport {
    pub step_sizes: Vec<f64>,
    pub trials: usize,
    /// Largest `|dq|^2` of a single step, the scale of the neglected terms.
    pub neglected_term_scale: Vec<f64>,
    /// One-step tool displacement predictions.
    pub velocity: OrderSection,
    /// Tool acceleration predictions.
    pub acceleration: OrderSection,
}

impl OrderExperimentReport {
    pub const CSV_HEADER: [&'static str; 7] =
        ["section", "step_size", "relinearized_error", "frozen_error", "win_rate", "neglected_term_scale", "trials"];

    /// Plot-ready rows matching [`Self::CSV_HEADER`].
    pub fn csv_rows(&self) -> Vec<[String; 7]> {
        let mut rows = Vec::new();
        for (name, s) in [("velocity", &self.velocity), ("acceleration", &self.acceleration)] {
            for (k, h) in self.step_sizes.iter().enumerate() {
                rows.push([
                    name.to_string(),
                    format!("{h:e}"),
                    format!("{:e}", s.relinearized[k]),
                    format!("{:e}", s.frozen[k]),
                    format!("{}", s.win_rate[k]),
                    format!("{:e}", self.neglected_term_scale[k]),
                    self.trials.to_string(),
                ]);
            }
        }
        rows
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || y.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx <= 0.0 || syy <= 1e-24 {
        return None;
    }
    Some(sxy / sxx)
}

/// Tool acceleration `J qdd + Jdot qd`.
fn tool_acceleration(chain: &ChainModel, q: &DVector<f64>, qd: &DVector<f64>, qdd: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(chain::jacobian(chain, q)? * qdd + chain::jacobian_dot(chain, q, qd)? * qd)
}

/// Tool pose displacement: position difference and world rotation vector.
fn pose_delta(chain: &ChainModel, from: &DVector<f64>, to: &DVector<f64>) -> Result<DVector<f64>> {
    let (p0, r0) = chain::forward_kinematics(chain, from)?;
    let (p1, r1) = chain::forward_kinematics(chain, to)?;
    let dw: Vector3<f64> = so3::log(&(r1 * r0.transpose()));
    Ok(DVector::from_iterator(6, (p1 - p0).iter().chain(dw.iter()).copied()))
}

/// Per-trial inputs: the high-level rollout and the low-level inputs.
struct Trial {
    q0: DVector<f64>,
    qd0: DVector<f64>,
    high: Vec<DVector<f64>>,
    low: Vec<DVector<f64>>,
}

fn draw_trial(rng: &mut ChaCha8Rng, chain: &ChainModel, cfg: &OrderExperimentConfig, step: f64) -> Trial {
    let n = chain.dof();
    let lim = chain.limits();
    let q0 = random_configuration(rng, &lim) * 0.8;
    let qd0 = random_vector(rng, n, cfg.speed);
    let qdd = DVector::from_fn(n, |i, _| rng.random_range(-lim.qdd_max[i]..=lim.qdd_max[i]));
    let tau = step / cfg.speed;
    let scale = cfg.deviation * step / cfg.reference_step;
    let mut high = Vec::with_capacity(cfg.horizon);
    let mut low = Vec::with_capacity(cfg.horizon);
    let mut qd = qd0.clone();
    for _ in 0..cfg.horizon {
        let mut u1 = DVector::zeros(2 * n);
        u1.rows_mut(0, n).copy_from(&qd);
        u1.rows_mut(n, n).copy_from(&qdd);
        let dv = random_vector(rng, n, scale * cfg.speed);
        let da = DVector::from_fn(n, |i, _| scale * rng.random_range(-lim.qdd_max[i]..=lim.qdd_max[i]));
        let mut u2 = u1.clone();
        u2.rows_mut(0, n).add_assign(&dv);
        u2.rows_mut(n, n).add_assign(&da);
        qd = &qd + &qdd * tau;
        high.push(u1);
        low.push(u2);
    }
    Trial { q0, qd0, high, low }
}

/// Prediction-order experiment.
///
/// Each trial draws a high-level motion at joint speed `speed` with a
/// bounded constant acceleration, and a low-level input deviating from it
/// by `deviation * step / reference_step`. The true motion is the plant
/// rollout of the low-level input. Per step, the tool displacement
/// `tau v + 1/2 tau^2 a` with `[v; a] = B_kin u` and the tool acceleration
/// are predicted with `B_kin` either re-linearized at the high-level state
/// of that step or frozen at the initial state.
pub fn run_order_experiment(chain: &ChainModel, cfg: &OrderExperimentConfig) -> Result<OrderExperimentReport> {
    cfg.validate()?;
    let n = chain.dof();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut vel = OrderSection::empty();
    let mut acc = OrderSection::empty();
    let mut neglected = Vec::new();
    for &step in &cfg.step_sizes {
        let tau = step / cfg.speed;
        let (mut vr, mut vf, mut vw, mut ar, mut af, mut aw) = (0.0, 0.0, 0, 0.0, 0.0, 0);
        let mut scale = 0.0_f64;
        for _ in 0..cfg.trials {
            let t = draw_trial(&mut rng, chain, cfg, step);
            let frozen = JointState::new(t.q0.clone(), t.qd0.clone());
            let b_frozen = chain::build_b_kin(chain, &frozen)?;
            let (mut q1, mut qd1) = (t.q0.clone(), t.qd0.clone());
            let (mut q2, mut qd2) = (t.q0.clone(), t.qd0.clone());
            let (mut er, mut ef, mut ear, mut eaf) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..cfg.horizon {
                let u2 = &t.low[i];
                let b_relin = chain::build_b_kin(chain, &JointState::new(q1.clone(), qd1.clone()))?;
                let (q2n, qd2n) = integrate_joints(&q2, &qd2, u2, tau);
                scale = scale.max((&q2n - &q2).norm_squared());
                let truth = pose_delta(chain, &q2, &q2n)?;
                let predict = |b: &DMatrix<f64>| {
                    let va = b * u2;
                    va.rows(0, 6) * tau + va.rows(6, 6) * (0.5 * tau * tau)
                };
                er += (&truth - predict(&b_relin)).norm();
                ef += (&truth - predict(&b_frozen)).norm();
                let (v2, a2) = (u2.rows(0, n).into_owned(), u2.rows(n, n).into_owned());
                let acc_truth = tool_acceleration(chain, &q2, &v2, &a2)?;
                ear += (&acc_truth - b_relin.rows(6, 6) * u2).norm();
                eaf += (&acc_truth - b_frozen.rows(6, 6) * u2).norm();
                (q2, qd2) = (q2n, qd2n);
                (q1, qd1) = integrate_joints(&q1, &qd1, &t.high[i], tau);
            }
            let m = cfg.horizon as f64;
            vr += er / m;
            vf += ef / m;
            ar += ear / m;
            af += eaf / m;
            vw += usize::from(er < ef);
            aw += usize::from(ear < eaf);
        }
        let trials = cfg.trials as f64;
        vel.push(vr / trials, vf / trials, vw as f64 / trials);
        acc.push(ar / trials, af / trials, aw as f64 / trials);
        neglected.push(scale);
    }
    vel.fit(&cfg.step_sizes);
    acc.fit(&cfg.step_sizes);
    Ok(OrderExperimentReport {
        step_sizes: cfg.step_sizes.clone(),
        trials: cfg.trials,
        neglected_term_scale: neglected,
        velocity: vel,
        acceleration: acc,
    })
}

impl OrderSection {
    fn empty() -> Self {
        Self {
            relinearized: Vec::new(),
            frozen: Vec::new(),
            win_rate: Vec::new(),
            relinearized_slope: None,
            frozen_slope: None,
        }
    }

    fn push(&mut self, relinearized: f64, frozen: f64, win_rate: f64) {
        self.relinearized.push(relinearized);
        self.frozen.push(frozen);
        self.win_rate.push(win_rate);
    }

    fn fit(&mut self, steps: &[f64]) {
        self.relinearized_slope = log_log_slope(steps, &self.relinearized);
        self.frozen_slope = log_log_slope(steps, &self.frozen);
    }

    pub fn min_win_rate(&self) -> f64 {
        self.win_rate.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Check of the tool-acceleration error bound with a fitted constant.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelerationBoundCheck {
    /// `1.5 x` the largest ratio observed on the first seed.
    pub constant: f64,
    pub seeds: Vec<u64>,
    pub samples_per_seed: usize,
    /// Violations per seed; the first seed is the fitting seed.
    pub violations: Vec<usize>,
    pub max_ratio: Vec<f64>,
}

/// Samples `(|E_acc|, |dq1| |qdd1| + |dq1| |qd1|)` pairs, where `E_acc` is
/// the tool-acceleration error of the frozen model at a state reached by
/// the high-level rollout and `dq1` is the joint motion since the freeze.
fn acceleration_samples(chain: &ChainModel, samples: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lim = chain.limits();
    let n = chain.dof();
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let q0 = random_configuration(&mut rng, &lim) * 0.8;
        let speed = rng.random_range(0.1..=2.0);
        let qd0 = random_vector(&mut rng, n, speed);
        let qdd = DVector::from_fn(n, |i, _| rng.random_range(-lim.qdd_max[i]..=lim.qdd_max[i]));
        let steps = rng.random_range(1..=10);
        let tau = rng.random_range(0.0025..=0.02);
        let b_frozen = chain::build_b_kin(chain, &JointState::new(q0.clone(), qd0.clone()))?;
        let (mut q, mut qd) = (q0.clone(), qd0.clone());
        let mut u = DVector::zeros(2 * n);
        for _ in 0..steps {
            u.rows_mut(0, n).copy_from(&qd);
            u.rows_mut(n, n).copy_from(&qdd);
            (q, qd) = integrate_joints(&q, &qd, &u, tau);
        }
        u.rows_mut(0, n).copy_from(&qd);
        let truth = tool_acceleration(chain, &q, &qd, &qdd)?;
        let err = (truth - b_frozen.rows(6, 6) * &u).norm();
        let dq = (&q - &q0).norm();
        out.push((err, dq * qdd.norm() + dq * qd.norm()));
    }
    Ok(out)
}

/// Fits the constant on `seeds[0]` and checks all seeds against it.
pub fn acceleration_bound_check(chain: &ChainModel, samples: usize, seeds: &[u64]) -> Result<AccelerationBoundCheck> {
    let Some(&first) = seeds.first() else {
        return Err(Error::Oracle("need at least one seed".into()));
    };
    let ratio = |(e, s): (f64, f64)| if s > 0.0 { e / s } else if e > 0.0 { f64::INFINITY } else { 0.0 };
    let fit = acceleration_samples(chain, samples, first)?.into_iter().map(ratio).fold(0.0, f64::max);
    let constant = 1.5 * fit;
    let mut violations = Vec::new();
    let mut max_ratio = Vec::new();
    for &seed in seeds {
        let s = acceleration_samples(chain, samples, seed)?;
        violations.push(s.iter().filter(|&&(e, b)| e > constant * b).count());
        max_ratio.push(s.into_iter().map(ratio).fold(0.0, f64::max));
    }
    Ok(AccelerationBoundCheck { constant, seeds: seeds.to_vec(), samples_per_seed: samples, violations, max_ratio })
}
