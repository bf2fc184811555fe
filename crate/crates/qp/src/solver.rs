use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{QpError, QpProblem};

/// Smallest Hessian eigenvalue accepted as "numerically PSD".
pub const PSD_TOL: f64 = -1e-8;
/// Diagonal shift applied to PSD-but-singular Hessians.
pub const REGULARIZATION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub max_iter: usize,
    /// Allowed violation of a normalized constraint before it is considered
    /// for the working set.
    pub feasibility_tol: f64,
    /// Relative threshold under which a constraint normal is treated as
    /// linearly dependent on the working set.
    pub dependency_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { max_iter: 200, feasibility_tol: 1e-10, dependency_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::MaxIterations => "max_iter",
            QpStatus::Infeasible => "infeasible",
        }
    }
}

/// A bound or constraint row held with equality at the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveConstraint {
    Lower(usize),
    Upper(usize),
    Equality(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub objective: f64,
    pub solve_time: Duration,
    /// Multipliers with the convention `Hx + g + A'λ + μ = 0`.
    pub bound_multipliers: DVector<f64>,
    pub constraint_multipliers: DVector<f64>,
    /// Indices refer to variables for `0..n` and to constraint rows offset by `n`.
    pub active_set: Vec<ActiveConstraint>,
    /// Diagonal shift that was added to the Hessian, zero for PD problems.
    pub regularization: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Side {
    /// `0..n` for variable bounds, `n..n+m` for rows of `A`.
    row: usize,
    /// Upper sides are stored as `-a'x >= -u`.
    upper: bool,
    equality: bool,
}

impl Side {
    fn sign(&self) -> f64 {
        if self.upper {
            -1.0
        } else {
            1.0
        }
    }

    fn slot(&self) -> usize {
        2 * self.row + usize::from(self.upper)
    }
}

enum AddOutcome {
    Added,
    Dependent,
    Infeasible,
}

/// Dual active-set solver (Goldfarb-Idnani) for strictly convex dense QPs.
///
/// The factorization `J = L^{-T} Q` with `J' N_A = [R; 0]` is updated with
/// Givens rotations as constraints enter and leave the working set, so each
/// iteration costs `O(n^2)` after the initial Cholesky factorization.
///
/// One solve at a time per instance; the workspace is reused between calls.
#[derive(Debug, Clone, Default)]
pub struct ActiveSetSolver {
    pub settings: QpSettings,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    x: DVector<f64>,
    active: Vec<Side>,
    mult: Vec<f64>,
    is_active: Vec<bool>,
}

struct Prepared<'a> {
    p: &'a QpProblem,
    /// `L^{-T}` of the (possibly regularized) Hessian.
    j0: DMatrix<f64>,
    x0: DVector<f64>,
    row_norms: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    regularization: f64,
}

impl<'a> Prepared<'a> {
    fn n(&self) -> usize {
        self.p.num_variables()
    }

    fn normal(&self, side: Side) -> DVector<f64> {
        let n = self.n();
        let mut v = if side.row < n {
            let mut e = DVector::zeros(n);
            e[side.row] = 1.0;
            e
        } else {
            self.p.constraints.row(side.row - n).transpose()
        };
        if side.upper {
            v.neg_mut();
        }
        v
    }

    fn row_dot(&self, row: usize, x: &DVector<f64>) -> f64 {
        let n = self.n();
        if row < n {
            x[row]
        } else {
            self.p.constraints.row(row - n).transpose().dot(x)
        }
    }

    fn rhs(&self, side: Side) -> f64 {
        if side.upper {
            -self.upper[side.row]
        } else {
            self.lower[side.row]
        }
    }

    fn slack(&self, side: Side, x: &DVector<f64>) -> f64 {
        side.sign() * self.row_dot(side.row, x) - self.rhs(side)
    }
}

impl ActiveSetSolver {
    pub fn new(settings: QpSettings) -> Self {
        Self { settings, ..Default::default() }
    }

    /// Solves `p`, optionally seeding the working set from the constraints
    /// that are active at `warm_start`.
    ///
    /// A warm start never changes the returned minimizer, only the path to it:
    /// if the guessed working set is not dual feasible the solver falls back to
    /// a cold start.
    pub fn solve(
        &mut self,
        p: &QpProblem,
        warm_start: Option<&DVector<f64>>,
    ) -> Result<QpSolution, QpError> {
        let start = Instant::now();
        p.validate()?;
        let n = p.num_variables();
        let m = p.num_constraints();
        if let Some(w) = warm_start {
            if w.len() != n {
                return Err(QpError::Dimension(format!("warm start has length {}, expected {}", w.len(), n)));
            }
        }
        let prep = prepare(p)?;
        let zero_row_infeasible = (0..n + m).any(|row| {
            prep.row_norms[row] == 0.0 && (prep.lower[row] > 0.0 || prep.upper[row] < 0.0)
        });

        let eq_sides: Vec<Side> = (0..n + m)
            .filter(|&row| prep.lower[row] == prep.upper[row])
            .map(|row| Side { row, upper: false, equality: true })
            .collect();

        let mut iterations = 0;
        self.reset(&prep);
        let mut feasible =
            !zero_row_infeasible && self.add_equalities(&prep, &eq_sides, &mut iterations);

        if feasible {
            if let Some(w) = warm_start {
                let guessed = self.guess_working_set(&prep, w);
                for side in guessed {
                    if let AddOutcome::Infeasible = self.add_constraint(&prep, side, true) {
                        break;
                    }
                    iterations += 1;
                }
                let dual_feasible = self
                    .active
                    .iter()
                    .zip(&self.mult)
                    .all(|(s, u)| s.equality || *u >= -1e-12);
                if !dual_feasible {
                    self.reset(&prep);
                    feasible = self.add_equalities(&prep, &eq_sides, &mut iterations);
                }
            }
        }

        let mut status = if feasible { QpStatus::Optimal } else { QpStatus::Infeasible };
        if feasible {
            loop {
                let Some(side) = self.most_violated(&prep) else {
                    status = QpStatus::Optimal;
                    break;
                };
                if iterations >= self.settings.max_iter {
                    status = QpStatus::MaxIterations;
                    break;
                }
                iterations += 1;
                match self.add_constraint(&prep, side, false) {
                    AddOutcome::Added => {}
                    AddOutcome::Dependent | AddOutcome::Infeasible => {
                        status = QpStatus::Infeasible;
                        break;
                    }
                }
            }
        }

        let mut bound_multipliers = DVector::zeros(n);
        let mut constraint_multipliers = DVector::zeros(m);
        let mut active_set = Vec::with_capacity(self.active.len());
        for (side, u) in self.active.iter().zip(&self.mult) {
            let value = -side.sign() * u;
            if side.row < n {
                bound_multipliers[side.row] += value;
            } else {
                constraint_multipliers[side.row - n] += value;
            }
            active_set.push(if side.equality {
                ActiveConstraint::Equality(side.row)
            } else if side.upper {
                ActiveConstraint::Upper(side.row)
            } else {
                ActiveConstraint::Lower(side.row)
            });
        }
        let x = self.x.clone();
        Ok(QpSolution {
            objective: p.objective(&x),
            x,
            status,
            iterations,
            solve_time: start.elapsed(),
            bound_multipliers,
            constraint_multipliers,
            active_set,
            regularization: prep.regularization,
        })
    }

    fn reset(&mut self, prep: &Prepared) {
        let n = prep.n();
        self.j = prep.j0.clone();
        self.r = DMatrix::zeros(n, n);
        self.x = prep.x0.clone();
        self.active.clear();
        self.mult.clear();
        self.is_active = vec![false; 2 * prep.lower.len()];
    }

    fn add_equalities(&mut self, prep: &Prepared, eq: &[Side], iterations: &mut usize) -> bool {
        for &side in eq {
            let mut side = side;
            // Orient the equality so the step towards it is non-negative.
            if prep.slack(side, &self.x) > 0.0 {
                side.upper = true;
            }
            *iterations += 1;
            match self.add_constraint(prep, side, false) {
                AddOutcome::Added => {}
                AddOutcome::Dependent => {
                    if prep.slack(side, &self.x).abs() > 1e-9 * (1.0 + prep.rhs(side).abs()) {
                        return false;
                    }
                }
                AddOutcome::Infeasible => return false,
            }
        }
        true
    }

    fn guess_working_set(&self, prep: &Prepared, w: &DVector<f64>) -> Vec<Side> {
        let mut guess = Vec::new();
        for row in 0..prep.lower.len() {
            if prep.lower[row] == prep.upper[row] {
                continue;
            }
            let ax = prep.row_dot(row, w);
            let scale = prep.row_norms[row].max(1.0);
            for (upper, bound) in [(false, prep.lower[row]), (true, prep.upper[row])] {
                if bound.is_finite() && (ax - bound).abs() <= 1e-9 * scale * (1.0 + bound.abs()) {
                    guess.push(Side { row, upper, equality: false });
                    break;
                }
            }
        }
        guess
    }

    fn most_violated(&self, prep: &Prepared) -> Option<Side> {
        let n = prep.n();
        let ax = &prep.p.constraints * &self.x;
        let mut best: Option<Side> = None;
        let mut best_val = -self.settings.feasibility_tol;
        for row in 0..prep.lower.len() {
            let (lo, up) = (prep.lower[row], prep.upper[row]);
            if lo == up {
                continue;
            }
            let value = if row < n { self.x[row] } else { ax[row - n] };
            let norm = prep.row_norms[row];
            if norm == 0.0 {
                continue;
            }
            if lo.is_finite() && !self.is_active[2 * row] {
                let s = (value - lo) / norm;
                if s < best_val {
                    best_val = s;
                    best = Some(Side { row, upper: false, equality: false });
                }
            }
            if up.is_finite() && !self.is_active[2 * row + 1] {
                let s = (up - value) / norm;
                if s < best_val {
                    best_val = s;
                    best = Some(Side { row, upper: true, equality: false });
                }
            }
        }
        best
    }

    /// Moves `x` and the multipliers until `side` holds with equality, dropping
    /// constraints whose multiplier would turn negative on the way.
    ///
    /// With `forced`, the full step is taken regardless of its sign and no
    /// constraint is dropped.
    fn add_constraint(&mut self, prep: &Prepared, side: Side, forced: bool) -> AddOutcome {
        let n = prep.n();
        let np = prep.normal(side);
        let b = prep.rhs(side);
        let mut up = 0.0;
        loop {
            let q = self.active.len();
            let s = np.dot(&self.x) - b;
            let mut d = self.j.tr_mul(&np);
            let z = self.j.columns(q, n - q) * d.rows(q, n - q);
            let rvec = self.back_substitute(&d, q);
            let zn = z.dot(&np);
            let full_ok = zn > self.settings.dependency_tol * d.norm_squared() && zn > 0.0;

            let mut t1 = f64::INFINITY;
            let mut drop_at = usize::MAX;
            if !forced {
                for k in 0..q {
                    if !self.active[k].equality && rvec[k] > 0.0 {
                        let ratio = self.mult[k] / rvec[k];
                        if ratio < t1 {
                            t1 = ratio;
                            drop_at = k;
                        }
                    }
                }
            }

            if !full_ok {
                if forced || side.equality || t1.is_infinite() {
                    return if forced || side.equality {
                        AddOutcome::Dependent
                    } else {
                        AddOutcome::Infeasible
                    };
                }
                for k in 0..q {
                    self.mult[k] -= t1 * rvec[k];
                }
                up += t1;
                self.drop_constraint(drop_at);
                continue;
            }

            let t2 = -s / zn;
            let t = if forced { t2 } else { t1.min(t2) };
            self.x.axpy(t, &z, 1.0);
            for k in 0..q {
                self.mult[k] -= t * rvec[k];
            }
            up += t;
            if forced || t2 <= t1 {
                self.push_factorization(&mut d, q);
                self.active.push(side);
                self.mult.push(up);
                self.is_active[side.slot()] = true;
                return AddOutcome::Added;
            }
            self.mult[drop_at] = 0.0;
            self.drop_constraint(drop_at);
        }
    }

    /// Solves `R[..q, ..q] r = d[..q]`.
    fn back_substitute(&self, d: &DVector<f64>, q: usize) -> Vec<f64> {
        let mut r = vec![0.0; q];
        for i in (0..q).rev() {
            let mut acc = d[i];
            for k in i + 1..q {
                acc -= self.r[(i, k)] * r[k];
            }
            r[i] = acc / self.r[(i, i)];
        }
        r
    }

    fn push_factorization(&mut self, d: &mut DVector<f64>, q: usize) {
        let n = d.len();
        for col in (q + 1..n).rev() {
            let (a, b) = (d[col - 1], d[col]);
            if b == 0.0 {
                continue;
            }
            let (c, s, h) = givens(a, b);
            d[col - 1] = h;
            d[col] = 0.0;
            rotate_columns(&mut self.j, col - 1, col, c, s);
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
    }

    fn drop_constraint(&mut self, l: usize) {
        let q = self.active.len();
        for col in l..q - 1 {
            for i in 0..q {
                self.r[(i, col)] = self.r[(i, col + 1)];
            }
        }
        for i in 0..q {
            self.r[(i, q - 1)] = 0.0;
        }
        for k in l..q.saturating_sub(1) {
            let (a, b) = (self.r[(k, k)], self.r[(k + 1, k)]);
            if b == 0.0 {
                continue;
            }
            let (c, s, h) = givens(a, b);
            for col in k..q - 1 {
                let (x, y) = (self.r[(k, col)], self.r[(k + 1, col)]);
                self.r[(k, col)] = c * x + s * y;
                self.r[(k + 1, col)] = -s * x + c * y;
            }
            self.r[(k, k)] = h;
            self.r[(k + 1, k)] = 0.0;
            rotate_columns(&mut self.j, k, k + 1, c, s);
        }
        let side = self.active.remove(l);
        self.mult.remove(l);
        self.is_active[side.slot()] = false;
    }
}

/// Convenience wrapper around a fresh [`ActiveSetSolver`] with default settings.
pub fn solve_qp(p: &QpProblem, warm_start: Option<&DVector<f64>>) -> Result<QpSolution, QpError> {
    ActiveSetSolver::default().solve(p, warm_start)
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let h = a.hypot(b);
    (a / h, b / h, h)
}

fn rotate_columns(m: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for row in 0..m.nrows() {
        let (a, b) = (m[(row, i)], m[(row, j)]);
        m[(row, i)] = c * a + s * b;
        m[(row, j)] = -s * a + c * b;
    }
}

fn prepare(p: &QpProblem) -> Result<Prepared<'_>, QpError> {
    let n = p.num_variables();
    let m = p.num_constraints();
    let mut h = (&p.hessian + p.hessian.transpose()) * 0.5;
    let mut regularization = 0.0;
    let chol = match h.clone().cholesky() {
        Some(c) => c,
        None => {
            let min_eig = SymmetricEigen::new(h.clone()).eigenvalues.min();
            if min_eig < PSD_TOL {
                return Err(QpError::NotConvex(min_eig));
            }
            regularization = REGULARIZATION - min_eig.min(0.0);
            for i in 0..n {
                h[(i, i)] += regularization;
            }
            h.clone().cholesky().ok_or(QpError::NotConvex(min_eig))?
        }
    };
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(QpError::NotConvex(0.0))?;
    let j0 = l_inv.transpose();
    let x0 = -(&j0 * (j0.tr_mul(&p.gradient)));

    let mut row_norms = vec![1.0; n];
    row_norms.extend(p.constraints.row_iter().map(|r| r.norm()));
    let mut lower: Vec<f64> = p.lower.iter().copied().collect();
    lower.extend(p.constraint_lower.iter());
    let mut upper: Vec<f64> = p.upper.iter().copied().collect();
    upper.extend(p.constraint_upper.iter());
    debug_assert_eq!(lower.len(), n + m);
    Ok(Prepared { p, j0, x0, row_norms, lower, upper, regularization })
}
