//! Reference problems and an independent solver used to check [`crate::ActiveSetSolver`].

use nalgebra::{DMatrix, DVector};

use crate::{QpProblem, QpStatus};

/// Hand-built problem with a known answer.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub problem: QpProblem,
    pub status: QpStatus,
    /// Minimizer, present when `status` is optimal.
    pub solution: Option<DVector<f64>>,
}

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}

fn dm(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v)
}

/// Distance-to-point objective `1/2 |x - c|^2`.
fn projection(c: &[f64]) -> QpProblem {
    QpProblem::new(DMatrix::identity(c.len(), c.len()), -dv(c))
}

const INF: f64 = f64::INFINITY;

fn optimal(name: &'static str, problem: QpProblem, x: &[f64]) -> Fixture {
    Fixture { name, problem, status: QpStatus::Optimal, solution: Some(dv(x)) }
}

/// Twenty small problems whose solutions follow by hand.
pub fn fixtures() -> Vec<Fixture> {
    let third = 1.0 / 3.0;
    vec![
        optimal(
            "clipped_scalar",
            QpProblem::new(dm(1, 1, &[2.0]), dv(&[-2.0])).with_bounds(dv(&[0.0]), dv(&[0.5])),
            &[0.5],
        ),
        optimal("free_identity", QpProblem::new(DMatrix::identity(3, 3), DVector::zeros(3)), &[0.0; 3]),
        optimal(
            "free_diagonal",
            QpProblem::new(DMatrix::from_diagonal(&dv(&[1.0, 2.0, 4.0])), dv(&[-1.0, -2.0, -4.0])),
            &[1.0, 1.0, 1.0],
        ),
        optimal(
            "box_upper",
            projection(&[3.0, 3.0]).with_bounds(dv(&[-1.0, -1.0]), dv(&[1.0, 1.0])),
            &[1.0, 1.0],
        ),
        optimal(
            "box_mixed",
            projection(&[-3.0, 0.5]).with_bounds(dv(&[-1.0, -1.0]), dv(&[1.0, 1.0])),
            &[-1.0, 0.5],
        ),
        optimal(
            "sum_equality",
            projection(&[0.0; 4]).with_constraints(dm(1, 4, &[1.0; 4]), dv(&[1.0]), dv(&[1.0])),
            &[0.25; 4],
        ),
        optimal(
            "two_equalities",
            projection(&[0.0; 3]).with_constraints(
                dm(2, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]),
                dv(&[1.0, 1.0]),
                dv(&[1.0, 1.0]),
            ),
            &[third, 2.0 * third, third],
        ),
        optimal(
            "halfspace_active",
            projection(&[2.0, 2.0]).with_constraints(dm(1, 2, &[1.0, 1.0]), dv(&[-INF]), dv(&[1.0])),
            &[0.5, 0.5],
        ),
        optimal(
            "halfspace_inactive",
            projection(&[0.2, 0.3]).with_constraints(dm(1, 2, &[1.0, 1.0]), dv(&[-INF]), dv(&[1.0])),
            &[0.2, 0.3],
        ),
        optimal(
            "strip_lower",
            projection(&[-2.0, 0.0]).with_constraints(dm(1, 2, &[1.0, -1.0]), dv(&[-1.0]), dv(&[1.0])),
            &[-1.5, -0.5],
        ),
        optimal(
            "simplex",
            projection(&[0.8, 0.6, -0.2])
                .with_bounds(DVector::zeros(3), DVector::from_element(3, INF))
                .with_constraints(dm(1, 3, &[1.0; 3]), dv(&[1.0]), dv(&[1.0])),
            &[0.6, 0.4, 0.0],
        ),
        optimal(
            "fixed_variable",
            projection(&[1.0, 1.0]).with_bounds(dv(&[0.3, -INF]), dv(&[0.3, INF])),
            &[0.3, 1.0],
        ),
        optimal(
            "duplicated_rows",
            projection(&[2.0, 2.0]).with_constraints(
                dm(3, 2, &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0]),
                dv(&[-INF, -INF, -INF]),
                dv(&[1.0, 1.0, 2.0]),
            ),
            &[0.5, 0.5],
        ),
        optimal(
            "singular_hessian",
            QpProblem::new(DMatrix::from_diagonal(&dv(&[1.0, 0.0])), dv(&[0.0, -1.0]))
                .with_bounds(dv(&[-INF, -INF]), dv(&[INF, 2.0])),
            &[0.0, 2.0],
        ),
        optimal(
            "vertex",
            projection(&[2.0, 2.0])
                .with_bounds(dv(&[-INF, -INF]), dv(&[0.5, INF]))
                .with_constraints(dm(1, 2, &[1.0, 2.0]), dv(&[-INF]), dv(&[1.0])),
            &[0.5, 0.25],
        ),
        optimal(
            "coupled_hessian_box",
            QpProblem::new(dm(2, 2, &[2.0, 1.0, 1.0, 2.0]), dv(&[-1.0, -6.0]))
                .with_bounds(dv(&[-5.0, -5.0]), dv(&[5.0, 1.0])),
            &[0.0, 1.0],
        ),
        optimal(
            "one_sided_bounds",
            projection(&[-1.0, 1.0]).with_bounds(dv(&[0.0, -INF]), dv(&[INF, 0.5])),
            &[0.0, 0.5],
        ),
        optimal(
            "scaled_row",
            projection(&[2.0, 2.0]).with_constraints(dm(1, 2, &[1e3, 1e3]), dv(&[-INF]), dv(&[1e3])),
            &[0.5, 0.5],
        ),
        Fixture {
            name: "infeasible",
            problem: projection(&[0.0, 0.0])
                .with_bounds(dv(&[2.0, -1.0]), dv(&[INF, 1.0]))
                .with_constraints(dm(1, 2, &[1.0, 1.0]), dv(&[-INF]), dv(&[0.0])),
            status: QpStatus::Infeasible,
            solution: None,
        },
        optimal(
            "equality_and_bound",
            projection(&[1.0, 2.0, 3.0])
                .with_bounds(DVector::from_element(3, -INF), dv(&[INF, INF, 1.5]))
                .with_constraints(dm(1, 3, &[1.0; 3]), dv(&[3.0]), dv(&[3.0])),
            &[0.25, 1.25, 1.5],
        ),
    ]
}

/// Random strictly convex problem of the given size with a feasible point
/// near the origin.
///
/// `uniform` must return samples from `[0, 1)`.
pub fn random_problem(n: usize, m: usize, uniform: &mut impl FnMut() -> f64) -> QpProblem {
    let mut sym = || 2.0 * uniform() - 1.0;
    let root = DMatrix::from_fn(n, n, |_, _| sym());
    let hessian = root.tr_mul(&root) + DMatrix::identity(n, n) * 0.5;
    let hessian = (&hessian + hessian.transpose()) * 0.5;
    let gradient = DVector::from_fn(n, |_, _| 5.0 * sym());
    let x0 = DVector::from_fn(n, |_, _| sym());
    let a = DMatrix::from_fn(m, n, |_, _| sym());
    let ax0 = &a * &x0;

    let mut gaps = || (0.05 + uniform(), uniform());
    let mut lower = DVector::zeros(n);
    let mut upper = DVector::zeros(n);
    for i in 0..n {
        let (lo, choice) = gaps();
        let (up, _) = gaps();
        lower[i] = if choice < 0.15 { -INF } else { x0[i] - lo };
        upper[i] = if choice > 0.85 { INF } else { x0[i] + up };
    }
    let mut lower_a = DVector::zeros(m);
    let mut upper_a = DVector::zeros(m);
    for i in 0..m {
        let (lo, choice) = gaps();
        let (up, _) = gaps();
        if choice < 0.1 {
            lower_a[i] = ax0[i];
            upper_a[i] = ax0[i];
        } else {
            lower_a[i] = if choice < 0.3 { -INF } else { ax0[i] - lo };
            upper_a[i] = if choice > 0.8 { INF } else { ax0[i] + up };
        }
    }
    QpProblem::new(hessian, gradient).with_bounds(lower, upper).with_constraints(a, lower_a, upper_a)
}

/// Result of [`projected_gradient`].
#[derive(Debug, Clone)]
pub struct DualEstimate {
    /// Primal point recovered from the final multipliers.
    pub x: DVector<f64>,
    /// Dual objective, a lower bound on the optimal value.
    pub dual_objective: f64,
    pub iterations: usize,
}

/// Accelerated projected gradient on the dual of a strictly convex problem.
///
/// Every finite bound becomes a one-sided row `n'x <= c` with multiplier
/// `u >= 0`; projection onto the dual feasible set is a clamp. Iterates until
/// the dual objective improves by less than `tol` over a window of 50
/// iterations, or `max_iter` is reached.
pub fn projected_gradient(p: &QpProblem, tol: f64, max_iter: usize) -> Option<DualEstimate> {
    let n = p.num_variables();
    let chol = p.hessian.clone().cholesky()?;
    let mut normals: Vec<DVector<f64>> = Vec::new();
    let mut rhs = Vec::new();
    let mut one_sided = |normal: DVector<f64>, lo: f64, up: f64| {
        if up.is_finite() {
            normals.push(normal.clone());
            rhs.push(up);
        }
        if lo.is_finite() {
            normals.push(-normal);
            rhs.push(-lo);
        }
    };
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        one_sided(e, p.lower[i], p.upper[i]);
    }
    for i in 0..p.num_constraints() {
        one_sided(p.constraints.row(i).transpose(), p.constraint_lower[i], p.constraint_upper[i]);
    }
    let r = normals.len();
    let hinv_g = chol.solve(&p.gradient);
    if r == 0 {
        let x = -hinv_g;
        return Some(DualEstimate { dual_objective: p.objective(&x), x, iterations: 0 });
    }
    let nmat = DMatrix::from_columns(&normals).transpose();
    let c = DVector::from_vec(rhs);
    let hinv_nt = chol.solve(&nmat.transpose());
    let gram = &nmat * &hinv_nt;
    let lin = &nmat * &hinv_g + &c;
    let offset = 0.5 * p.gradient.dot(&hinv_g);
    // dual (negated): f(u) = 1/2 u'Mu + b'u + 1/2 g'H^-1 g, minimized over u >= 0
    let f = |u: &DVector<f64>| 0.5 * u.dot(&(&gram * u)) + lin.dot(u) + offset;
    let step = 1.0 / gram.symmetric_eigenvalues().amax().max(1e-12);

    let mut u = DVector::zeros(r);
    let mut y = u.clone();
    let mut theta = 1.0_f64;
    let mut value = f(&u);
    let mut checkpoint = value;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let grad = &gram * &y + &lin;
        let next = (&y - grad * step).map(|v| v.max(0.0));
        let next_value = f(&next);
        if next_value > value {
            // adaptive restart
            y = u.clone();
            theta = 1.0;
        } else {
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            y = &next + (&next - &u) * ((theta - 1.0) / theta_next);
            u = next;
            value = next_value;
            theta = theta_next;
        }
        if iterations % 50 == 0 {
            if checkpoint - value < tol {
                break;
            }
            checkpoint = value;
        }
    }
    let x = -chol.solve(&(&p.gradient + nmat.tr_mul(&u)));
    Some(DualEstimate { x, dual_objective: -value, iterations })
}
