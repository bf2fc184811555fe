//! Dense convex quadratic programming.
//!
//! Problems have the form
//!
//! ```text
//!     minimize    1/2 x' H x + g' x
//!     subject to  lb  <=  x  <= ub
//!                 lbA <= A x <= ubA
//! ```
//!
//! and are solved with a dual active-set method that handles bounds and
//! two-sided linear constraints directly. It is meant for the small, dense,
//! repeatedly solved problems that come out of condensed MPC formulations.
//!
//! ```
//! use hmpc_qp::{solve_qp, QpProblem, QpStatus};
//! use nalgebra::{dvector, DMatrix};
//!
//! // min (x - 1)^2  s.t.  0 <= x <= 0.5
//! let p = QpProblem::new(DMatrix::from_element(1, 1, 2.0), dvector![-2.0])
//!     .with_bounds(dvector![0.0], dvector![0.5]);
//! let sol = solve_qp(&p, None).unwrap();
//! assert_eq!(sol.status, QpStatus::Optimal);
//! assert!((sol.x[0] - 0.5).abs() < 1e-12);
//! ```

mod kkt;
mod problem;
pub mod reference;
mod solver;

pub use kkt::{kkt_residuals, residuals_at, KktResiduals};
pub use problem::{QpProblem, SYMMETRY_TOL};
pub use solver::{
    solve_qp, ActiveConstraint, ActiveSetSolver, QpSettings, QpSolution, QpStatus, PSD_TOL,
    REGULARIZATION,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("inconsistent problem dimensions: {0}")]
    Dimension(String),
    #[error("Hessian is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("Hessian is not positive semi-definite (smallest eigenvalue {0:e})")]
    NotConvex(f64),
    #[error("problem data contains NaN or infinite entries")]
    NonFinite,
    #[error("lower bound {lower} exceeds upper bound {upper} at index {index}")]
    BoundOrder { index: usize, lower: f64, upper: f64 },
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector, DMatrix, DVector};

    #[test]
    fn clipped_scalar() {
        let p = QpProblem::new(dmatrix![2.0], dvector![-2.0]).with_bounds(dvector![0.0], dvector![0.5]);
        let sol = solve_qp(&p, None).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 0.5).abs() < 1e-12);
        let res = kkt_residuals(&p, &sol);
        assert!(res.max() <= 1e-8, "{res:?}");
        // multiplier of the active upper bound: 2x - 2 + mu = 0
        assert!((sol.bound_multipliers[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_identity() {
        let p = QpProblem::new(DMatrix::identity(3, 3), DVector::zeros(3));
        let sol = solve_qp(&p, None).unwrap();
        assert_eq!(sol.x, DVector::zeros(3));
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn unconstrained_stationarity() {
        let h = dmatrix![4.0, 1.0; 1.0, 3.0];
        let g = dvector![1.0, 2.0];
        let x = -h.clone().lu().solve(&g).unwrap();
        let p = QpProblem::new(h, g);
        assert!(residuals_at(&p, &x).stationarity <= 1e-10);
    }

    #[test]
    fn perturbed_point_has_large_residual() {
        let p = QpProblem::new(dmatrix![2.0], dvector![-2.0]).with_bounds(dvector![0.0], dvector![0.5]);
        let sol = solve_qp(&p, None).unwrap();
        for delta in [0.1, -0.1] {
            let r = residuals_at(&p, &(&sol.x + dvector![delta]));
            assert!(r.primal >= 1e-3 || r.stationarity >= 1e-3, "{r:?}");
        }
    }

    #[test]
    fn rejects_invalid_problems() {
        let p = QpProblem::new(dmatrix![1.0, 2.0; 0.0, 1.0], dvector![0.0, 0.0]);
        assert!(matches!(solve_qp(&p, None), Err(QpError::NotSymmetric(_))));
        let p = QpProblem::new(dmatrix![-1.0], dvector![0.0]);
        assert!(matches!(solve_qp(&p, None), Err(QpError::NotConvex(_))));
        let p = QpProblem::new(dmatrix![1.0], dvector![0.0]).with_bounds(dvector![1.0], dvector![0.0]);
        assert!(matches!(solve_qp(&p, None), Err(QpError::BoundOrder { .. })));
        let p = QpProblem::new(dmatrix![1.0], dvector![0.0, 1.0]);
        assert!(matches!(solve_qp(&p, None), Err(QpError::Dimension(_))));
    }

    #[test]
    fn psd_hessian_is_regularized() {
        // min x0 s.t. x0 >= 1, x1 free but bounded, H singular in x1
        let p = QpProblem::new(dmatrix![1.0, 0.0; 0.0, 0.0], dvector![0.0, 0.0])
            .with_bounds(dvector![1.0, -1.0], dvector![2.0, 1.0]);
        let sol = solve_qp(&p, None).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!(sol.regularization > 0.0 && sol.regularization <= 2e-9);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_constraints() {
        // x0 + x1 >= 3 with both variables in [0, 1]
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(2))
            .with_bounds(dvector![0.0, 0.0], dvector![1.0, 1.0])
            .with_constraints(dmatrix![1.0, 1.0], dvector![3.0], dvector![f64::INFINITY]);
        assert_eq!(solve_qp(&p, None).unwrap().status, QpStatus::Infeasible);

        // x0 = 1 and x0 = 2
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(2)).with_constraints(
            dmatrix![1.0, 0.0; 1.0, 0.0],
            dvector![1.0, 2.0],
            dvector![1.0, 2.0],
        );
        assert_eq!(solve_qp(&p, None).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn dependent_consistent_equalities() {
        // x0 + x1 = 1 stated twice (once scaled)
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(2)).with_constraints(
            dmatrix![1.0, 1.0; 2.0, 2.0],
            dvector![1.0, 2.0],
            dvector![1.0, 2.0],
        );
        let sol = solve_qp(&p, None).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((&sol.x - dvector![0.5, 0.5]).amax() < 1e-12);
        assert!(kkt_residuals(&p, &sol).max() < 1e-10);
    }

    #[test]
    fn max_iterations_reported() {
        let n = 6;
        let p = QpProblem::new(DMatrix::identity(n, n), DVector::from_element(n, -10.0))
            .with_bounds(DVector::from_element(n, -1.0), DVector::from_element(n, 1.0));
        let mut solver = ActiveSetSolver::new(QpSettings { max_iter: 3, ..Default::default() });
        let sol = solver.solve(&p, None).unwrap();
        assert_eq!(sol.status, QpStatus::MaxIterations);
        solver.settings.max_iter = 200;
        let sol = solver.solve(&p, None).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x - DVector::from_element(n, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn warm_start_from_solution_takes_no_extra_iterations() {
        let n = 5;
        let p = QpProblem::new(DMatrix::identity(n, n) * 2.0, DVector::from_fn(n, |i, _| 0.3 - 1.3 * i as f64))
            .with_bounds(DVector::from_element(n, -1.0), DVector::from_element(n, 1.5));
        let mut solver = ActiveSetSolver::default();
        let cold = solver.solve(&p, None).unwrap();
        let warm = solver.solve(&p, Some(&cold.x)).unwrap();
        assert_eq!(warm.status, QpStatus::Optimal);
        assert!((&warm.x - &cold.x).amax() <= 1e-12);
        assert!(warm.active_set.len() == cold.active_set.len());
    }
}
