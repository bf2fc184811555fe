use nalgebra::{DMatrix, DVector};

use crate::QpError;

/// Dense convex quadratic program
///
/// ```text
///     minimize    1/2 x' H x + g' x
///     subject to  lb  <=  x  <= ub
///                 lbA <= A x <= ubA
/// ```
///
/// Infinite bounds are allowed. A constraint row (or a variable) with equal
/// lower and upper bound is treated as an equality.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub constraints: DMatrix<f64>,
    pub constraint_lower: DVector<f64>,
    pub constraint_upper: DVector<f64>,
}

/// Symmetry tolerance on the Hessian, max-norm of `H - H'`.
pub const SYMMETRY_TOL: f64 = 1e-10;

impl QpProblem {
    /// Unconstrained problem with free variables.
    pub fn new(hessian: DMatrix<f64>, gradient: DVector<f64>) -> Self {
        let n = gradient.len();
        Self {
            hessian,
            gradient,
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
            constraints: DMatrix::zeros(0, n),
            constraint_lower: DVector::zeros(0),
            constraint_upper: DVector::zeros(0),
        }
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn with_constraints(
        mut self,
        constraints: DMatrix<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Self {
        self.constraints = constraints;
        self.constraint_lower = lower;
        self.constraint_upper = upper;
        self
    }

    pub fn num_variables(&self) -> usize {
        self.gradient.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.nrows()
    }

    /// Objective value `1/2 x'Hx + g'x`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.gradient.dot(x)
    }

    /// Checks dimensions, symmetry and bound ordering.
    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.num_variables();
        let m = self.num_constraints();
        let dims_ok = self.hessian.nrows() == n
            && self.hessian.ncols() == n
            && self.lower.len() == n
            && self.upper.len() == n
            && self.constraints.ncols() == n
            && self.constraint_lower.len() == m
            && self.constraint_upper.len() == m;
        if !dims_ok {
            return Err(QpError::Dimension(format!(
                "H {}x{}, g {}, lb {}, ub {}, A {}x{}, lbA {}, ubA {}",
                self.hessian.nrows(),
                self.hessian.ncols(),
                n,
                self.lower.len(),
                self.upper.len(),
                self.constraints.nrows(),
                self.constraints.ncols(),
                self.constraint_lower.len(),
                self.constraint_upper.len()
            )));
        }
        let asym = (&self.hessian - self.hessian.transpose()).amax();
        if !(asym <= SYMMETRY_TOL) {
            return Err(QpError::NotSymmetric(asym));
        }
        let finite = self.hessian.iter().chain(self.gradient.iter()).all(|v| v.is_finite())
            && self.constraints.iter().all(|v| v.is_finite());
        if !finite {
            return Err(QpError::NonFinite);
        }
        for i in 0..n {
            if !(self.lower[i] <= self.upper[i]) {
                return Err(QpError::BoundOrder { index: i, lower: self.lower[i], upper: self.upper[i] });
            }
        }
        for i in 0..m {
            if !(self.constraint_lower[i] <= self.constraint_upper[i]) {
                return Err(QpError::BoundOrder {
                    index: n + i,
                    lower: self.constraint_lower[i],
                    upper: self.constraint_upper[i],
                });
            }
        }
        Ok(())
    }

    /// Largest violation of any bound or constraint at `x`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.num_variables() {
            worst = worst.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        let ax = &self.constraints * x;
        for i in 0..self.num_constraints() {
            worst = worst.max(self.constraint_lower[i] - ax[i]).max(ax[i] - self.constraint_upper[i]);
        }
        worst
    }
}
