use nalgebra::{DMatrix, DVector};

use crate::{QpProblem, QpSolution};

/// Max-norm KKT residuals of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

const ACTIVE_TOL: f64 = 1e-7;

/// Residuals of `sol.x`, computed without the solver's multipliers.
///
/// Constraints within `1e-7` of a bound form the candidate active set;
/// multipliers are recovered by least squares on that set, discarding
/// inequality sides whose fitted multiplier has the wrong sign.
pub fn kkt_residuals(p: &QpProblem, sol: &QpSolution) -> KktResiduals {
    residuals_at(p, &sol.x)
}

/// Same as [`kkt_residuals`] for a bare point.
pub fn residuals_at(p: &QpProblem, x: &DVector<f64>) -> KktResiduals {
    let n = p.num_variables();
    let grad = &p.hessian * x + &p.gradient;
    let ax = &p.constraints * x;

    // (normal, slack, is_equality)
    let mut candidates: Vec<(DVector<f64>, f64, bool)> = Vec::new();
    let mut push = |normal: DVector<f64>, value: f64, lo: f64, up: f64| {
        let scale = normal.norm().max(1.0);
        if lo == up {
            candidates.push((normal, value - lo, true));
            return;
        }
        if lo.is_finite() && value - lo <= ACTIVE_TOL * scale * (1.0 + lo.abs()) {
            candidates.push((normal.clone(), value - lo, false));
        }
        if up.is_finite() && up - value <= ACTIVE_TOL * scale * (1.0 + up.abs()) {
            candidates.push((-normal, up - value, false));
        }
    };
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        push(e, x[i], p.lower[i], p.upper[i]);
    }
    for i in 0..p.num_constraints() {
        push(p.constraints.row(i).transpose(), ax[i], p.constraint_lower[i], p.constraint_upper[i]);
    }

    // Stationarity: grad = sum_k u_k n_k with u_k >= 0 on inequality sides.
    let mut keep: Vec<usize> = (0..candidates.len()).collect();
    let mut multipliers = DVector::zeros(0);
    for _ in 0..=candidates.len() {
        if keep.is_empty() {
            multipliers = DVector::zeros(0);
            break;
        }
        let normals = DMatrix::from_columns(&keep.iter().map(|&k| candidates[k].0.clone()).collect::<Vec<_>>());
        let svd = normals.clone().svd(true, true);
        let u = svd.solve(&grad, 1e-12).unwrap_or_else(|_| DVector::zeros(keep.len()));
        let worst = keep
            .iter()
            .enumerate()
            .filter(|(_, &k)| !candidates[k].2)
            .map(|(pos, _)| (pos, u[pos]))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match worst {
            Some((pos, value)) if value < -1e-12 => {
                keep.remove(pos);
            }
            _ => {
                multipliers = u;
                break;
            }
        }
    }

    let mut combo = DVector::zeros(n);
    let mut complementarity = 0.0_f64;
    for (pos, &k) in keep.iter().enumerate() {
        if pos >= multipliers.len() {
            break;
        }
        let (normal, slack, equality) = &candidates[k];
        combo.axpy(multipliers[pos], normal, 1.0);
        if !equality {
            complementarity = complementarity.max((multipliers[pos] * slack).abs());
        }
    }
    KktResiduals {
        stationarity: (grad - combo).amax(),
        primal: p.max_violation(x).max(0.0),
        complementarity,
    }
}
