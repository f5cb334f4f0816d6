use nalgebra::{Cholesky, DMatrix, DVector};

use super::{bound_violation, SolveReport, SolveStatus};
use crate::{Error, Result};

/// minimize ½xᵀQx + qᵀx subject to `lower ≤ Ax ≤ upper`.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub quadratic: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constraints: DMatrix<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl QuadraticProgram {
    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.quadratic * x)) + self.linear.dot(x)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let m = self.constraints.nrows();
        if self.quadratic.shape() != (n, n) {
            return Err(Error::input(format!(
                "quadratic term is {:?}, expected {n}x{n}",
                self.quadratic.shape()
            )));
        }
        if self.constraints.ncols() != n {
            return Err(Error::input(format!(
                "constraint matrix has {} columns, expected {n}",
                self.constraints.ncols()
            )));
        }
        if self.lower.len() != m || self.upper.len() != m {
            return Err(Error::input(format!(
                "{m} constraint rows but {}/{} bounds",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if let Some(i) = (0..m).find(|&i| !(self.lower[i] <= self.upper[i])) {
            return Err(Error::input(format!("row {i}: lower bound exceeds upper bound")));
        }
        for i in 0..n {
            for j in 0..i {
                if (self.quadratic[(i, j)] - self.quadratic[(j, i)]).abs() > 1e-12 {
                    return Err(Error::input(format!("quadratic term not symmetric at ({i},{j})")));
                }
            }
        }
        let scale = self.quadratic.diagonal().amax().max(1.0);
        let shifted = &self.quadratic + DMatrix::identity(n, n) * (1e-10 * scale);
        if Cholesky::new(shifted).is_none() {
            return Err(Error::input("quadratic term is not positive semidefinite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_infeasible: f64,
    pub max_iter: usize,
    /// Residuals are evaluated every `check_every` iterations.
    pub check_every: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            rho: 1.0,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-8,
            eps_rel: 1e-6,
            eps_infeasible: 1e-7,
            max_iter: 100_000,
            check_every: 10,
        }
    }
}

impl QpSettings {
    pub fn with_tolerance(tol: f64, max_iter: usize) -> Self {
        QpSettings {
            eps_abs: tol,
            eps_rel: 0.0,
            max_iter,
            ..QpSettings::default()
        }
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

/// Operator-splitting (ADMM) solver in the OSQP form:
/// the x-update solves `(Q + σI + ρAᵀA) x = σx − q + Aᵀ(ρz − y)` with a
/// single Cholesky factorization; z is projected onto the row bounds.
pub fn solve_qp(problem: &QuadraticProgram, settings: &QpSettings) -> Result<SolveReport> {
    problem.validate()?;
    let n = problem.num_vars();
    let m = problem.constraints.nrows();
    let QpSettings {
        rho,
        sigma,
        alpha,
        ..
    } = *settings;
    if !(rho > 0.0 && sigma > 0.0 && alpha > 0.0 && alpha < 2.0) {
        return Err(Error::input("ADMM parameters out of range"));
    }

    let a = &problem.constraints;
    let at = a.transpose();
    let q = &problem.linear;
    let kkt = &problem.quadratic + DMatrix::identity(n, n) * sigma + (&at * a) * rho;
    let chol = Cholesky::new(kkt).ok_or_else(|| Error::Solver("KKT factorization failed".into()))?;

    let lower = DVector::from_column_slice(&problem.lower);
    let upper = DVector::from_column_slice(&problem.upper);
    let project = |v: &DVector<f64>| v.zip_zip_map(&lower, &upper, |x, lo, hi| x.clamp(lo, hi));

    let mut x = DVector::zeros(n);
    let mut z = DVector::zeros(m);
    let mut y = DVector::zeros(m);
    let check_every = settings.check_every.max(1);

    for iter in 1..=settings.max_iter {
        let rhs = &x * sigma - q + &at * (&z * rho - &y);
        let x_tilde = chol.solve(&rhs);
        let z_tilde = a * &x_tilde;
        x = &x_tilde * alpha + &x * (1.0 - alpha);
        let z_relaxed = &z_tilde * alpha + &z * (1.0 - alpha);
        let z_next = project(&(&z_relaxed + &y / rho));
        let y_prev = y.clone();
        y += (&z_relaxed - &z_next) * rho;
        z = z_next;

        if iter % check_every != 0 && iter != settings.max_iter {
            continue;
        }
        let ax = a * &x;
        let qx = &problem.quadratic * &x;
        let aty = &at * &y;
        let r_prim = if m == 0 { 0.0 } else { inf_norm(&(&ax - &z)) };
        let r_dual = inf_norm(&(&qx + q + &aty));
        let eps_prim = settings.eps_abs
            + settings.eps_rel * if m == 0 { 0.0 } else { inf_norm(&ax).max(inf_norm(&z)) };
        let eps_dual = settings.eps_abs
            + settings.eps_rel * inf_norm(&qx).max(inf_norm(&aty)).max(inf_norm(q));
        if r_prim <= eps_prim && r_dual <= eps_dual {
            return Ok(report(problem, x, &y, SolveStatus::Optimal, r_dual, iter));
        }
        if m > 0 && primal_infeasible(&(&y - &y_prev), &at, &lower, &upper, settings.eps_infeasible)
        {
            return Ok(SolveReport::failed(SolveStatus::Infeasible, n, iter));
        }
    }
    let r_dual = inf_norm(&(&problem.quadratic * &x + q + &at * &y));
    Ok(report(problem, x, &y, SolveStatus::MaxIterations, r_dual, settings.max_iter))
}

/// Farkas-type certificate from the dual iterate difference.
fn primal_infeasible(
    dy: &DVector<f64>,
    at: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    eps: f64,
) -> bool {
    let norm = inf_norm(dy);
    if norm <= eps {
        return false;
    }
    if inf_norm(&(at * dy)) > eps * norm {
        return false;
    }
    let mut support = 0.0;
    for i in 0..dy.len() {
        let d = dy[i];
        if d > 0.0 {
            if !upper[i].is_finite() {
                return false;
            }
            support += upper[i] * d;
        } else if d < 0.0 {
            if !lower[i].is_finite() {
                return false;
            }
            support += lower[i] * d;
        }
    }
    support < -eps * norm
}

fn report(
    problem: &QuadraticProgram,
    x: DVector<f64>,
    y: &DVector<f64>,
    status: SolveStatus,
    dual_residual: f64,
    iterations: usize,
) -> SolveReport {
    let ax = &problem.constraints * &x;
    let primal_residual = (0..ax.len())
        .map(|i| bound_violation(ax[i], problem.lower[i], problem.upper[i]))
        .fold(0.0, f64::max);
    let quad = 0.5 * x.dot(&(&problem.quadratic * &x));
    let objective = quad + problem.linear.dot(&x);
    let support: f64 = (0..y.len())
        .map(|i| {
            if y[i] > 0.0 && problem.upper[i].is_finite() {
                problem.upper[i] * y[i]
            } else if y[i] < 0.0 && problem.lower[i].is_finite() {
                problem.lower[i] * y[i]
            } else {
                0.0
            }
        })
        .sum();
    SolveReport {
        status,
        solution: x.iter().copied().collect(),
        objective,
        dual_objective: -quad - support,
        primal_residual,
        dual_residual,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const INF: f64 = f64::INFINITY;

    fn tight() -> QpSettings {
        QpSettings::with_tolerance(1e-9, 100_000)
    }

    #[test]
    fn unconstrained_stationary_point() {
        // (x-2)^2 = ½·2x² - 4x + 4
        let qp = QuadraticProgram {
            quadratic: DMatrix::from_element(1, 1, 2.0),
            linear: DVector::from_element(1, -4.0),
            constraints: DMatrix::zeros(0, 1),
            lower: vec![],
            upper: vec![],
        };
        let r = solve_qp(&qp, &tight()).unwrap();
        assert!(r.is_optimal());
        assert!((r.solution[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn symmetric_halfplane() {
        let qp = QuadraticProgram {
            quadratic: DMatrix::identity(2, 2) * 2.0,
            linear: DVector::zeros(2),
            constraints: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            lower: vec![2.0],
            upper: vec![INF],
        };
        let r = solve_qp(&qp, &tight()).unwrap();
        assert!(r.is_optimal());
        assert!((r.solution[0] - 1.0).abs() < 1e-6);
        assert!((r.solution[1] - 1.0).abs() < 1e-6);
        assert!((r.objective - 2.0).abs() < 1e-6);
        assert!((r.dual_objective - r.objective).abs() < 1e-6);
    }

    #[test]
    fn detects_infeasible_rows() {
        let qp = QuadraticProgram {
            quadratic: DMatrix::identity(1, 1),
            linear: DVector::zeros(1),
            constraints: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            lower: vec![3.0, -INF],
            upper: vec![INF, 1.0],
        };
        let r = solve_qp(&qp, &QpSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn rejects_indefinite_quadratic() {
        let qp = QuadraticProgram {
            quadratic: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            linear: DVector::zeros(2),
            constraints: DMatrix::identity(2, 2),
            lower: vec![-1.0; 2],
            upper: vec![1.0; 2],
        };
        assert!(matches!(solve_qp(&qp, &QpSettings::default()), Err(Error::Input(_))));
    }

    #[test]
    fn rejects_asymmetric_quadratic() {
        let qp = QuadraticProgram {
            quadratic: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            linear: DVector::zeros(2),
            constraints: DMatrix::zeros(0, 2),
            lower: vec![],
            upper: vec![],
        };
        assert!(matches!(solve_qp(&qp, &QpSettings::default()), Err(Error::Input(_))));
    }
}
