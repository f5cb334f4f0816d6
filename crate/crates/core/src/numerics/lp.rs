use nalgebra::{DMatrix, DVector};

use super::{bound_violation, SolveReport, SolveStatus};
use crate::{Error, Result};

const PIVOT_EPS: f64 = 1e-9;
const REDUCED_COST_EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;

/// minimize cᵀx subject to `row_lower ≤ Ax ≤ row_upper`,
/// `var_lower ≤ x ≤ var_upper`. Infinite bounds are allowed.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: DVector<f64>,
    pub matrix: DMatrix<f64>,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
}

impl LinearProgram {
    /// Problem with no constraint rows, only variable bounds.
    pub fn bounded(objective: Vec<f64>, var_lower: Vec<f64>, var_upper: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective: DVector::from_vec(objective),
            matrix: DMatrix::zeros(0, n),
            row_lower: Vec::new(),
            row_upper: Vec::new(),
            var_lower,
            var_upper,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let m = self.matrix.nrows();
        if self.matrix.ncols() != n {
            return Err(Error::input(format!(
                "constraint matrix has {} columns, objective has {n}",
                self.matrix.ncols()
            )));
        }
        if self.row_lower.len() != m || self.row_upper.len() != m {
            return Err(Error::input(format!(
                "{m} constraint rows but {}/{} row bounds",
                self.row_lower.len(),
                self.row_upper.len()
            )));
        }
        if self.var_lower.len() != n || self.var_upper.len() != n {
            return Err(Error::input(format!(
                "{n} variables but {}/{} variable bounds",
                self.var_lower.len(),
                self.var_upper.len()
            )));
        }
        let bad_pair = |lo: f64, hi: f64| lo.is_nan() || hi.is_nan() || lo > hi;
        if let Some(i) = (0..m).find(|&i| bad_pair(self.row_lower[i], self.row_upper[i])) {
            return Err(Error::input(format!("row {i}: lower bound exceeds upper bound")));
        }
        if let Some(j) = (0..n).find(|&j| bad_pair(self.var_lower[j], self.var_upper[j])) {
            return Err(Error::input(format!("variable {j}: lower bound exceeds upper bound")));
        }
        if self.matrix.iter().chain(self.objective.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite coefficient"));
        }
        Ok(())
    }

    /// Largest violation of any row or variable bound at `x`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        let ax = &self.matrix * &xv;
        let rows = (0..ax.len()).map(|i| bound_violation(ax[i], self.row_lower[i], self.row_upper[i]));
        let vars = (0..x.len()).map(|j| bound_violation(x[j], self.var_lower[j], self.var_upper[j]));
        rows.chain(vars).fold(0.0, f64::max)
    }
}

/// How an original variable is expressed through nonnegative columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = offset + y
    Shift { col: usize, offset: f64 },
    /// x = offset − y
    Mirror { col: usize, offset: f64 },
    /// x = y⁺ − y⁻
    Split { pos: usize, neg: usize },
}

/// `A y = b, y ≥ 0` with `b ≥ 0`, minimize `cᵀy + offset`.
struct StandardForm {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    offset: f64,
    vars: Vec<VarMap>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let mut vars = Vec::with_capacity(n);
        let mut ncols = 0;
        let mut next = || {
            ncols += 1;
            ncols - 1
        };
        for j in 0..n {
            let (lo, hi) = (lp.var_lower[j], lp.var_upper[j]);
            vars.push(if lo.is_finite() {
                VarMap::Shift { col: next(), offset: lo }
            } else if hi.is_finite() {
                VarMap::Mirror { col: next(), offset: hi }
            } else {
                VarMap::Split { pos: next(), neg: next() }
            });
        }
        let n_struct = ncols;

        let mut c = vec![0.0; n_struct];
        let mut offset = 0.0;
        for (j, map) in vars.iter().enumerate() {
            let cj = lp.objective[j];
            match *map {
                VarMap::Shift { col, offset: o } => {
                    c[col] += cj;
                    offset += cj * o;
                }
                VarMap::Mirror { col, offset: o } => {
                    c[col] -= cj;
                    offset += cj * o;
                }
                VarMap::Split { pos, neg } => {
                    c[pos] += cj;
                    c[neg] -= cj;
                }
            }
        }

        // Rows over structural columns plus an optional slack sign.
        let mut rows: Vec<(Vec<f64>, Option<f64>, f64)> = Vec::new();
        for i in 0..lp.matrix.nrows() {
            let mut coef = vec![0.0; n_struct];
            let mut constant = 0.0;
            for (j, map) in vars.iter().enumerate() {
                let a = lp.matrix[(i, j)];
                if a == 0.0 {
                    continue;
                }
                match *map {
                    VarMap::Shift { col, offset: o } => {
                        coef[col] += a;
                        constant += a * o;
                    }
                    VarMap::Mirror { col, offset: o } => {
                        coef[col] -= a;
                        constant += a * o;
                    }
                    VarMap::Split { pos, neg } => {
                        coef[pos] += a;
                        coef[neg] -= a;
                    }
                }
            }
            let (lo, hi) = (lp.row_lower[i], lp.row_upper[i]);
            if lo == hi {
                rows.push((coef, None, lo - constant));
                continue;
            }
            if lo.is_finite() {
                rows.push((coef.clone(), Some(-1.0), lo - constant));
            }
            if hi.is_finite() {
                rows.push((coef, Some(1.0), hi - constant));
            }
        }
        for (j, map) in vars.iter().enumerate() {
            if let VarMap::Shift { col, offset: lo } = *map {
                let hi = lp.var_upper[j];
                if hi.is_finite() {
                    let mut coef = vec![0.0; n_struct];
                    coef[col] = 1.0;
                    rows.push((coef, Some(1.0), hi - lo));
                }
            }
        }

        let n_slack = rows.iter().filter(|r| r.1.is_some()).count();
        let width = n_struct + n_slack;
        c.resize(width, 0.0);
        let mut a = Vec::with_capacity(rows.len());
        let mut b = Vec::with_capacity(rows.len());
        let mut slack = n_struct;
        for (mut coef, sign, rhs) in rows {
            coef.resize(width, 0.0);
            if let Some(s) = sign {
                coef[slack] = s;
                slack += 1;
            }
            if rhs < 0.0 {
                coef.iter_mut().for_each(|v| *v = -*v);
                a.push(coef);
                b.push(-rhs);
            } else {
                a.push(coef);
                b.push(rhs);
            }
        }
        StandardForm { a, b, c, offset, vars }
    }

    fn recover(&self, y: &[f64]) -> Vec<f64> {
        self.vars
            .iter()
            .map(|map| match *map {
                VarMap::Shift { col, offset } => offset + y[col],
                VarMap::Mirror { col, offset } => offset - y[col],
                VarMap::Split { pos, neg } => y[pos] - y[neg],
            })
            .collect()
    }
}

/// Dense simplex tableau with one artificial column per row. The last row
/// holds reduced costs; the last column holds the right-hand side.
struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    m: usize,
    n: usize,
    pivots: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn new(sf: &StandardForm) -> Self {
        let m = sf.a.len();
        let n = sf.c.len();
        let width = n + m + 1;
        let mut rows = Vec::with_capacity(m + 1);
        for i in 0..m {
            let mut row = vec![0.0; width];
            row[..n].copy_from_slice(&sf.a[i]);
            row[n + i] = 1.0;
            row[width - 1] = sf.b[i];
            rows.push(row);
        }
        // Phase-one objective: sum of artificials.
        let mut obj = vec![0.0; width];
        for row in &rows {
            for j in 0..n {
                obj[j] -= row[j];
            }
            obj[width - 1] -= row[width - 1];
        }
        rows.push(obj);
        Tableau {
            rows,
            basis: (n..n + m).collect(),
            m,
            n,
            pivots: 0,
        }
    }

    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.n + self.m]
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let piv = self.rows[r][e];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[e];
            if f == 0.0 {
                continue;
            }
            for (v, p) in row.iter_mut().zip(&prow) {
                *v -= f * p;
            }
            row[e] = 0.0;
        }
        self.basis[r] = e;
        self.pivots += 1;
    }

    /// Primal simplex with Bland's rule; only columns `< allowed` may enter.
    fn run(&mut self, allowed: usize) -> Outcome {
        loop {
            if self.pivots >= MAX_PIVOTS {
                return Outcome::IterationLimit;
            }
            let obj = &self.rows[self.m];
            let Some(e) = (0..allowed).find(|&j| obj[j] < -REDUCED_COST_EPS) else {
                return Outcome::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.rows[i][e];
                if a <= PIVOT_EPS {
                    continue;
                }
                let ratio = self.rhs(i) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((best, br)) => {
                        let tie = (ratio - br).abs() <= 1e-12 * br.abs().max(1.0);
                        if ratio < br && !tie || tie && self.basis[i] < self.basis[best] {
                            Some((i, ratio))
                        } else {
                            Some((best, br))
                        }
                    }
                };
            }
            match leave {
                Some((r, _)) => self.pivot(r, e),
                None => return Outcome::Unbounded,
            }
        }
    }

    fn install_objective(&mut self, c: &[f64]) {
        let width = self.n + self.m + 1;
        let mut obj = vec![0.0; width];
        obj[..self.n].copy_from_slice(c);
        for i in 0..self.m {
            let cb = c.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb == 0.0 {
                continue;
            }
            for (o, v) in obj.iter_mut().zip(&self.rows[i]) {
                *o -= cb * v;
            }
        }
        self.rows[self.m] = obj;
    }
}

/// Two-phase dense primal simplex with Bland's anti-cycling rule.
///
/// `tol` is the phase-one threshold above which the problem is declared
/// infeasible, and the feasibility tolerance applied to the returned point.
pub fn solve_lp(problem: &LinearProgram, tol: f64) -> Result<SolveReport> {
    problem.validate()?;
    let n_orig = problem.num_vars();
    let sf = StandardForm::build(problem);
    let mut tab = Tableau::new(&sf);
    let n = tab.n;

    match tab.run(n) {
        Outcome::Optimal => {}
        Outcome::IterationLimit => {
            return Ok(SolveReport::failed(SolveStatus::MaxIterations, n_orig, tab.pivots))
        }
        // Phase one is bounded below by zero.
        Outcome::Unbounded => return Err(Error::Solver("phase one reported unbounded".into())),
    }
    let infeasibility = -tab.rhs(tab.m);
    if infeasibility > tol {
        return Ok(SolveReport::failed(SolveStatus::Infeasible, n_orig, tab.pivots));
    }

    // Drive artificials out of the basis; rows where that is impossible are
    // redundant and keep their artificial at zero.
    for i in 0..tab.m {
        if tab.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| tab.rows[i][j].abs() > PIVOT_EPS) {
                tab.pivot(i, j);
            }
        }
    }

    tab.install_objective(&sf.c);
    match tab.run(n) {
        Outcome::Optimal => {}
        Outcome::Unbounded => {
            return Ok(SolveReport::failed(SolveStatus::Unbounded, n_orig, tab.pivots))
        }
        Outcome::IterationLimit => {
            return Ok(SolveReport::failed(SolveStatus::MaxIterations, n_orig, tab.pivots))
        }
    }

    let mut y = vec![0.0; n];
    for i in 0..tab.m {
        if tab.basis[i] < n {
            y[tab.basis[i]] = tab.rhs(i).max(0.0);
        }
    }
    let x = sf.recover(&y);

    // Row duals are the negated reduced costs of the artificial columns.
    let w: Vec<f64> = (0..tab.m).map(|i| -tab.rows[tab.m][n + i]).collect();
    let dual_objective = sf.b.iter().zip(&w).map(|(b, w)| b * w).sum::<f64>() + sf.offset;
    let dual_residual = (0..n)
        .map(|j| {
            let atw: f64 = (0..tab.m).map(|i| sf.a[i][j] * w[i]).sum();
            (atw - sf.c[j]).max(0.0)
        })
        .fold(0.0, f64::max);

    let objective = problem.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
    let primal_residual = problem.primal_residual(&x);
    Ok(SolveReport {
        status: SolveStatus::Optimal,
        solution: x,
        objective,
        dual_objective,
        primal_residual,
        dual_residual,
        iterations: tab.pivots,
    })
}
