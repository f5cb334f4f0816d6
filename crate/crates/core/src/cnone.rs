//! Aggregate linear demand model for customers without smart meters.
//!
//! Demand at hour h responds to every hourly price:
//! `R_h(p) = α_h + Σ_l β_{h,l} p_l`. The fit is a forgetting-factor weighted
//! least-squares problem with sign constraints on the elasticities, solved as
//! one QP over all 24 × 25 coefficients because the market-consistency
//! constraints couple the rows through column sums.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::numerics::{solve_qp, QpSettings, QuadraticProgram, SolveStatus};
use crate::{Error, PriceVector, Result};

/// Self-elasticities must satisfy β_{h,h} ≤ −SELF_ELASTICITY_EPS.
pub const SELF_ELASTICITY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateDemandModel {
    pub intercepts: Vec<f64>,
    /// `elasticities[h][l]`: kWh at hour h per cent of price at hour l.
    pub elasticities: Vec<Vec<f64>>,
}

impl AggregateDemandModel {
    pub fn horizon(&self) -> usize {
        self.intercepts.len()
    }

    /// β_{h,h} + Σ_{l≠h} β_{l,h}: total demand response to the price at h.
    pub fn column_sum(&self, h: usize) -> f64 {
        let others: f64 = (0..self.horizon())
            .filter(|&l| l != h)
            .map(|l| self.elasticities[l][h])
            .sum();
        self.elasticities[h][h] + others
    }

    /// Checks the self-elasticity, cross-elasticity and column-sum families.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.horizon();
        if self.elasticities.len() != n || self.elasticities.iter().any(|r| r.len() != n) {
            return Err(Error::input(format!("elasticity matrix must be {n}x{n}")));
        }
        for h in 0..n {
            for l in 0..n {
                let b = self.elasticities[h][l];
                if !b.is_finite() {
                    return Err(Error::input(format!("β[{h}][{l}] is not finite")));
                }
                if h == l && b > -SELF_ELASTICITY_EPS {
                    return Err(Error::input(format!("self-elasticity β[{h}][{h}] = {b} is not negative")));
                }
                if h != l && b < 0.0 {
                    return Err(Error::input(format!("cross-elasticity β[{h}][{l}] = {b} is negative")));
                }
            }
            let s = self.column_sum(h);
            if s > 0.0 {
                return Err(Error::input(format!("column {h} sums to {s} > 0")));
            }
        }
        Ok(())
    }

    /// Linear prediction without clamping.
    pub fn predict_raw(&self, prices: &PriceVector) -> Vec<f64> {
        self.intercepts
            .iter()
            .zip(&self.elasticities)
            .map(|(a, row)| a + prices.dot(row))
            .collect()
    }

    /// Moves the coefficients onto the closed feasible set: clamp signs, then
    /// lower each self-elasticity until its column sum is nonpositive.
    pub fn project_feasible(&mut self) {
        let n = self.horizon();
        for h in 0..n {
            for l in 0..n {
                let b = &mut self.elasticities[h][l];
                *b = if h == l { b.min(-SELF_ELASTICITY_EPS) } else { b.max(0.0) };
            }
        }
        for h in 0..n {
            if self.column_sum(h) > 0.0 {
                let others: f64 = (0..n).filter(|&l| l != h).map(|l| self.elasticities[l][h]).sum();
                self.elasticities[h][h] = -others;
                // -x + x == 0 exactly, but guard against a stray ulp
                while self.column_sum(h) > 0.0 {
                    self.elasticities[h][h] = self.elasticities[h][h].next_down();
                }
            }
        }
    }
}

/// Expected aggregate demand per slot, clamped at zero.
pub fn predict_aggregate(model: &AggregateDemandModel, prices: &PriceVector) -> Vec<f64> {
    model.predict_raw(prices).into_iter().map(|y| y.max(0.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandDay {
    pub prices: PriceVector,
    pub demand: Vec<f64>,
}

/// Day-ordered price/demand history, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandHistory {
    pub days: Vec<DemandDay>,
    /// Forgetting factor λ in [0, 1]; day d of D has weight λ^(D−d).
    pub forgetting: f64,
}

impl DemandHistory {
    pub fn new(days: Vec<DemandDay>, forgetting: f64) -> Self {
        DemandHistory { days, forgetting }
    }

    pub fn weights(&self) -> Vec<f64> {
        let d = self.days.len();
        (0..d).map(|i| self.forgetting.powi((d - 1 - i) as i32)).collect()
    }

    pub fn horizon(&self) -> usize {
        self.days.first().map_or(0, |d| d.prices.len())
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.forgetting) {
            return Err(Error::input(format!("forgetting factor {} outside [0, 1]", self.forgetting)));
        }
        let h = self.horizon();
        if h == 0 {
            return Err(Error::input("empty demand history"));
        }
        if self.days.len() < h + 1 {
            return Err(Error::input(format!(
                "{} days cannot identify {} parameters per hour",
                self.days.len(),
                h + 1
            )));
        }
        for (i, day) in self.days.iter().enumerate() {
            if day.prices.len() != h || day.demand.len() != h {
                return Err(Error::input(format!("day {} does not have {h} slots", i + 1)));
            }
            if day.demand.iter().any(|&y| !(y >= 0.0)) {
                return Err(Error::input(format!("day {}: negative or missing demand", i + 1)));
            }
        }
        Ok(())
    }
}

/// Σ_d λ^(D−d) Σ_h (R_h(p(d)) − y_h(d))² with the unclamped model.
pub fn weighted_residual(model: &AggregateDemandModel, history: &DemandHistory) -> f64 {
    history
        .days
        .iter()
        .zip(history.weights())
        .map(|(day, w)| {
            let pred = model.predict_raw(&day.prices);
            w * pred.iter().zip(&day.demand).map(|(p, y)| (p - y).powi(2)).sum::<f64>()
        })
        .sum()
}

pub fn fit_aggregate_demand(history: &DemandHistory) -> Result<AggregateDemandModel> {
    fit_aggregate_demand_with(history, &default_fit_settings())
}

/// Solver settings used by [`fit_aggregate_demand`].
pub fn default_fit_settings() -> QpSettings {
    QpSettings {
        eps_abs: 1e-10,
        eps_rel: 1e-10,
        ..QpSettings::default()
    }
}

/// Elasticity-constrained weighted least squares.
///
/// The QP is posed on centred, rescaled prices and demands so that its
/// Hessian is close to the identity; the sign constraints only involve the
/// slopes, which the rescaling multiplies by a positive constant, so the
/// feasible set maps onto itself.
pub fn fit_aggregate_demand_with(history: &DemandHistory, settings: &QpSettings) -> Result<AggregateDemandModel> {
    history.validate()?;
    let h = history.horizon();
    let d = history.days.len();
    let weights = history.weights();
    let total_weight: f64 = weights.iter().sum();

    let mean_price: Vec<f64> = (0..h)
        .map(|l| history.days.iter().zip(&weights).map(|(day, w)| w * day.prices[l]).sum::<f64>() / total_weight)
        .collect();
    let spread = {
        let ss: f64 = history
            .days
            .iter()
            .zip(&weights)
            .map(|(day, w)| w * (0..h).map(|l| (day.prices[l] - mean_price[l]).powi(2)).sum::<f64>())
            .sum();
        let s = (ss / (total_weight * h as f64)).sqrt();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };
    let demand_scale = {
        let m = history.days.iter().flat_map(|day| &day.demand).sum::<f64>() / (d * h) as f64;
        if m > 0.0 {
            m
        } else {
            1.0
        }
    };

    // Shared design: [1, (p − p̄)/s], weighted by w/W.
    let width = h + 1;
    let design = DMatrix::from_fn(d, width, |r, c| {
        if c == 0 {
            1.0
        } else {
            (history.days[r].prices[c - 1] - mean_price[c - 1]) / spread
        }
    });
    let weighted = DMatrix::from_fn(d, width, |r, c| design[(r, c)] * weights[r] / total_weight);
    let gram = design.transpose() * &weighted * 2.0;

    let n = h * width;
    let var = |row: usize, col: usize| row * width + col;
    let mut quadratic = DMatrix::zeros(n, n);
    let mut linear = DVector::zeros(n);
    for row in 0..h {
        quadratic.view_mut((row * width, row * width), (width, width)).copy_from(&gram);
        let y = DVector::from_fn(d, |r, _| history.days[r].demand[row] / demand_scale);
        let g = weighted.transpose() * y * -2.0;
        linear.rows_mut(row * width, width).copy_from(&g);
    }

    let m = h * h + h;
    let mut constraints = DMatrix::zeros(m, n);
    let mut lower = Vec::with_capacity(m);
    let mut upper = Vec::with_capacity(m);
    let self_bound = -SELF_ELASTICITY_EPS * spread / demand_scale;
    let mut r = 0;
    for row in 0..h {
        for l in 0..h {
            constraints[(r, var(row, 1 + l))] = 1.0;
            if row == l {
                lower.push(f64::NEG_INFINITY);
                upper.push(self_bound);
            } else {
                lower.push(0.0);
                upper.push(f64::INFINITY);
            }
            r += 1;
        }
    }
    for col in 0..h {
        for row in 0..h {
            constraints[(r, var(row, 1 + col))] = 1.0;
        }
        lower.push(f64::NEG_INFINITY);
        upper.push(0.0);
        r += 1;
    }

    let qp = QuadraticProgram {
        quadratic,
        linear,
        constraints,
        lower,
        upper,
    };
    let report = solve_qp(&qp, settings)?;
    match report.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Solver("elasticity-constrained fit reported infeasible".into()))
        }
        status => {
            return Err(Error::Solver(format!(
                "elasticity-constrained fit stopped with {status:?} after {} iterations",
                report.iterations
            )))
        }
    }

    let theta = report.solution;
    let slope = demand_scale / spread;
    let elasticities: Vec<Vec<f64>> = (0..h)
        .map(|row| (0..h).map(|l| theta[var(row, 1 + l)] * slope).collect())
        .collect();
    let mut model = AggregateDemandModel {
        intercepts: vec![0.0; h],
        elasticities,
    };
    model.project_feasible();
    // With centred regressors the optimal intercept is the weighted mean
    // residual, which is exact for whatever slopes survived projection.
    for row in 0..h {
        let mean_demand: f64 =
            history.days.iter().zip(&weights).map(|(day, w)| w * day.demand[row]).sum::<f64>() / total_weight;
        let shift: f64 = (0..h).map(|l| model.elasticities[row][l] * mean_price[l]).sum();
        model.intercepts[row] = mean_demand - shift;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: usize = 24;

    /// Feasible ground truth: self-elasticity -0.8, neighbours +0.2 each.
    fn truth() -> AggregateDemandModel {
        let mut beta = vec![vec![0.0; H]; H];
        for h in 0..H {
            beta[h][h] = -0.8;
            for l in [h.wrapping_sub(1), h + 1] {
                if l < H {
                    beta[h][l] = 0.2;
                }
            }
        }
        AggregateDemandModel {
            intercepts: (0..H).map(|h| 40.0 + 10.0 * (h as f64 / 4.0).sin()).collect(),
            elasticities: beta,
        }
    }

    fn random_prices(rng: &mut ChaCha8Rng) -> PriceVector {
        PriceVector::new((0..H).map(|_| rng.random_range(600..=1400) as f64 / 100.0).collect())
    }

    fn history(model: &AggregateDemandModel, days: usize, seed: u64, lambda: f64) -> DemandHistory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let days = (0..days)
            .map(|_| {
                let prices = random_prices(&mut rng);
                let demand = model.predict_raw(&prices);
                DemandDay { prices, demand }
            })
            .collect();
        DemandHistory::new(days, lambda)
    }

    #[test]
    fn truth_is_feasible() {
        truth().check_invariants().unwrap();
    }

    #[test]
    fn recovers_noiseless_ground_truth() {
        let t = truth();
        let fit = fit_aggregate_demand(&history(&t, 40, 1, 1.0)).unwrap();
        fit.check_invariants().unwrap();
        let ea = (0..H).map(|h| (fit.intercepts[h] - t.intercepts[h]).abs()).fold(0.0, f64::max);
        let eb = (0..H).flat_map(|h| (0..H).map(move |l| (h, l))).map(|(h, l)| (fit.elasticities[h][l] - t.elasticities[h][l]).abs()).fold(0.0, f64::max);
        eprintln!("max alpha err {ea:e}, max beta err {eb:e}");
        for h in 0..H {
            assert!((fit.intercepts[h] - t.intercepts[h]).abs() < 1e-3, "alpha[{h}]");
            for l in 0..H {
                assert!((fit.elasticities[h][l] - t.elasticities[h][l]).abs() < 1e-3, "beta[{h}][{l}]");
            }
        }
    }

    #[test]
    fn constant_demand_fits_intercepts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let days = (0..30)
            .map(|_| DemandDay {
                prices: random_prices(&mut rng),
                demand: vec![25.0; H],
            })
            .collect();
        let hist = DemandHistory::new(days, 1.0);
        let fit = fit_aggregate_demand(&hist).unwrap();
        fit.check_invariants().unwrap();
        let res = weighted_residual(&fit, &hist);
        assert!(res < 1e-6, "residual {res}");
        // A sign-violating model (positive self-elasticity) fits worse.
        let mut wrong = fit.clone();
        wrong.elasticities[0][0] = 0.05;
        assert!(weighted_residual(&wrong, &hist) > res);
    }

    #[test]
    fn forgetting_tracks_recent_regime() {
        let old = truth();
        let mut new = truth();
        new.intercepts.iter_mut().for_each(|a| *a += 15.0);
        let mut days = history(&old, 30, 5, 1.0).days;
        days.extend(history(&new, 10, 6, 1.0).days);
        let recent = DemandHistory::new(days[30..].to_vec(), 1.0);

        let flat = fit_aggregate_demand(&DemandHistory::new(days.clone(), 1.0)).unwrap();
        let forgetful = fit_aggregate_demand(&DemandHistory::new(days, 0.5)).unwrap();
        assert!(weighted_residual(&forgetful, &recent) < weighted_residual(&flat, &recent));
    }

    #[test]
    fn projection_enforces_all_families() {
        let mut m = truth();
        m.elasticities[3][3] = 0.4;
        m.elasticities[5][6] = -0.1;
        m.elasticities[7][2] = 3.0;
        m.project_feasible();
        m.check_invariants().unwrap();
    }

    #[test]
    fn flat_model_predicts_intercepts() {
        let m = AggregateDemandModel {
            intercepts: vec![5.0; H],
            elasticities: vec![vec![0.0; H]; H],
        };
        assert_eq!(predict_aggregate(&m, &PriceVector::uniform(13.0, H)), vec![5.0; H]);
    }

    #[test]
    fn uniform_increase_lowers_total_demand() {
        let m = truth();
        let lo: f64 = m.predict_raw(&PriceVector::uniform(6.0, H)).iter().sum();
        let hi: f64 = m.predict_raw(&PriceVector::uniform(14.0, H)).iter().sum();
        let col_total: f64 = (0..H).map(|h| m.column_sum(h)).sum();
        assert!((hi - lo - 8.0 * col_total).abs() < 1e-9);
        assert!(hi <= lo);
    }

    #[test]
    fn rejects_short_or_invalid_history() {
        let t = truth();
        assert!(matches!(fit_aggregate_demand(&history(&t, 20, 1, 1.0)), Err(Error::Input(_))));
        assert!(matches!(fit_aggregate_demand(&history(&t, 30, 1, 1.5)), Err(Error::Input(_))));
    }
}
