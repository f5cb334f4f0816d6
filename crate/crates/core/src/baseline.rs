//! Two-step iterative best-response heuristic.
//!
//! Each round fixes the customers' demand at their response to the current
//! prices, re-solves the retailer's problem for that fixed demand, and
//! repeats until the prices stop moving.

use std::cmp::Ordering;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ga::deb_compare;
use crate::hems::ConsumptionProfile;
use crate::numerics::{solve_lp, LinearProgram};
use crate::prices::to_ticks;
use crate::retailer::{evaluate_prices, CostModel, MarketEvaluation, MarketLimits};
use crate::{Error, PriceVector, Result};

/// Anything that answers a price vector with per-group consumption.
pub trait Responder: Sync {
    fn respond(&self, prices: &PriceVector) -> Result<Vec<ConsumptionProfile>>;
}

impl<F> Responder for F
where
    F: Fn(&PriceVector) -> Result<Vec<ConsumptionProfile>> + Sync,
{
    fn respond(&self, prices: &PriceVector) -> Result<Vec<ConsumptionProfile>> {
        self(prices)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Max-norm price change (cents) that ends the iteration.
    pub tol: f64,
    pub max_rounds: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Solve the inner problem with the simplex instead of uniform scaling.
    pub use_lp: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            tol: 0.01,
            max_rounds: 50,
            restarts: 3,
            seed: 0,
            use_lp: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub restart: usize,
    pub round: usize,
    pub max_change: f64,
    pub revenue: f64,
    pub cost: f64,
    pub profit: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub prices: PriceVector,
    pub evaluation: MarketEvaluation,
    pub rounds: Vec<Round>,
}

/// Retailer problem with demand fixed: maximize `p·D` subject to the price
/// bounds and `p·D ≤ RE_max`. Prices move uniformly from `p_min` towards
/// `p_max`, floored to whole cents so the cap is never overshot.
pub fn inner_uniform(demand: &[f64], limits: &MarketLimits) -> PriceVector {
    let n = demand.len();
    let base: f64 = (0..n).map(|h| limits.p_min[h] * demand[h]).sum();
    let slope: f64 = (0..n).map(|h| (limits.p_max[h] - limits.p_min[h]) * demand[h]).sum();
    let t = if base + slope <= limits.re_max {
        1.0
    } else if slope > 0.0 {
        ((limits.re_max - base) / slope).clamp(0.0, 1.0)
    } else {
        0.0
    };
    PriceVector::new(
        (0..n)
            .map(|h| {
                let lo = to_ticks(limits.p_min[h]);
                let span = (to_ticks(limits.p_max[h]) - lo) as f64;
                (lo + (t * span + 1e-9).floor() as i64) as f64 / 100.0
            })
            .collect(),
    )
}

/// Same problem through the simplex; returns a vertex optimum.
pub fn inner_lp(demand: &[f64], limits: &MarketLimits) -> Result<PriceVector> {
    let n = demand.len();
    let lp = LinearProgram {
        objective: DVector::from_iterator(n, demand.iter().map(|d| -d)),
        matrix: DMatrix::from_row_slice(1, n, demand),
        row_lower: vec![f64::NEG_INFINITY],
        row_upper: vec![limits.re_max],
        var_lower: limits.p_min.clone(),
        var_upper: limits.p_max.clone(),
    };
    let report = solve_lp(&lp, 1e-9)?;
    if report.is_optimal() {
        Ok(PriceVector::new(report.solution))
    } else {
        // Even p_min overshoots the cap; stay at the floor.
        Ok(PriceVector::new(limits.p_min.clone()))
    }
}

fn evaluate(
    prices: &PriceVector,
    responder: &dyn Responder,
    cost: &CostModel,
    limits: &MarketLimits,
) -> Result<MarketEvaluation> {
    let responses = responder.respond(prices)?;
    evaluate_prices(prices, &responses, cost, limits)
}

/// One run of the iteration from `initial`; returns the best evaluation seen.
pub fn iterative_optimize(
    initial: &PriceVector,
    responder: &dyn Responder,
    cost: &CostModel,
    limits: &MarketLimits,
    tol: f64,
    max_rounds: usize,
    use_lp: bool,
) -> Result<BaselineOutcome> {
    if !limits.contains(initial) {
        return Err(Error::input("initial prices outside the price bounds"));
    }
    let mut prices = initial.clone();
    let mut best: Option<(PriceVector, MarketEvaluation)> = None;
    let mut rounds = Vec::new();
    let mut consider = |p: &PriceVector, ev: &MarketEvaluation| {
        if best.as_ref().is_none_or(|(_, b)| deb_compare(ev, b) == Ordering::Greater) {
            best = Some((p.clone(), ev.clone()));
        }
    };
    for round in 1..=max_rounds.max(1) {
        let ev = evaluate(&prices, responder, cost, limits)?;
        consider(&prices, &ev);
        let next = if use_lp {
            inner_lp(&ev.demand, limits)?
        } else {
            inner_uniform(&ev.demand, limits)
        };
        let change = next.max_abs_diff(&prices);
        rounds.push(Round {
            restart: 0,
            round,
            max_change: change,
            revenue: ev.revenue,
            cost: ev.cost,
            profit: ev.profit,
            violation: ev.violation,
        });
        let done = change <= tol || round == max_rounds;
        prices = next;
        if done {
            let ev = evaluate(&prices, responder, cost, limits)?;
            consider(&prices, &ev);
            break;
        }
    }
    let (prices, evaluation) = best.expect("at least one round");
    Ok(BaselineOutcome {
        prices,
        evaluation,
        rounds,
    })
}

/// Runs the iteration from `config.restarts` starting points (the uniform
/// `p_min` vector, then random cent-grid vectors) and keeps the best.
pub fn optimize_with_restarts(
    config: &BaselineConfig,
    responder: &dyn Responder,
    cost: &CostModel,
    limits: &MarketLimits,
) -> Result<BaselineOutcome> {
    let mut best: Option<BaselineOutcome> = None;
    let mut rounds = Vec::new();
    for restart in 0..config.restarts.max(1) {
        let initial = if restart == 0 {
            PriceVector::new(limits.p_min.clone())
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(restart as u64);
            PriceVector::new(
                (0..limits.horizon())
                    .map(|h| rng.random_range(to_ticks(limits.p_min[h])..=to_ticks(limits.p_max[h])) as f64 / 100.0)
                    .collect(),
            )
        };
        let mut out = iterative_optimize(&initial, responder, cost, limits, config.tol, config.max_rounds, config.use_lp)?;
        out.rounds.iter_mut().for_each(|r| r.restart = restart);
        rounds.append(&mut out.rounds);
        if best.as_ref().is_none_or(|b| deb_compare(&out.evaluation, &b.evaluation) == Ordering::Greater) {
            best = Some(out);
        }
    }
    let mut best = best.expect("at least one restart");
    best.rounds = rounds;
    Ok(best)
}

pub fn write_rounds<W: Write>(rounds: &[Round], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rounds {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: usize = 24;

    fn limits() -> MarketLimits {
        MarketLimits::uniform(6.0, 14.0, 1.0e4, 2_400.0, H)
    }

    fn cost() -> CostModel {
        CostModel::uniform(0.005, 5.0, 0.0, H)
    }

    /// Fixed demand of 20 kWh per slot regardless of price.
    fn inelastic(p: &PriceVector) -> Result<Vec<ConsumptionProfile>> {
        Ok(vec![ConsumptionProfile::new(vec![20.0; H], p)])
    }

    /// Demand falls linearly with the own-slot price.
    fn elastic(p: &PriceVector) -> Result<Vec<ConsumptionProfile>> {
        let d = p.as_slice().iter().map(|x| 30.0 - 1.5 * x).collect();
        Ok(vec![ConsumptionProfile::new(d, p)])
    }

    #[test]
    fn inelastic_demand_converges_in_two_rounds() {
        let out = iterative_optimize(&PriceVector::uniform(8.0, H), &inelastic, &cost(), &limits(), 0.01, 50, false)
            .unwrap();
        assert_eq!(out.rounds.len(), 2);
        // 2400 / (24 · 20) = 5 < 6, so the cap is hit even at p_min.
        assert_eq!(out.prices, PriceVector::uniform(6.0, H));

        let mut l = limits();
        l.re_max = 4_800.0;
        let out = iterative_optimize(&PriceVector::uniform(6.0, H), &inelastic, &cost(), &l, 0.01, 50, false).unwrap();
        assert_eq!(out.rounds.len(), 2);
        assert_eq!(out.prices, PriceVector::uniform(10.0, H));
        assert!((out.evaluation.revenue - 4_800.0).abs() < 1e-9);
        assert!(out.evaluation.is_feasible());
    }

    #[test]
    fn infinite_tolerance_stops_after_one_round() {
        let out = iterative_optimize(
            &PriceVector::uniform(6.0, H),
            &elastic,
            &cost(),
            &limits(),
            f64::INFINITY,
            50,
            false,
        )
        .unwrap();
        assert_eq!(out.rounds.len(), 1);
    }

    #[test]
    fn uniform_and_lp_inner_solutions_earn_the_same_revenue() {
        let demand: Vec<f64> = (0..H).map(|h| 10.0 + h as f64).collect();
        let mut l = limits();
        l.re_max = 4_000.0;
        let a = inner_uniform(&demand, &l);
        let b = inner_lp(&demand, &l).unwrap();
        let ra = a.dot(&demand);
        let rb = b.dot(&demand);
        assert!(ra <= l.re_max && rb <= l.re_max + 1e-6);
        // Cent flooring loses at most one cent per slot.
        assert!(rb - ra <= demand.iter().sum::<f64>() * 0.01 + 1e-6);
        assert!(l.contains(&a) && l.contains(&b));
    }

    #[test]
    fn returns_best_seen_and_is_feasible_when_floor_is() {
        let config = BaselineConfig {
            seed: 4,
            ..BaselineConfig::default()
        };
        let mut l = limits();
        l.re_max = 5_000.0;
        let out = optimize_with_restarts(&config, &elastic, &cost(), &l).unwrap();
        assert!(out.evaluation.is_feasible());
        let restarts: std::collections::BTreeSet<_> = out.rounds.iter().map(|r| r.restart).collect();
        assert_eq!(restarts.len(), 3);
        for r in out.rounds.iter().filter(|r| r.violation == 0.0) {
            assert!(r.profit <= out.evaluation.profit + 1e-9);
        }
    }

    #[test]
    fn rejects_out_of_bounds_start() {
        let r = iterative_optimize(&PriceVector::uniform(20.0, H), &elastic, &cost(), &limits(), 0.01, 5, false);
        assert!(matches!(r, Err(Error::Input(_))));
    }

    #[test]
    fn responder_errors_propagate() {
        let failing = |_: &PriceVector| -> Result<Vec<ConsumptionProfile>> { Err(Error::infeasible("no schedule")) };
        let r = iterative_optimize(&PriceVector::uniform(6.0, H), &failing, &cost(), &limits(), 0.01, 5, false);
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn rounds_csv_has_header() {
        let out = iterative_optimize(&PriceVector::uniform(8.0, H), &inelastic, &cost(), &limits(), 0.01, 5, false)
            .unwrap();
        let mut buf = Vec::new();
        write_rounds(&out.rounds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("restart,round,max_change,revenue,cost,profit,violation\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
