//! Retailer economics: procurement cost, revenue, profit and the capacity and
//! revenue-cap constraints.

use serde::{Deserialize, Serialize};

use crate::hems::ConsumptionProfile;
use crate::{Error, PriceVector, Result};

/// Per-slot procurement cost `C_h(L) = a_h L² + b_h L + c_h` in cents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl CostModel {
    pub fn uniform(a: f64, b: f64, c: f64, horizon: usize) -> Self {
        CostModel {
            a: vec![a; horizon],
            b: vec![b; horizon],
            c: vec![c; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.len();
        if self.b.len() != n || self.c.len() != n {
            return Err(Error::input("cost coefficient vectors differ in length"));
        }
        if self.a.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::input("quadratic cost coefficients must be positive"));
        }
        if self.b.iter().chain(&self.c).any(|&v| !(v >= 0.0)) {
            return Err(Error::input("linear and constant cost coefficients must be nonnegative"));
        }
        Ok(())
    }

    pub fn slot_cost(&self, h: usize, load: f64) -> f64 {
        self.a[h] * load * load + self.b[h] * load + self.c[h]
    }

    pub fn total(&self, loads: &[f64]) -> f64 {
        loads.iter().enumerate().map(|(h, &l)| self.slot_cost(h, l)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketLimits {
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
    /// Per-slot capacity, kWh.
    pub e_max: Vec<f64>,
    /// Revenue cap, cents.
    pub re_max: f64,
}

impl MarketLimits {
    pub fn uniform(p_min: f64, p_max: f64, e_max: f64, re_max: f64, horizon: usize) -> Self {
        MarketLimits {
            p_min: vec![p_min; horizon],
            p_max: vec![p_max; horizon],
            e_max: vec![e_max; horizon],
            re_max,
        }
    }

    pub fn horizon(&self) -> usize {
        self.p_min.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.p_min.len();
        if self.p_max.len() != n || self.e_max.len() != n {
            return Err(Error::input("market limit vectors differ in length"));
        }
        if self.p_min.iter().zip(&self.p_max).any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::input("p_min must not exceed p_max"));
        }
        if self.e_max.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::input("capacity limits must be positive"));
        }
        if !(self.re_max > 0.0) {
            return Err(Error::input("revenue cap must be positive"));
        }
        Ok(())
    }

    pub fn contains(&self, prices: &PriceVector) -> bool {
        prices.len() == self.horizon()
            && (0..prices.len()).all(|h| self.p_min[h] <= prices[h] && prices[h] <= self.p_max[h])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketEvaluation {
    /// Aggregate demand per slot, kWh.
    pub demand: Vec<f64>,
    pub revenue: f64,
    pub cost: f64,
    pub profit: f64,
    /// Sum of relative excesses over capacity and revenue cap; 0 when feasible.
    pub violation: f64,
}

impl MarketEvaluation {
    pub fn is_feasible(&self) -> bool {
        self.violation == 0.0
    }
}

/// Aggregates the group responses to `prices` and scores them.
///
/// Revenue is the sum of the groups' (expected) bills, not `p·E`, so groups
/// that report a bill for exported energy are credited consistently.
pub fn evaluate_prices(
    prices: &PriceVector,
    responses: &[ConsumptionProfile],
    cost_model: &CostModel,
    limits: &MarketLimits,
) -> Result<MarketEvaluation> {
    let n = prices.len();
    if cost_model.horizon() != n || limits.horizon() != n {
        return Err(Error::input(format!(
            "prices have {n} slots, cost model {} and limits {}",
            cost_model.horizon(),
            limits.horizon()
        )));
    }
    let mut demand = vec![0.0; n];
    let mut revenue = 0.0;
    for (g, r) in responses.iter().enumerate() {
        if r.consumption.len() != n {
            return Err(Error::input(format!("group response {g} has {} slots, expected {n}", r.consumption.len())));
        }
        demand.iter_mut().zip(&r.consumption).for_each(|(e, x)| *e += x);
        revenue += r.bill;
    }
    let cost = cost_model.total(&demand);
    let capacity: f64 = demand
        .iter()
        .zip(&limits.e_max)
        .map(|(e, cap)| ((e - cap) / cap).max(0.0))
        .sum();
    let cap = ((revenue - limits.re_max) / limits.re_max).max(0.0);
    Ok(MarketEvaluation {
        demand,
        revenue,
        cost,
        profit: revenue - cost,
        violation: capacity + cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const H: usize = 24;

    fn limits() -> MarketLimits {
        MarketLimits::uniform(6.0, 14.0, 100.0, 35_000.0, H)
    }

    fn profile(consumption: Vec<f64>, prices: &PriceVector) -> ConsumptionProfile {
        ConsumptionProfile::new(consumption, prices)
    }

    #[test]
    fn zero_demand_costs_the_constants() {
        let prices = PriceVector::uniform(10.0, H);
        let cost = CostModel::uniform(0.005, 5.0, 3.0, H);
        let ev = evaluate_prices(&prices, &[profile(vec![0.0; H], &prices)], &cost, &limits()).unwrap();
        assert_eq!(ev.revenue, 0.0);
        assert_eq!(ev.cost, 72.0);
        assert_eq!(ev.profit, -72.0);
        assert_eq!(ev.violation, 0.0);
    }

    #[test]
    fn quadratic_slot_cost() {
        let cost = CostModel::uniform(0.01, 0.0, 0.0, 1);
        assert!((cost.slot_cost(0, 10.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_hand_summation() {
        let prices = PriceVector::new((0..H).map(|h| 6.0 + (h % 9) as f64).collect());
        let groups: Vec<Vec<f64>> = (0..3)
            .map(|g| (0..H).map(|h| ((g * 7 + h * 3) % 11) as f64 * 1.25).collect())
            .collect();
        let responses: Vec<_> = groups.iter().map(|c| profile(c.clone(), &prices)).collect();
        let cost = CostModel {
            a: (0..H).map(|h| 0.004 + h as f64 * 1e-4).collect(),
            b: vec![5.0; H],
            c: vec![0.5; H],
        };
        let mut lim = limits();
        lim.e_max = vec![25.0; H];
        lim.re_max = 2_000.0;
        let ev = evaluate_prices(&prices, &responses, &cost, &lim).unwrap();

        let mut revenue = 0.0;
        let mut total_cost = 0.0;
        let mut violation = 0.0;
        for h in 0..H {
            let e = groups[0][h] + groups[1][h] + groups[2][h];
            revenue += prices[h] * e;
            total_cost += cost.a[h] * e * e + cost.b[h] * e + cost.c[h];
            if e > 25.0 {
                violation += (e - 25.0) / 25.0;
            }
            assert!((ev.demand[h] - e).abs() < 1e-9);
        }
        if revenue > 2_000.0 {
            violation += (revenue - 2_000.0) / 2_000.0;
        }
        assert!((ev.revenue - revenue).abs() < 1e-9);
        assert!((ev.cost - total_cost).abs() < 1e-9);
        assert!((ev.violation - violation).abs() < 1e-9);
        assert!(ev.violation > 0.0);
    }

    #[test]
    fn horizon_mismatch_is_input_error() {
        let prices = PriceVector::uniform(10.0, H);
        let cost = CostModel::uniform(0.005, 5.0, 0.0, H - 1);
        let r = evaluate_prices(&prices, &[], &cost, &limits());
        assert!(matches!(r, Err(Error::Input(_))));
        let r = evaluate_prices(
            &prices,
            &[profile(vec![1.0; 3], &PriceVector::uniform(10.0, 3))],
            &CostModel::uniform(0.005, 5.0, 0.0, H),
            &limits(),
        );
        assert!(matches!(r, Err(Error::Input(_))));
    }

    #[test]
    fn validation() {
        assert!(CostModel::uniform(0.0, 5.0, 0.0, H).validate().is_err());
        assert!(CostModel::uniform(0.005, -1.0, 0.0, H).validate().is_err());
        assert!(MarketLimits::uniform(14.0, 6.0, 1.0, 1.0, H).validate().is_err());
        assert!(MarketLimits::uniform(6.0, 14.0, 0.0, 1.0, H).validate().is_err());
        limits().validate().unwrap();
    }

    proptest! {
        #[test]
        fn cost_is_convex(a in 1e-4f64..1.0, b in 0.0f64..10.0, l in 0.0f64..500.0, d in 0.01f64..50.0, step in 0.01f64..50.0) {
            let cost = CostModel::uniform(a, b, 0.0, 1);
            let lower = cost.slot_cost(0, l) - cost.slot_cost(0, l - d);
            let upper = cost.slot_cost(0, l + step) - cost.slot_cost(0, l + step - d);
            prop_assert!(upper >= lower - 1e-9);
        }

        #[test]
        fn profit_identity_and_zero_violation_iff_feasible(
            loads in proptest::collection::vec(0.0f64..200.0, H),
            price in 6.0f64..14.0,
        ) {
            let prices = PriceVector::uniform(price, H);
            let lim = limits();
            let cost = CostModel::uniform(0.005, 5.0, 0.0, H);
            let ev = evaluate_prices(&prices, &[profile(loads.clone(), &prices)], &cost, &lim).unwrap();
            prop_assert!((ev.profit + ev.cost - ev.revenue).abs() <= 1e-9 * ev.revenue.abs().max(1.0));
            let holds = loads.iter().all(|&e| e <= 100.0) && ev.revenue <= lim.re_max;
            prop_assert_eq!(ev.is_feasible(), holds);
        }
    }
}
