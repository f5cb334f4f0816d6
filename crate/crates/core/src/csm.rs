//! Learned demand models for smart-meter households without a HEMS.
//!
//! Shiftable appliances get a rank-probability model: the probability that
//! the household runs the appliance on its i-th cheapest candidate schedule,
//! updated recursively one metered day at a time. Curtailable appliances get
//! a per-slot linear demand function fitted by least squares.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::hems::{ApplianceKind, ApplianceLoad, ApplianceSpec, ConsumptionProfile};
use crate::{Error, PriceVector, Result, Window};

/// Appliances with more candidate schedules than this are rejected.
pub const MAX_SCHEDULES: usize = 4096;

const CONDITION_LIMIT: f64 = 1e10;
const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Enumeration {
    /// Any subset of window slots of the run length.
    Combinations,
    /// One contiguous block per feasible start.
    Contiguous,
}

/// Every way a shiftable appliance can be operated inside its window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSet {
    pub appliance: String,
    pub horizon: usize,
    pub enumeration: Enumeration,
    /// Energy drawn in each occupied slot (E / L).
    pub slot_energy: f64,
    /// Slot indices of each schedule, in window order.
    pub schedules: Vec<Vec<usize>>,
}

impl ScheduleSet {
    pub fn len(&self) -> usize {
        self.schedules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schedules.is_empty()
    }

    /// Index of the schedule whose occupied slots are exactly the nonzero
    /// entries of `consumption`.
    pub fn index_of(&self, consumption: &[f64]) -> Option<usize> {
        let mut used: Vec<usize> = (0..consumption.len()).filter(|&h| consumption[h] > 1e-9).collect();
        used.sort_unstable();
        self.schedules.iter().position(|s| {
            let mut sorted = s.clone();
            sorted.sort_unstable();
            sorted == used
        })
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Lexicographic `k`-subsets of `0..n`.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn enumerate_schedules(spec: &ApplianceSpec, horizon: usize) -> Result<ScheduleSet> {
    spec.validate(horizon)?;
    let window = spec.window;
    let t = window.len;
    let (enumeration, run) = match spec.load {
        ApplianceLoad::Interruptible { .. } => (Enumeration::Combinations, spec.run_slots().unwrap_or(0)),
        ApplianceLoad::NonInterruptible { run_length, .. } => (Enumeration::Contiguous, run_length),
        ApplianceLoad::Curtailable { .. } => {
            return Err(Error::input(format!("appliance '{}' is not shiftable", spec.name)))
        }
    };
    if run > t {
        return Err(Error::infeasible(format!(
            "appliance '{}' needs {run} slots, window has {t}",
            spec.name
        )));
    }
    let count = match enumeration {
        Enumeration::Combinations => binomial(t, run),
        Enumeration::Contiguous => (t - run + 1) as u128,
    };
    if count > MAX_SCHEDULES as u128 {
        return Err(Error::Config(format!(
            "appliance '{}' has {count} candidate schedules (limit {MAX_SCHEDULES})",
            spec.name
        )));
    }
    let positions = match enumeration {
        Enumeration::Combinations => combinations(t, run),
        Enumeration::Contiguous => (0..=t - run).map(|s| (s..s + run).collect()).collect(),
    };
    let schedules = positions
        .into_iter()
        .map(|ps: Vec<usize>| ps.into_iter().map(|p| window.slot(p, horizon)).collect())
        .collect();
    Ok(ScheduleSet {
        appliance: spec.name.clone(),
        horizon,
        enumeration,
        slot_energy: spec.energy() / run as f64,
        schedules,
    })
}

/// Schedules sorted by price sum, equal sums kept in enumeration order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCosts {
    /// `order[m]` is the schedule index of the (m+1)-th cheapest schedule.
    pub order: Vec<usize>,
    /// Price sums in hundredths of a cent, ascending.
    pub ticks: Vec<i64>,
}

impl RankedCosts {
    /// Price sum of the (m+1)-th cheapest schedule in cents.
    pub fn cost(&self, m: usize) -> f64 {
        self.ticks[m] as f64 / 100.0
    }

    pub fn rank_of(&self, schedule: usize) -> Option<usize> {
        self.order.iter().position(|&s| s == schedule)
    }
}

pub fn rank_costs(prices: &PriceVector, schedules: &ScheduleSet) -> RankedCosts {
    let ticks = prices.ticks();
    let costs: Vec<i64> = schedules
        .schedules
        .iter()
        .map(|s| s.iter().map(|&h| ticks[h]).sum())
        .collect();
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by_key(|&j| costs[j]);
    let ticks = order.iter().map(|&j| costs[j]).collect();
    RankedCosts { order, ticks }
}

/// Probability that the appliance is operated on its i-th cheapest schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankProbabilityModel {
    pub probabilities: Vec<f64>,
    /// Number of days folded in so far.
    pub observations: usize,
    /// Running sums of δ. Probabilities are `frequencies / observations`,
    /// which equals the recursive update but reproduces batch frequencies
    /// exactly on tie-free histories.
    frequencies: Vec<f64>,
}

impl RankProbabilityModel {
    /// Uninformed start: every rank equally likely, no observations.
    pub fn uniform(k: usize) -> Self {
        RankProbabilityModel {
            probabilities: vec![1.0 / k as f64; k],
            observations: 0,
            frequencies: vec![0.0; k],
        }
    }

    /// Model that has seen `observations` days and currently holds
    /// `probabilities`.
    pub fn from_probabilities(probabilities: Vec<f64>, observations: usize) -> Self {
        let frequencies = probabilities.iter().map(|p| p * observations as f64).collect();
        RankProbabilityModel {
            probabilities,
            observations,
            frequencies,
        }
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Folds in one day on which schedule `observed` was used.
    pub fn update(&self, ranked: &RankedCosts, observed: usize) -> Result<Self> {
        let k = self.len();
        if ranked.order.len() != k {
            return Err(Error::input(format!(
                "model has {k} ranks, ranking has {}",
                ranked.order.len()
            )));
        }
        let rank = ranked
            .rank_of(observed)
            .ok_or_else(|| Error::input(format!("schedule {observed} is not one of the {k} candidates")))?;
        let delta = self.indicator(ranked, rank);
        // P(d+1) = P(d) + (δ − P(d))/(d+1) = (f(d) + δ)/(d+1)
        let frequencies: Vec<f64> = self.frequencies.iter().zip(&delta).map(|(f, d)| f + d).collect();
        let days = (self.observations + 1) as f64;
        let probabilities = frequencies.iter().map(|f| f / days).collect();
        Ok(RankProbabilityModel {
            probabilities,
            observations: self.observations + 1,
            frequencies,
        })
    }

    /// The new-information vector δ for an observation at `rank`. Ranks that
    /// tie with the observed cost share the unit mass in proportion to their
    /// current probabilities (uniformly if those are all zero).
    fn indicator(&self, ranked: &RankedCosts, rank: usize) -> Vec<f64> {
        let k = self.len();
        let cost = ranked.ticks[rank];
        let tied: Vec<usize> = (0..k).filter(|&m| ranked.ticks[m] == cost).collect();
        let mut delta = vec![0.0; k];
        if tied.len() == 1 {
            delta[rank] = 1.0;
            return delta;
        }
        let denom: f64 = tied.iter().map(|&m| self.probabilities[m]).sum();
        for &m in &tied {
            delta[m] = if denom > 0.0 {
                self.probabilities[m] / denom
            } else {
                1.0 / tied.len() as f64
            };
        }
        delta
    }

    /// Learns from a day-ordered history of (prices, metered consumption),
    /// starting from the uniform prior.
    pub fn learn<'a>(
        schedules: &ScheduleSet,
        days: impl IntoIterator<Item = (&'a PriceVector, &'a [f64])>,
    ) -> Result<Self> {
        let mut model = Self::uniform(schedules.len());
        for (day, (prices, consumption)) in days.into_iter().enumerate() {
            let observed = schedules.index_of(consumption).ok_or_else(|| {
                Error::input(format!(
                    "day {}: usage of '{}' matches no candidate schedule",
                    day + 1,
                    schedules.appliance
                ))
            })?;
            model = model.update(&rank_costs(prices, schedules), observed)?;
        }
        Ok(model)
    }
}

/// Expected hourly consumption and expected bill of one shiftable appliance.
pub fn expected_shiftable_demand(
    prices: &PriceVector,
    model: &RankProbabilityModel,
    schedules: &ScheduleSet,
) -> Result<(Vec<f64>, f64)> {
    if model.len() != schedules.len() {
        return Err(Error::input(format!(
            "model has {} ranks, '{}' has {} schedules",
            model.len(),
            schedules.appliance,
            schedules.len()
        )));
    }
    let ranked = rank_costs(prices, schedules);
    let e = schedules.slot_energy;
    let mut hourly = vec![0.0; prices.len()];
    let mut bill = 0.0;
    for (m, (&j, &p)) in ranked.order.iter().zip(&model.probabilities).enumerate() {
        if p == 0.0 {
            continue;
        }
        for &h in &schedules.schedules[j] {
            hourly[h] += e * p;
        }
        bill += ranked.cost(m) * e * p;
    }
    Ok((hourly, bill))
}

/// Linear demand of a curtailable appliance: for each window slot h,
/// ŷ_h = α_h + Σ_l β_{h,l} p_l over the window prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurtailableDemandModel {
    pub appliance: String,
    pub window: Window,
    pub intercepts: Vec<f64>,
    /// `coefficients[h][l]`, both indexed by window position.
    pub coefficients: Vec<Vec<f64>>,
}

/// One metered day restricted to the appliance window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowObservation {
    pub prices: Vec<f64>,
    pub consumption: Vec<f64>,
}

impl WindowObservation {
    pub fn from_day(window: &Window, prices: &PriceVector, consumption: &[f64]) -> Self {
        let horizon = prices.len();
        WindowObservation {
            prices: window.slots(horizon).map(|h| prices[h]).collect(),
            consumption: window.slots(horizon).map(|h| consumption[h]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Add a small ridge term when the normal matrix is ill-conditioned
    /// instead of failing.
    pub ridge: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { ridge: true }
    }
}

/// Ordinary least squares through the normal equations, one regression per
/// window slot sharing the same design matrix.
pub fn fit_curtailable_demand(
    appliance: &str,
    window: Window,
    history: &[WindowObservation],
    options: FitOptions,
) -> Result<CurtailableDemandModel> {
    let t = window.len;
    let d = history.len();
    if d < t + 1 {
        return Err(Error::input(format!(
            "'{appliance}': {d} days cannot identify {} parameters per slot",
            t + 1
        )));
    }
    if let Some(i) = history.iter().position(|o| o.prices.len() != t || o.consumption.len() != t) {
        return Err(Error::input(format!("'{appliance}': day {} does not span the window", i + 1)));
    }
    let design = DMatrix::from_fn(d, t + 1, |r, c| if c == 0 { 1.0 } else { history[r].prices[c - 1] });
    let mut normal = design.transpose() * &design;

    let eig = SymmetricEigen::new(normal.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > CONDITION_LIMIT {
        if !options.ridge {
            return Err(Error::SingularFit(format!(
                "'{appliance}': normal matrix condition number {condition:.3e}"
            )));
        }
        for i in 0..=t {
            normal[(i, i)] += RIDGE;
        }
    }
    let chol = normal
        .cholesky()
        .ok_or_else(|| Error::SingularFit(format!("'{appliance}': normal matrix not positive definite")))?;

    let mut intercepts = Vec::with_capacity(t);
    let mut coefficients = Vec::with_capacity(t);
    for h in 0..t {
        let y = DVector::from_fn(d, |r, _| history[r].consumption[h]);
        let theta = chol.solve(&(design.transpose() * y));
        intercepts.push(theta[0]);
        coefficients.push(theta.iter().skip(1).copied().collect());
    }
    Ok(CurtailableDemandModel {
        appliance: appliance.to_owned(),
        window,
        intercepts,
        coefficients,
    })
}

impl CurtailableDemandModel {
    /// Unclamped linear prediction per window position.
    pub fn raw_prediction(&self, prices: &PriceVector) -> Vec<f64> {
        let horizon = prices.len();
        let window_prices: Vec<f64> = self.window.slots(horizon).map(|h| prices[h]).collect();
        self.intercepts
            .iter()
            .zip(&self.coefficients)
            .map(|(a, row)| a + row.iter().zip(&window_prices).map(|(b, p)| b * p).sum::<f64>())
            .collect()
    }
}

/// Expected per-slot consumption (clamped at zero) and the matching bill.
pub fn predict_curtailable(model: &CurtailableDemandModel, prices: &PriceVector) -> (Vec<f64>, f64) {
    let horizon = prices.len();
    let mut hourly = vec![0.0; horizon];
    for (h, y) in model.window.slots(horizon).zip(model.raw_prediction(prices)) {
        hourly[h] = y.max(0.0);
    }
    let bill = prices.dot(&hourly);
    (hourly, bill)
}

/// Shiftable appliance paired with its learned usage model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftableModel {
    pub schedules: ScheduleSet,
    pub model: RankProbabilityModel,
}

/// Everything the retailer knows about one smart-meter household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmHouseholdModel {
    pub background: Vec<f64>,
    pub shiftable: Vec<ShiftableModel>,
    pub curtailable: Vec<CurtailableDemandModel>,
    pub pv: Option<Vec<f64>>,
}

impl SmHouseholdModel {
    /// Expected net grid consumption and expected bill.
    pub fn respond(&self, prices: &PriceVector) -> Result<ConsumptionProfile> {
        let horizon = prices.len();
        if self.background.len() != horizon {
            return Err(Error::input("background length does not match the price horizon"));
        }
        let mut net = self.background.clone();
        let mut bill = prices.dot(&self.background);
        for s in &self.shiftable {
            let (hourly, b) = expected_shiftable_demand(prices, &s.model, &s.schedules)?;
            net.iter_mut().zip(&hourly).for_each(|(n, x)| *n += x);
            bill += b;
        }
        for c in &self.curtailable {
            let (hourly, b) = predict_curtailable(c, prices);
            net.iter_mut().zip(&hourly).for_each(|(n, x)| *n += x);
            bill += b;
        }
        if let Some(pv) = &self.pv {
            net.iter_mut().zip(pv).for_each(|(n, g)| *n -= g);
            bill -= prices.dot(pv);
        }
        Ok(ConsumptionProfile { consumption: net, bill })
    }

    /// Applies one metered day: a rank update per shiftable appliance.
    /// `usage[i]` is the metered consumption of `shiftable[i]`.
    pub fn observe_day(&mut self, prices: &PriceVector, usage: &[Vec<f64>]) -> Result<()> {
        if usage.len() != self.shiftable.len() {
            return Err(Error::input("one usage vector per shiftable appliance expected"));
        }
        for (s, x) in self.shiftable.iter_mut().zip(usage) {
            let observed = s.schedules.index_of(x).ok_or_else(|| {
                Error::input(format!("usage of '{}' matches no candidate schedule", s.schedules.appliance))
            })?;
            s.model = s.model.update(&rank_costs(prices, &s.schedules), observed)?;
        }
        Ok(())
    }
}

/// Checks that `spec` is a shiftable appliance; used when building models.
pub fn require_shiftable(spec: &ApplianceSpec) -> Result<()> {
    match spec.kind() {
        ApplianceKind::Curtailable => Err(Error::input(format!("appliance '{}' is not shiftable", spec.name))),
        _ => Ok(()),
    }
}
