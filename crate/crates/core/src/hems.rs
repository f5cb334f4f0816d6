//! Exact bill-minimizing schedulers for households with a home energy
//! management system, plus battery arbitrage and PV netting.
//!
//! Interruptible and non-interruptible appliances are small integer programs
//! with enough structure to be solved combinatorially: pick the cheapest
//! slots, or the cheapest sliding window. Curtailable appliances are an LP
//! whose optimum is a greedy fill. Storage goes through the simplex solver.
//!
//! Ties always go to the earliest position in the appliance window, and all
//! price comparisons use integer hundredths of a cent.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::numerics::{solve_lp, LinearProgram, SolveStatus};
use crate::{Error, PriceVector, Result, Window};

const ENERGY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplianceKind {
    Interruptible,
    NonInterruptible,
    Curtailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ApplianceLoad {
    /// Runs at `rated` kWh in any `energy / rated` slots of the window.
    Interruptible { rated: f64, energy: f64 },
    /// Runs at `rated` kWh for `run_length` consecutive slots.
    NonInterruptible { rated: f64, run_length: usize },
    /// Consumes between `u_lower` and `u_upper` kWh in every window slot and
    /// at least `u_min` kWh in total.
    Curtailable { u_lower: f64, u_upper: f64, u_min: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceSpec {
    pub name: String,
    pub window: Window,
    pub load: ApplianceLoad,
}

impl ApplianceSpec {
    pub fn interruptible(name: &str, window: Window, rated: f64, energy: f64) -> Self {
        ApplianceSpec {
            name: name.to_owned(),
            window,
            load: ApplianceLoad::Interruptible { rated, energy },
        }
    }

    pub fn non_interruptible(name: &str, window: Window, rated: f64, run_length: usize) -> Self {
        ApplianceSpec {
            name: name.to_owned(),
            window,
            load: ApplianceLoad::NonInterruptible { rated, run_length },
        }
    }

    pub fn curtailable(name: &str, window: Window, u_lower: f64, u_upper: f64, u_min: f64) -> Self {
        ApplianceSpec {
            name: name.to_owned(),
            window,
            load: ApplianceLoad::Curtailable { u_lower, u_upper, u_min },
        }
    }

    pub fn kind(&self) -> ApplianceKind {
        match self.load {
            ApplianceLoad::Interruptible { .. } => ApplianceKind::Interruptible,
            ApplianceLoad::NonInterruptible { .. } => ApplianceKind::NonInterruptible,
            ApplianceLoad::Curtailable { .. } => ApplianceKind::Curtailable,
        }
    }

    pub fn is_shiftable(&self) -> bool {
        self.kind() != ApplianceKind::Curtailable
    }

    /// Total energy the appliance needs (the minimum, for curtailable).
    pub fn energy(&self) -> f64 {
        match self.load {
            ApplianceLoad::Interruptible { energy, .. } => energy,
            ApplianceLoad::NonInterruptible { rated, run_length } => rated * run_length as f64,
            ApplianceLoad::Curtailable { u_min, .. } => u_min,
        }
    }

    /// Number of slots a shiftable appliance occupies; a fractional
    /// remainder occupies one extra slot.
    pub fn run_slots(&self) -> Option<usize> {
        match self.load {
            ApplianceLoad::Interruptible { rated, energy } => {
                let (full, rem) = split_energy(energy, rated);
                Some(full + usize::from(rem > 0.0))
            }
            ApplianceLoad::NonInterruptible { run_length, .. } => Some(run_length),
            ApplianceLoad::Curtailable { .. } => None,
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        self.window.check(horizon)?;
        let t = self.window.len;
        let bad = |msg: String| Err(Error::input(format!("appliance '{}': {msg}", self.name)));
        match self.load {
            ApplianceLoad::Interruptible { rated, energy } => {
                if !(rated > 0.0 && energy > 0.0) {
                    return bad("rated power and energy must be positive".into());
                }
            }
            ApplianceLoad::NonInterruptible { rated, run_length } => {
                if !(rated > 0.0) || run_length == 0 {
                    return bad("rated power and run length must be positive".into());
                }
            }
            ApplianceLoad::Curtailable { u_lower, u_upper, u_min } => {
                if !(0.0 <= u_lower && u_lower <= u_upper) {
                    return bad("need 0 <= u_lower <= u_upper".into());
                }
                if u_lower * t as f64 > u_min + ENERGY_EPS {
                    return bad(format!("window minimum {} exceeds u_min {u_min}", u_lower * t as f64));
                }
            }
        }
        Ok(())
    }
}

/// Splits `energy` into whole slots at `rated` plus a remainder in `[0, rated)`.
fn split_energy(energy: f64, rated: f64) -> (usize, f64) {
    let ratio = energy / rated;
    let full = (ratio + ENERGY_EPS).floor();
    let rem = energy - full * rated;
    (full as usize, if rem > ENERGY_EPS { rem } else { 0.0 })
}

/// Per-slot grid consumption and its bill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumptionProfile {
    pub consumption: Vec<f64>,
    pub bill: f64,
}

impl ConsumptionProfile {
    pub fn new(consumption: Vec<f64>, prices: &PriceVector) -> Self {
        let bill = prices.dot(&consumption);
        ConsumptionProfile { consumption, bill }
    }

    pub fn zeros(horizon: usize) -> Self {
        ConsumptionProfile {
            consumption: vec![0.0; horizon],
            bill: 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.consumption.iter().sum()
    }
}

fn kind_mismatch(spec: &ApplianceSpec, want: &str) -> Error {
    Error::input(format!("appliance '{}' is not {want}", spec.name))
}

/// Window positions ordered by price, earliest first among equal prices.
fn positions_by_price(ticks: &[i64], window: &Window) -> Vec<usize> {
    let horizon = ticks.len();
    let mut order: Vec<usize> = (0..window.len).collect();
    order.sort_by_key(|&pos| ticks[window.slot(pos, horizon)]);
    order
}

pub fn schedule_interruptible(prices: &PriceVector, spec: &ApplianceSpec) -> Result<ConsumptionProfile> {
    let ApplianceLoad::Interruptible { rated, energy } = spec.load else {
        return Err(kind_mismatch(spec, "interruptible"));
    };
    let horizon = prices.len();
    spec.validate(horizon)?;
    let (full, rem) = split_energy(energy, rated);
    let needed = full + usize::from(rem > 0.0);
    if needed > spec.window.len {
        return Err(Error::infeasible(format!(
            "appliance '{}' needs {needed} slots, window has {}",
            spec.name, spec.window.len
        )));
    }
    let order = positions_by_price(&prices.ticks(), &spec.window);
    let mut consumption = vec![0.0; horizon];
    for &pos in &order[..full] {
        consumption[spec.window.slot(pos, horizon)] = rated;
    }
    if rem > 0.0 {
        consumption[spec.window.slot(order[full], horizon)] = rem;
    }
    Ok(ConsumptionProfile::new(consumption, prices))
}

/// Window position of the cheapest `run`-slot block, earliest on ties.
pub(crate) fn cheapest_block(ticks: &[i64], window: &Window, run: usize) -> Option<usize> {
    let horizon = ticks.len();
    if run == 0 || run > window.len {
        return None;
    }
    let at = |pos: usize| ticks[window.slot(pos, horizon)];
    let mut sum: i64 = (0..run).map(at).sum();
    let (mut best, mut best_sum) = (0, sum);
    for start in 1..=window.len - run {
        sum += at(start + run - 1) - at(start - 1);
        if sum < best_sum {
            best = start;
            best_sum = sum;
        }
    }
    Some(best)
}

pub fn schedule_non_interruptible(prices: &PriceVector, spec: &ApplianceSpec) -> Result<ConsumptionProfile> {
    let ApplianceLoad::NonInterruptible { rated, run_length } = spec.load else {
        return Err(kind_mismatch(spec, "non-interruptible"));
    };
    let horizon = prices.len();
    spec.validate(horizon)?;
    let start = cheapest_block(&prices.ticks(), &spec.window, run_length).ok_or_else(|| {
        Error::infeasible(format!(
            "appliance '{}' runs {run_length} slots, window has {}",
            spec.name, spec.window.len
        ))
    })?;
    let mut consumption = vec![0.0; horizon];
    for pos in start..start + run_length {
        consumption[spec.window.slot(pos, horizon)] = rated;
    }
    Ok(ConsumptionProfile::new(consumption, prices))
}

pub fn schedule_curtailable(prices: &PriceVector, spec: &ApplianceSpec) -> Result<ConsumptionProfile> {
    let ApplianceLoad::Curtailable { u_lower, u_upper, u_min } = spec.load else {
        return Err(kind_mismatch(spec, "curtailable"));
    };
    let horizon = prices.len();
    spec.validate(horizon)?;
    let t = spec.window.len as f64;
    if u_upper * t < u_min - ENERGY_EPS {
        return Err(Error::infeasible(format!(
            "appliance '{}' cannot reach {u_min} kWh at {u_upper} kWh/slot over {t} slots",
            spec.name
        )));
    }
    let mut consumption = vec![0.0; horizon];
    for slot in spec.window.slots(horizon) {
        consumption[slot] = u_lower;
    }
    let mut deficit = u_min - u_lower * t;
    if deficit > ENERGY_EPS {
        let headroom = u_upper - u_lower;
        for pos in positions_by_price(&prices.ticks(), &spec.window) {
            if deficit <= ENERGY_EPS {
                break;
            }
            let add = headroom.min(deficit);
            consumption[spec.window.slot(pos, horizon)] += add;
            deficit -= add;
        }
    }
    Ok(ConsumptionProfile::new(consumption, prices))
}

/// Dispatches on the appliance kind.
pub fn schedule_appliance(prices: &PriceVector, spec: &ApplianceSpec) -> Result<ConsumptionProfile> {
    match spec.kind() {
        ApplianceKind::Interruptible => schedule_interruptible(prices, spec),
        ApplianceKind::NonInterruptible => schedule_non_interruptible(prices, spec),
        ApplianceKind::Curtailable => schedule_curtailable(prices, spec),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    pub capacity: f64,
    /// Max charge or discharge per slot, kWh.
    pub rate: f64,
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_soc: f64,
    #[serde(default = "unit_efficiency")]
    pub efficiency: f64,
    #[serde(default)]
    pub sell_back: bool,
}

fn unit_efficiency() -> f64 {
    1.0
}

impl StorageSpec {
    /// 10 kWh battery, 2 kWh/slot, starting and ending at 80%.
    pub fn reference(sell_back: bool) -> Self {
        StorageSpec {
            capacity: 10.0,
            rate: 2.0,
            initial: 8.0,
            final_soc: 8.0,
            efficiency: 1.0,
            sell_back,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |v: f64| (0.0..=self.capacity).contains(&v);
        if !(self.capacity > 0.0 && self.rate > 0.0) {
            return Err(Error::input("storage capacity and rate must be positive"));
        }
        if !in_range(self.initial) || !in_range(self.final_soc) {
            return Err(Error::input("storage initial/final SoC outside [0, capacity]"));
        }
        if self.efficiency != 1.0 {
            return Err(Error::input("only perfect charge/discharge efficiency is supported"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageSchedule {
    pub charge: Vec<f64>,
    pub discharge: Vec<f64>,
    /// State of charge at the end of each slot.
    pub soc: Vec<f64>,
    /// Σ p_h (charge_h − discharge_h), cents.
    pub cost: f64,
}

impl StorageSchedule {
    pub fn net(&self) -> Vec<f64> {
        self.charge.iter().zip(&self.discharge).map(|(c, d)| c - d).collect()
    }
}

/// Battery arbitrage LP. Without sell-back, discharge in a slot cannot exceed
/// `load` in that slot, so the household never exports stored energy.
pub fn schedule_storage(prices: &PriceVector, spec: &StorageSpec, load: &[f64]) -> Result<StorageSchedule> {
    spec.validate()?;
    let h = prices.len();
    if load.len() != h {
        return Err(Error::input(format!("load has {} slots, prices have {h}", load.len())));
    }
    if load.iter().any(|&l| l < 0.0) {
        return Err(Error::input("appliance load must be nonnegative"));
    }

    // Variables: charge_0..charge_{h-1}, discharge_0..discharge_{h-1}.
    let mut objective = prices.as_slice().to_vec();
    objective.extend(prices.as_slice().iter().map(|p| -p));
    let mut matrix = DMatrix::zeros(h, 2 * h);
    let mut row_lower = Vec::with_capacity(h);
    let mut row_upper = Vec::with_capacity(h);
    for r in 0..h {
        for t in 0..=r {
            matrix[(r, t)] = 1.0;
            matrix[(r, h + t)] = -1.0;
        }
        if r + 1 == h {
            row_lower.push(spec.final_soc - spec.initial);
            row_upper.push(spec.final_soc - spec.initial);
        } else {
            row_lower.push(-spec.initial);
            row_upper.push(spec.capacity - spec.initial);
        }
    }
    let mut var_upper = vec![spec.rate; h];
    var_upper.extend(load.iter().map(|&l| if spec.sell_back { spec.rate } else { spec.rate.min(l) }));
    let lp = LinearProgram {
        objective: DVector::from_vec(objective),
        matrix,
        row_lower,
        row_upper,
        var_lower: vec![0.0; 2 * h],
        var_upper,
    };
    let report = solve_lp(&lp, 1e-9)?;
    match report.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::infeasible(format!(
                "final SoC {} unreachable from {} within rate limits",
                spec.final_soc, spec.initial
            )))
        }
        other => return Err(Error::Solver(format!("storage LP ended with status {other:?}"))),
    }

    let clean = |v: f64| if v.abs() < 1e-10 { 0.0 } else { v };
    let mut charge: Vec<f64> = report.solution[..h].iter().map(|&v| clean(v)).collect();
    let mut discharge: Vec<f64> = report.solution[h..].iter().map(|&v| clean(v)).collect();
    // Simultaneous charge and discharge only cancels out; keep the net flow.
    for (c, d) in charge.iter_mut().zip(discharge.iter_mut()) {
        let both = c.min(*d);
        *c -= both;
        *d -= both;
    }
    let mut soc = Vec::with_capacity(h);
    let mut level = spec.initial;
    for (c, d) in charge.iter().zip(&discharge) {
        level += c - d;
        soc.push(level);
    }
    let net: Vec<f64> = charge.iter().zip(&discharge).map(|(c, d)| c - d).collect();
    Ok(StorageSchedule {
        cost: prices.dot(&net),
        charge,
        discharge,
        soc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdSpec {
    pub appliances: Vec<ApplianceSpec>,
    /// Uncontrollable consumption per slot, kWh.
    pub background: Vec<f64>,
    pub storage: Option<StorageSpec>,
    /// PV generation forecast per slot, kWh.
    pub pv: Option<Vec<f64>>,
}

impl HouseholdSpec {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.background.len() != horizon {
            return Err(Error::input(format!(
                "background has {} slots, expected {horizon}",
                self.background.len()
            )));
        }
        if self.background.iter().any(|&b| b < 0.0) {
            return Err(Error::input("background load must be nonnegative"));
        }
        if let Some(pv) = &self.pv {
            if pv.len() != horizon || pv.iter().any(|&g| g < 0.0) {
                return Err(Error::input("PV forecast must be nonnegative with one value per slot"));
            }
        }
        if let Some(storage) = &self.storage {
            storage.validate()?;
        }
        self.appliances.iter().try_for_each(|a| a.validate(horizon))
    }
}

/// Everything a HEMS decides for one household under one price vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdSchedule {
    pub appliances: Vec<ConsumptionProfile>,
    pub storage: Option<StorageSchedule>,
    /// Net grid exchange: appliances + background + storage − PV.
    pub net: ConsumptionProfile,
}

pub fn household_schedule(prices: &PriceVector, spec: &HouseholdSpec) -> Result<HouseholdSchedule> {
    let horizon = prices.len();
    spec.validate(horizon)?;
    let appliances = spec
        .appliances
        .iter()
        .map(|a| schedule_appliance(prices, a))
        .collect::<Result<Vec<_>>>()?;
    let mut load = spec.background.clone();
    for profile in &appliances {
        for (l, x) in load.iter_mut().zip(&profile.consumption) {
            *l += x;
        }
    }
    let storage = spec
        .storage
        .as_ref()
        .map(|s| schedule_storage(prices, s, &load))
        .transpose()?;
    let mut net = load;
    if let Some(storage) = &storage {
        for ((n, c), d) in net.iter_mut().zip(&storage.charge).zip(&storage.discharge) {
            *n += c - d;
        }
    }
    if let Some(pv) = &spec.pv {
        for (n, g) in net.iter_mut().zip(pv) {
            *n -= g;
        }
    }
    Ok(HouseholdSchedule {
        appliances,
        storage,
        net: ConsumptionProfile::new(net, prices),
    })
}

/// Net grid profile and bill of a HEMS household. Exported energy (negative
/// net) is credited at the retail price of its slot.
pub fn household_response(prices: &PriceVector, spec: &HouseholdSpec) -> Result<ConsumptionProfile> {
    household_schedule(prices, spec).map(|s| s.net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(v: &[f64]) -> PriceVector {
        PriceVector::new(v.to_vec())
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn phev_uniform_prices() {
        let phev = ApplianceSpec::interruptible("phev", Window::from_clock(19, 7).unwrap(), 2.5, 10.0);
        let prof = schedule_interruptible(&PriceVector::uniform(6.0, 24), &phev).unwrap();
        assert!(close(prof.bill, 60.0));
        assert!(close(prof.total(), 10.0));
        // earliest four slots of the window
        assert_eq!(prof.consumption[11..15], [2.5; 4]);
    }

    #[test]
    fn interruptible_picks_two_cheapest() {
        let spec = ApplianceSpec::interruptible("ev", Window::new(0, 4), 2.5, 5.0);
        let prof = schedule_interruptible(&p(&[9.0, 6.0, 8.0, 7.0]), &spec).unwrap();
        assert_eq!(prof.consumption, vec![0.0, 2.5, 0.0, 2.5]);
        assert!(close(prof.bill, 32.5));
    }

    #[test]
    fn dishwasher_partial_slot() {
        let spec = ApplianceSpec::interruptible("dw", Window::new(0, 3), 1.0, 1.8);
        let prof = schedule_interruptible(&p(&[7.0, 5.0, 6.0]), &spec).unwrap();
        assert!(close(prof.consumption[1], 1.0));
        assert!(close(prof.consumption[2], 0.8));
        assert!(close(prof.bill, 9.8));
        assert!(close(prof.total(), 1.8));
    }

    #[test]
    fn interruptible_window_too_short() {
        let spec = ApplianceSpec::interruptible("ev", Window::new(0, 3), 2.5, 10.0);
        assert!(matches!(
            schedule_interruptible(&p(&[1.0; 6]), &spec),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn dryer_cheapest_block() {
        let spec = ApplianceSpec::non_interruptible("dryer", Window::new(0, 5), 1.5, 2);
        let prof = schedule_non_interruptible(&p(&[9.0, 6.0, 8.0, 7.0, 5.0]), &spec).unwrap();
        assert_eq!(prof.consumption, vec![0.0, 0.0, 0.0, 1.5, 1.5]);
        assert!(close(prof.bill, 18.0));
    }

    #[test]
    fn non_interruptible_tie_and_monotone_cases() {
        let spec = ApplianceSpec::non_interruptible("wm", Window::new(0, 6), 1.0, 2);
        let flat = schedule_non_interruptible(&p(&[8.0; 6]), &spec).unwrap();
        assert_eq!(flat.consumption[..2], [1.0, 1.0]);
        assert!(close(flat.bill, 2.0 * 1.0 * 8.0));
        let falling = schedule_non_interruptible(&p(&[14.0, 13.0, 12.0, 11.0, 10.0, 9.0]), &spec).unwrap();
        assert_eq!(falling.consumption[4..], [1.0, 1.0]);
        let long = ApplianceSpec::non_interruptible("wm", Window::new(0, 2), 1.0, 3);
        assert!(matches!(
            schedule_non_interruptible(&p(&[8.0; 6]), &long),
            Err(Error::Infeasible(_))
        ));
    }

    fn ac() -> ApplianceSpec {
        ApplianceSpec::curtailable("ac", Window::new(0, 12), 1.0, 2.0, 18.0)
    }

    #[test]
    fn curtailable_uniform_fills_earliest() {
        let prof = schedule_curtailable(&PriceVector::uniform(10.0, 12), &ac()).unwrap();
        assert_eq!(prof.consumption[..6], [2.0; 6]);
        assert_eq!(prof.consumption[6..], [1.0; 6]);
    }

    #[test]
    fn curtailable_increasing_prices() {
        let prices: Vec<f64> = (0..12).map(|i| 6.0 + 0.5 * i as f64).collect();
        let prof = schedule_curtailable(&p(&prices), &ac()).unwrap();
        assert_eq!(prof.consumption[..6], [2.0; 6]);
        assert_eq!(prof.consumption[6..], [1.0; 6]);
    }

    #[test]
    fn curtailable_zero_deficit_and_infeasible() {
        let tight = ApplianceSpec::curtailable("ac", Window::new(0, 12), 1.0, 2.0, 12.0);
        let prof = schedule_curtailable(&p(&[14.0, 6.0, 9.0, 7.0, 8.0, 10.0, 6.0, 12.0, 11.0, 13.0, 6.5, 7.5]), &tight)
            .unwrap();
        assert_eq!(prof.consumption, vec![1.0; 12]);
        let short = ApplianceSpec::curtailable("ac", Window::new(0, 4), 1.0, 2.0, 9.0);
        assert!(matches!(schedule_curtailable(&p(&[1.0; 4]), &short), Err(Error::Infeasible(_))));
    }

    #[test]
    fn kind_mismatch_is_input_error() {
        assert!(matches!(
            schedule_interruptible(&p(&[1.0; 12]), &ac()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn storage_flat_prices_do_nothing() {
        let s = schedule_storage(&PriceVector::uniform(9.0, 24), &StorageSpec::reference(true), &[0.5; 24])
            .unwrap();
        assert!(close(s.cost, 0.0));
    }

    #[test]
    fn storage_two_slot_arbitrage() {
        let s = schedule_storage(&p(&[6.0, 14.0]), &StorageSpec::reference(true), &[0.0, 0.0]).unwrap();
        assert!(close(s.charge[0], 2.0));
        assert!(close(s.discharge[1], 2.0));
        assert!(close(s.cost, -16.0));
        assert!(close(s.soc[1], 8.0));
    }

    #[test]
    fn storage_without_sell_back_cannot_export() {
        let prices: Vec<f64> = (0..24).map(|i| if i % 2 == 0 { 6.0 } else { 14.0 }).collect();
        let s = schedule_storage(&p(&prices), &StorageSpec::reference(false), &[0.0; 24]).unwrap();
        assert!(s.discharge.iter().all(|&d| d == 0.0));
        assert!(close(s.cost, 0.0));
    }

    #[test]
    fn storage_unreachable_final_soc() {
        let spec = StorageSpec {
            initial: 0.0,
            final_soc: 10.0,
            ..StorageSpec::reference(true)
        };
        assert!(matches!(
            schedule_storage(&p(&[6.0, 7.0]), &spec, &[0.0, 0.0]),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn background_only_household() {
        let hh = HouseholdSpec {
            appliances: vec![],
            background: vec![0.05; 24],
            storage: None,
            pv: None,
        };
        let r = household_response(&PriceVector::uniform(10.0, 24), &hh).unwrap();
        assert!(close(r.bill, 12.0));
    }

    proptest! {
        #[test]
        fn raising_a_price_never_lowers_the_bill(
            ticks in proptest::collection::vec(600i64..=1400, 8),
            bump_slot in 0usize..8,
            bump in 1i64..300,
        ) {
            let base = PriceVector::new(ticks.iter().map(|&t| t as f64 / 100.0).collect());
            let mut raised = base.clone().into_inner();
            raised[bump_slot] += bump as f64 / 100.0;
            let raised = PriceVector::new(raised);
            let specs = [
                ApplianceSpec::interruptible("i", Window::new(1, 6), 1.0, 2.5),
                ApplianceSpec::non_interruptible("n", Window::new(0, 8), 1.5, 3),
                ApplianceSpec::curtailable("c", Window::new(2, 5), 0.5, 2.0, 6.0),
            ];
            for spec in &specs {
                let before = schedule_appliance(&base, spec).unwrap().bill;
                let after = schedule_appliance(&raised, spec).unwrap().bill;
                prop_assert!(after >= before - 1e-9);
            }
        }

        #[test]
        fn sell_back_relaxation_dominates(
            ticks in proptest::collection::vec(600i64..=1400, 24),
            load in proptest::collection::vec(0.0f64..3.0, 24),
        ) {
            let prices = PriceVector::new(ticks.iter().map(|&t| t as f64 / 100.0).collect());
            let free = schedule_storage(&prices, &StorageSpec::reference(true), &load).unwrap();
            let capped = schedule_storage(&prices, &StorageSpec::reference(false), &load).unwrap();
            prop_assert!(free.cost <= 1e-9);
            prop_assert!(capped.cost <= 1e-9);
            prop_assert!(free.cost <= capped.cost + 1e-9);
            for (d, l) in capped.discharge.iter().zip(&load) {
                prop_assert!(*d <= l + 1e-9);
            }
        }
    }
}
