use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{PoolCounts, ScenarioConfig};
use super::history::{
    generate_cnone_history, generate_csm_history, ingest_price_demand_csv, random_prices, synthetic_cnone_truth,
    HistoryOptions, UsageHistory,
};
use crate::baseline::Responder;
use crate::cnone::{fit_aggregate_demand, predict_aggregate, AggregateDemandModel, DemandHistory};
use crate::csm::{
    enumerate_schedules, fit_curtailable_demand, CurtailableDemandModel, FitOptions, RankProbabilityModel,
    ShiftableModel, SmHouseholdModel, WindowObservation,
};
use crate::hems::{household_response, ApplianceLoad, ConsumptionProfile, HouseholdSpec};
use crate::{Error, PriceVector, Result, HORIZON};

/// Independent seed for one purpose of a run.
pub(crate) fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.random()
}

const STREAM_HEMS_JITTER: u64 = 1;
const STREAM_SM: u64 = 2;
const STREAM_CNONE: u64 = 3;
const STREAM_PEAK: u64 = 4;

/// Households with identical specs are simulated once and counted `count`
/// times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HemsMember {
    pub spec: HouseholdSpec,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmMember {
    /// The household's true appliances, used to simulate metered days.
    pub spec: HouseholdSpec,
    pub model: SmHouseholdModel,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerPool {
    pub counts: PoolCounts,
    pub hems: Vec<HemsMember>,
    pub sm: Vec<SmMember>,
    /// Aggregate model of the whole C-NONE group.
    pub cnone: Option<AggregateDemandModel>,
    /// PV of the whole C-NONE group.
    pub cnone_pv: Option<Vec<f64>>,
}

/// Scales appliance energy by `factor`, staying within what the window and
/// comfort band allow.
fn jittered(spec: &HouseholdSpec, rng: &mut ChaCha8Rng) -> HouseholdSpec {
    let mut out = spec.clone();
    for a in &mut out.appliances {
        let f: f64 = rng.random_range(0.8..=1.2);
        let len = a.window.len as f64;
        a.load = match a.load {
            ApplianceLoad::Interruptible { rated, energy } => ApplianceLoad::Interruptible {
                rated,
                energy: (energy * f).min(rated * len),
            },
            ApplianceLoad::NonInterruptible { rated, run_length } => ApplianceLoad::NonInterruptible {
                rated: rated * f,
                run_length,
            },
            ApplianceLoad::Curtailable { u_lower, u_upper, u_min } => ApplianceLoad::Curtailable {
                u_lower,
                u_upper,
                u_min: (u_min * f).clamp(u_lower * len, u_upper * len),
            },
        };
    }
    out
}

/// Groups households into (spec, count); homogeneous pools yield one entry.
fn members(base: &HouseholdSpec, count: usize, jitter: bool, seed: u64) -> Vec<(HouseholdSpec, usize)> {
    if count == 0 {
        Vec::new()
    } else if jitter {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| (jittered(base, &mut rng), 1)).collect()
    } else {
        vec![(base.clone(), count)]
    }
}

pub fn history_options(config: &ScenarioConfig) -> HistoryOptions {
    HistoryOptions {
        w_max: config.history.w_max,
        curtail_noise: config.history.curtail_noise,
        p_min: config.limits.p_min,
        p_max: config.limits.p_max,
    }
}

/// Learns a smart-meter household model from its metered history.
pub fn fit_sm_household(spec: &HouseholdSpec, history: &UsageHistory) -> Result<SmHouseholdModel> {
    let mut shiftable = Vec::new();
    let mut curtailable: Vec<CurtailableDemandModel> = Vec::new();
    for (a, h) in spec.appliances.iter().zip(&history.appliances) {
        if a.is_shiftable() {
            let schedules = enumerate_schedules(a, HORIZON)?;
            let days = history.prices.iter().zip(h.days.iter().map(|d| d.as_slice()));
            let model = RankProbabilityModel::learn(&schedules, days)?;
            shiftable.push(ShiftableModel { schedules, model });
        } else {
            let obs: Vec<WindowObservation> = history
                .prices
                .iter()
                .zip(&h.days)
                .map(|(p, x)| WindowObservation::from_day(&a.window, p, x))
                .collect();
            curtailable.push(fit_curtailable_demand(&a.name, a.window, &obs, FitOptions::default())?);
        }
    }
    Ok(SmHouseholdModel {
        background: spec.background.clone(),
        shiftable,
        curtailable,
        pv: spec.pv.clone(),
    })
}

/// Fits the aggregate model for `customers` C-NONE customers.
pub fn fit_cnone(config: &ScenarioConfig, customers: usize, seed: u64) -> Result<AggregateDemandModel> {
    let h = &config.history;
    let days = match &h.cnone_csv {
        Some(path) => ingest_price_demand_csv(path, Some(customers))?,
        None => {
            let truth = synthetic_cnone_truth(customers as f64, h.self_elasticity, h.shift_fraction, h.reference_price);
            generate_cnone_history(&truth, h.cnone_days, seed, h.cnone_noise, config.limits.p_min, config.limits.p_max)
        }
    };
    fit_aggregate_demand(&DemandHistory::new(days, config.forgetting))
}

impl CustomerPool {
    pub fn build(config: &ScenarioConfig, counts: PoolCounts, seed: u64) -> Result<Self> {
        let pv = config.pv.as_ref().map(|p| p.curve());
        let mut base = config.household.household();
        base.pv = pv.clone();

        let mut hems_base = base.clone();
        hems_base.storage = config.storage.clone();
        let hems = members(&hems_base, counts.hems, config.jitter, sub_seed(seed, STREAM_HEMS_JITTER))
            .into_iter()
            .map(|(spec, count)| HemsMember { spec, count })
            .collect();

        let sm_seed = sub_seed(seed, STREAM_SM);
        let sm = members(&base, counts.sm, config.jitter, sm_seed)
            .into_iter()
            .enumerate()
            .map(|(i, (spec, count))| {
                let history = generate_csm_history(
                    &spec,
                    config.history.sm_days,
                    sub_seed(sm_seed, i as u64 + 1),
                    &history_options(config),
                )?;
                let model = fit_sm_household(&spec, &history)?;
                Ok(SmMember { spec, model, count })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("smart-meter models"))?;

        let cnone = if counts.none > 0 {
            Some(
                fit_cnone(config, counts.none, sub_seed(seed, STREAM_CNONE))
                    .map_err(|e| e.in_stage("aggregate demand model"))?,
            )
        } else {
            None
        };
        let cnone_pv = pv.map(|g| g.iter().map(|x| x * counts.none as f64).collect());
        Ok(CustomerPool {
            counts,
            hems,
            sm,
            cnone,
            cnone_pv,
        })
    }

    /// Responses of the three groups, in the order C-HEMS, C-SM, C-NONE.
    pub fn respond(&self, prices: &PriceVector) -> Result<Vec<ConsumptionProfile>> {
        let n = prices.len();
        let mut hems = ConsumptionProfile::zeros(n);
        for m in &self.hems {
            add_scaled(&mut hems, &household_response(prices, &m.spec)?, m.count as f64);
        }
        let mut sm = ConsumptionProfile::zeros(n);
        for m in &self.sm {
            add_scaled(&mut sm, &m.model.respond(prices)?, m.count as f64);
        }
        let none = match &self.cnone {
            Some(model) => {
                let mut demand = predict_aggregate(model, prices);
                if let Some(pv) = &self.cnone_pv {
                    demand.iter_mut().zip(pv).for_each(|(d, g)| *d -= g);
                }
                ConsumptionProfile::new(demand, prices)
            }
            None => ConsumptionProfile::zeros(n),
        };
        Ok(vec![hems, sm, none])
    }

    /// `factor` × the highest slot demand over random price days.
    pub fn capacity_from_peak(&self, config: &ScenarioConfig, seed: u64, factor: f64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, STREAM_PEAK));
        let mut peak: f64 = 0.0;
        for _ in 0..config.history.peak_days.max(1) {
            let p = random_prices(&mut rng, config.limits.p_min, config.limits.p_max);
            let responses = self.respond(&p)?;
            for h in 0..HORIZON {
                peak = peak.max(responses.iter().map(|r| r.consumption[h]).sum());
            }
        }
        if !(peak > 0.0) {
            return Err(Error::Config("the pool never draws power; cannot derive a capacity".into()));
        }
        Ok(factor * peak)
    }
}

impl Responder for CustomerPool {
    fn respond(&self, prices: &PriceVector) -> Result<Vec<ConsumptionProfile>> {
        CustomerPool::respond(self, prices)
    }
}

fn add_scaled(acc: &mut ConsumptionProfile, x: &ConsumptionProfile, k: f64) {
    acc.consumption.iter_mut().zip(&x.consumption).for_each(|(a, b)| *a += k * b);
    acc.bill += k * x.bill;
}
