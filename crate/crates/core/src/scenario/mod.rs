//! Scenario configuration, synthetic histories, customer-pool construction
//! and case-study orchestration.

mod config;
mod history;
mod io;
mod pool;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{
    reference_appliances, reference_cases, CaseSpec, CostConfig, HistoryConfig, HouseholdTemplate, LimitsConfig,
    PoolCounts, PvConfig, ScenarioConfig,
};
pub use history::{
    generate_cnone_history, generate_csm_history, history_file_name, ingest_price_demand_csv, random_prices,
    read_history, reference_load_shape, simulate_day, synthetic_cnone_truth, write_history, write_price_demand_csv,
    ApplianceHistory, HistoryOptions, UsageHistory, DAILY_ENERGY_PER_CUSTOMER, MIN_HISTORY_DAYS,
};
pub use io::{read_case_result, write_case_outputs};
pub use pool::{fit_cnone, fit_sm_household, history_options, CustomerPool, HemsMember, SmMember};

use crate::baseline::{optimize_with_restarts, Round};
use crate::ga::{evolve, GenerationStats};
use crate::hems::{household_response, StorageSpec};
use crate::retailer::{evaluate_prices, MarketEvaluation, MarketLimits};
use crate::{PriceVector, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: u64,
    pub jobs: Option<usize>,
    pub baseline: bool,
}

impl RunOptions {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        RunOptions {
            seed: config.seed,
            jobs: config.ga.jobs,
            baseline: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDemand {
    pub hems: Vec<f64>,
    pub sm: Vec<f64>,
    pub none: Vec<f64>,
    pub total: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub prices: PriceVector,
    pub revenue: f64,
    pub cost: f64,
    pub profit: f64,
    pub violation: f64,
    #[serde(skip)]
    pub rounds: Vec<Round>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: usize,
    pub counts: PoolCounts,
    pub seed: u64,
    pub revenue: f64,
    pub cost: f64,
    pub profit: f64,
    pub violation: f64,
    pub re_max: f64,
    pub e_max: f64,
    pub prices: PriceVector,
    pub demand: GroupDemand,
    pub trace: Vec<GenerationStats>,
    pub evaluations: usize,
    pub baseline: Option<BaselineSummary>,
    /// Excluded from `result.json` so repeated runs produce identical files.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl CaseResult {
    pub fn is_feasible(&self) -> bool {
        self.violation == 0.0
    }
}

/// Pool, limits and cost model ready for optimization.
pub struct Market {
    pub pool: CustomerPool,
    pub limits: MarketLimits,
    pub cost: crate::retailer::CostModel,
}

impl Market {
    pub fn build(config: &ScenarioConfig, counts: PoolCounts, seed: u64) -> Result<Self> {
        config.validate()?;
        let pool = CustomerPool::build(config, counts, seed)?;
        let re_max = config.limits.revenue_cap(counts.total(), config.pv.is_some());
        let e_max = match config.limits.e_max {
            Some(e) => e,
            None => pool
                .capacity_from_peak(config, seed, config.limits.e_max_factor)
                .map_err(|e| e.in_stage("capacity"))?,
        };
        let limits = config.limits.market(e_max, re_max);
        limits.validate()?;
        Ok(Market {
            pool,
            limits,
            cost: config.cost.model(),
        })
    }

    pub fn evaluate(&self, prices: &PriceVector) -> Result<MarketEvaluation> {
        let responses = self.pool.respond(prices)?;
        evaluate_prices(prices, &responses, &self.cost, &self.limits)
    }

    pub fn group_demand(&self, prices: &PriceVector) -> Result<GroupDemand> {
        let r = self.pool.respond(prices)?;
        let total = (0..prices.len()).map(|h| r.iter().map(|g| g.consumption[h]).sum()).collect();
        let mut it = r.into_iter().map(|g| g.consumption);
        Ok(GroupDemand {
            hems: it.next().unwrap_or_default(),
            sm: it.next().unwrap_or_default(),
            none: it.next().unwrap_or_default(),
            total,
        })
    }
}

/// Runs the price optimization for one customer mix.
pub fn run_pool(config: &ScenarioConfig, case: usize, counts: PoolCounts, options: &RunOptions) -> Result<CaseResult> {
    let started = Instant::now();
    let market = Market::build(config, counts, options.seed)?;
    let mut ga = config.ga.clone();
    ga.seed = options.seed;
    ga.jobs = options.jobs.or(ga.jobs);
    let outcome = evolve(&ga, &market.limits, |p| market.evaluate(p)).map_err(|e| e.in_stage("genetic algorithm"))?;
    let best = &outcome.best;
    let demand = market.group_demand(&best.prices).map_err(|e| e.in_stage("demand curves"))?;

    let baseline = if options.baseline {
        let mut bc = config.baseline.clone();
        bc.seed = options.seed;
        let out = optimize_with_restarts(&bc, &market.pool, &market.cost, &market.limits)
            .map_err(|e| e.in_stage("baseline"))?;
        Some(BaselineSummary {
            prices: out.prices,
            revenue: out.evaluation.revenue,
            cost: out.evaluation.cost,
            profit: out.evaluation.profit,
            violation: out.evaluation.violation,
            rounds: out.rounds,
        })
    } else {
        None
    };

    Ok(CaseResult {
        case,
        counts,
        seed: options.seed,
        revenue: best.evaluation.revenue,
        cost: best.evaluation.cost,
        profit: best.evaluation.profit,
        violation: best.evaluation.violation,
        re_max: market.limits.re_max,
        e_max: market.limits.e_max[0],
        prices: best.prices.clone(),
        demand,
        trace: outcome.trace,
        evaluations: outcome.evaluations,
        baseline,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs a configured case by id.
pub fn run_case(config: &ScenarioConfig, case_id: usize, options: &RunOptions) -> Result<CaseResult> {
    let case = config.case(case_id)?;
    run_pool(config, case.id, case.counts, options)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayResult {
    pub day: usize,
    pub prices: PriceVector,
    pub revenue: f64,
    pub profit: f64,
    pub violation: f64,
    /// Rank-probability updates applied after the day.
    pub updates: usize,
}

/// Simulates consecutive days: optimize prices, let smart-meter customers
/// live through them, then feed the metered shiftable usage back into their
/// models (one update per shiftable appliance per household model per day).
pub fn run_days(
    config: &ScenarioConfig,
    counts: PoolCounts,
    days: usize,
    options: &RunOptions,
) -> Result<(Vec<DayResult>, Market)> {
    let mut market = Market::build(config, counts, options.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(pool::sub_seed(options.seed, 100));
    let hist = history_options(config);
    let mut out = Vec::with_capacity(days);
    for day in 1..=days {
        let mut ga = config.ga.clone();
        ga.seed = pool::sub_seed(options.seed, 100 + day as u64);
        ga.jobs = options.jobs.or(ga.jobs);
        let outcome = evolve(&ga, &market.limits, |p| market.evaluate(p)).map_err(|e| e.in_stage("genetic algorithm"))?;
        let prices = outcome.best.prices.clone();
        let mut updates = 0;
        for m in &mut market.pool.sm {
            let usage = simulate_day(&m.spec, &prices, &hist, &mut rng)?;
            let shiftable: Vec<Vec<f64>> = m
                .spec
                .appliances
                .iter()
                .zip(usage)
                .filter(|(a, _)| a.is_shiftable())
                .map(|(_, u)| u)
                .collect();
            updates += shiftable.len();
            m.model.observe_day(&prices, &shiftable).map_err(|e| e.in_stage("model update"))?;
        }
        out.push(DayResult {
            day,
            prices,
            revenue: outcome.best.evaluation.revenue,
            profit: outcome.best.evaluation.profit,
            violation: outcome.best.evaluation.violation,
            updates,
        });
    }
    Ok((out, market))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub case: usize,
    pub ga_profit: f64,
    pub ga_revenue: f64,
    pub ga_feasible: bool,
    pub baseline_profit: f64,
    pub baseline_revenue: f64,
    pub baseline_feasible: bool,
}

/// GA against the iterative baseline on each listed case.
pub fn compare(config: &ScenarioConfig, cases: &[usize], options: &RunOptions) -> Result<Vec<ComparisonRow>> {
    let options = RunOptions {
        baseline: true,
        ..*options
    };
    cases
        .iter()
        .map(|&id| {
            let r = run_case(config, id, &options)?;
            let b = r.baseline.as_ref().expect("baseline requested");
            Ok(ComparisonRow {
                case: id,
                ga_profit: r.profit,
                ga_revenue: r.revenue,
                ga_feasible: r.is_feasible(),
                baseline_profit: b.profit,
                baseline_revenue: b.revenue,
                baseline_feasible: b.violation == 0.0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageVariant {
    pub sell_back: bool,
    pub result: CaseResult,
    /// One household's bill at the optimized prices, without a battery.
    pub bill_without_storage: f64,
    /// The same household's bill with its battery.
    pub bill_with_storage: f64,
}

/// All-HEMS pool with PV and a battery in every household, optimized once
/// without and once with selling battery energy back to the grid.
///
/// Batteries only pay off against time-varying wholesale prices, so unless
/// the config sets per-slot cost coefficients the study uses
/// [`CostConfig::wholesale_shaped`] with `cost.storage_spread`.
pub fn storage_study(config: &ScenarioConfig, options: &RunOptions) -> Result<Vec<StorageVariant>> {
    let counts = PoolCounts::new(config.pool.total(), 0, 0);
    let mut config = config.clone();
    if config.cost.b_slots.is_none() {
        config.cost.b_slots = Some(CostConfig::wholesale_shaped(config.cost.b, config.cost.storage_spread));
    }
    let config = &config;
    let base_storage = config.storage.clone().unwrap_or_else(|| StorageSpec::reference(false));
    [false, true]
        .into_iter()
        .map(|sell_back| {
            let mut c = config.clone();
            c.pv = Some(config.pv.clone().unwrap_or_default());
            c.storage = Some(StorageSpec {
                sell_back,
                ..base_storage.clone()
            });
            let result = run_pool(&c, 0, counts, options)?;
            let mut household = c.household.household();
            household.pv = c.pv.as_ref().map(|p| p.curve());
            let bill_without_storage = household_response(&result.prices, &household)?.bill;
            household.storage = c.storage.clone();
            let bill_with_storage = household_response(&result.prices, &household)?.bill;
            Ok(StorageVariant {
                sell_back,
                result,
                bill_without_storage,
                bill_with_storage,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnone::predict_aggregate;
    use crate::ga::GaConfig;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            ga: GaConfig {
                population: 20,
                generations: 5,
                ..GaConfig::default()
            },
            ..ScenarioConfig::default()
        }
    }

    fn options(seed: u64) -> RunOptions {
        RunOptions {
            seed,
            jobs: Some(2),
            baseline: false,
        }
    }

    #[test]
    fn config_toml_round_trips() {
        let config = ScenarioConfig::default();
        let text = config.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), config);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let config = ScenarioConfig::from_toml_str("seed = 4\n[pool]\nhems = 1\nsm = 2\nnone = 3\n").unwrap();
        assert_eq!(config.seed, 4);
        assert_eq!(config.pool.total(), 6);
        assert_eq!(config.cases.len(), 10);
        assert_eq!(config.case(6).unwrap().counts, PoolCounts::new(50, 30, 20));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ScenarioConfig::from_toml_str("forgetting = 2.0").is_err());
        assert!(ScenarioConfig::from_toml_str("[pool]\nhems = 0\nsm = 0\nnone = 0\n").is_err());
        assert!(ScenarioConfig::from_toml_str("bogus = 1").is_err());
        assert!(ScenarioConfig::from_toml_str("[history]\ncnone_csv = \"/no/such/file.csv\"\n").is_err());
    }

    #[test]
    fn reference_household_uses_36_kwh() {
        let h = HouseholdTemplate::default().household();
        let total: f64 = h.appliances.iter().map(|a| a.energy()).sum::<f64>() + h.background.iter().sum::<f64>();
        assert!((total - 36.0).abs() < 1e-9);
    }

    #[test]
    fn pv_curve_is_daylight_only() {
        let pv = PvConfig::default().curve();
        assert!(pv[..10].iter().all(|&g| g > 0.0));
        assert!(pv[10..].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn all_cnone_case_is_the_aggregate_prediction() {
        let config = small();
        let counts = PoolCounts::new(0, 0, 10);
        let r = run_pool(&config, 1, counts, &options(3)).unwrap();
        let model = fit_cnone(&config, 10, pool::sub_seed(3, 3)).unwrap();
        assert_eq!(r.demand.none, predict_aggregate(&model, &r.prices));
        assert_eq!(r.demand.total, r.demand.none);
        assert!(r.demand.hems.iter().chain(&r.demand.sm).all(|&x| x == 0.0));
    }

    #[test]
    fn mixed_case_runs_all_groups_and_respects_cap() {
        let config = small();
        let r = run_pool(&config, 6, PoolCounts::new(5, 3, 2), &options(1)).unwrap();
        for g in [&r.demand.hems, &r.demand.sm, &r.demand.none] {
            assert!(g.iter().sum::<f64>() > 0.0);
        }
        assert!((r.profit - (r.revenue - r.cost)).abs() < 1e-9);
        if r.is_feasible() {
            assert!(r.revenue <= r.re_max);
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let config = small();
        let counts = PoolCounts::new(2, 2, 2);
        let a = run_pool(&config, 0, counts, &options(8)).unwrap();
        let b = run_pool(&config, 0, counts, &RunOptions { jobs: Some(1), ..options(8) }).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn one_rank_update_per_shiftable_appliance_per_day() {
        let config = small();
        let (days, market) = run_days(&config, PoolCounts::new(0, 3, 0), 3, &options(2)).unwrap();
        assert_eq!(days.len(), 3);
        assert!(days.iter().all(|d| d.updates == 4));
        let history_days = config.history.sm_days;
        for s in &market.pool.sm[0].model.shiftable {
            assert_eq!(s.model.observations, history_days + 3);
        }
    }

    #[test]
    fn jitter_builds_distinct_households() {
        let config = ScenarioConfig {
            jitter: true,
            ..small()
        };
        let pool = CustomerPool::build(&config, PoolCounts::new(3, 2, 0), 5).unwrap();
        assert_eq!(pool.hems.len(), 3);
        assert_eq!(pool.sm.len(), 2);
        assert_ne!(pool.hems[0].spec, pool.hems[1].spec);
    }

    #[test]
    fn outputs_are_written_and_reproducible() {
        let config = small();
        let opts = RunOptions {
            baseline: true,
            ..options(4)
        };
        let dir = tempfile::tempdir().unwrap();
        let mut contents = Vec::new();
        for run in 0..2 {
            let r = run_pool(&config, 5, PoolCounts::new(2, 0, 0), &opts).unwrap();
            let out = dir.path().join(format!("run{run}"));
            let files = write_case_outputs(&out, &r).unwrap();
            assert_eq!(files.len(), 5);
            assert_eq!(read_case_result(&out.join("result.json")).unwrap().prices, r.prices);
            contents.push(files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>());
        }
        assert_eq!(contents[0], contents[1]);
    }
}
