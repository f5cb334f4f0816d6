use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::BaselineConfig;
use crate::ga::GaConfig;
use crate::hems::{ApplianceSpec, HouseholdSpec, StorageSpec};
use crate::retailer::{CostModel, MarketLimits};
use crate::{Error, Result, Window, HORIZON};

/// Number of customers in each group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCounts {
    pub hems: usize,
    pub sm: usize,
    pub none: usize,
}

impl PoolCounts {
    pub fn new(hems: usize, sm: usize, none: usize) -> Self {
        PoolCounts { hems, sm, none }
    }

    pub fn total(&self) -> usize {
        self.hems + self.sm + self.none
    }
}

impl Default for PoolCounts {
    fn default() -> Self {
        PoolCounts::new(50, 30, 20)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub id: usize,
    #[serde(flatten)]
    pub counts: PoolCounts,
}

/// The ten customer mixes of the reference case study, 100 customers each.
pub fn reference_cases() -> Vec<CaseSpec> {
    [
        (0, 0, 100),
        (0, 30, 70),
        (0, 100, 0),
        (30, 70, 0),
        (100, 0, 0),
        (50, 30, 20),
        (0, 70, 30),
        (70, 30, 0),
        (30, 60, 10),
        (20, 30, 50),
    ]
    .into_iter()
    .enumerate()
    .map(|(i, (hems, sm, none))| CaseSpec {
        id: i + 1,
        counts: PoolCounts::new(hems, sm, none),
    })
    .collect()
}

/// Five-appliance household: dishwasher, PHEV, washer, dryer, air conditioner.
pub fn reference_appliances() -> Vec<ApplianceSpec> {
    let w = |a, b| Window::from_clock(a, b).expect("valid clock window");
    vec![
        ApplianceSpec::interruptible("dishwasher", w(20, 7), 1.0, 1.8),
        ApplianceSpec::interruptible("phev", w(19, 7), 2.5, 10.0),
        ApplianceSpec::non_interruptible("washer", w(8, 21), 1.0, 2),
        ApplianceSpec::non_interruptible("dryer", w(20, 6), 1.5, 2),
        ApplianceSpec::curtailable("air_conditioner", w(12, 0), 1.0, 2.0, 18.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HouseholdTemplate {
    pub appliances: Vec<ApplianceSpec>,
    /// Background consumption per slot, kWh.
    pub background: f64,
}

impl Default for HouseholdTemplate {
    fn default() -> Self {
        HouseholdTemplate {
            appliances: reference_appliances(),
            background: 0.05,
        }
    }
}

impl HouseholdTemplate {
    pub fn household(&self) -> HouseholdSpec {
        HouseholdSpec {
            appliances: self.appliances.clone(),
            background: vec![self.background; HORIZON],
            storage: None,
            pv: None,
        }
    }
}

/// Daylight-shaped PV forecast per household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvConfig {
    /// Midday generation, kWh per slot.
    pub peak: f64,
}

impl Default for PvConfig {
    fn default() -> Self {
        PvConfig { peak: 1.25 }
    }
}

impl PvConfig {
    /// Half-sine between 8AM and 6PM, zero otherwise.
    pub fn curve(&self) -> Vec<f64> {
        let daylight = 10.0;
        (0..HORIZON)
            .map(|slot| {
                // slot 0 covers 8AM-9AM; sample the slot midpoint
                let t = slot as f64 + 0.5;
                if t < daylight {
                    self.peak * (std::f64::consts::PI * t / daylight).sin()
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Per-slot linear coefficients overriding `b`, e.g. a wholesale price
    /// profile.
    pub b_slots: Option<Vec<f64>>,
    /// Relative spread of the wholesale-shaped profile the storage study
    /// uses when `b_slots` is absent.
    pub storage_spread: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            a: 0.005,
            b: 5.0,
            c: 0.0,
            b_slots: None,
            storage_spread: 0.4,
        }
    }
}

impl CostConfig {
    pub fn model(&self) -> CostModel {
        let mut model = CostModel::uniform(self.a, self.b, self.c, HORIZON);
        if let Some(b) = &self.b_slots {
            model.b = b.clone();
        }
        model
    }

    /// Linear cost following the reference load shape: `b` on average,
    /// `b (1 ± spread)` at the extremes of the shape.
    pub fn wholesale_shaped(b: f64, spread: f64) -> Vec<f64> {
        let shape = super::history::reference_load_shape();
        let (lo, hi) = shape.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let mid = (lo + hi) / 2.0;
        let half = (hi - lo) / 2.0;
        shape.iter().map(|x| b * (1.0 + spread * (x - mid) / half)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub p_min: f64,
    pub p_max: f64,
    /// Revenue cap in cents; derived from the pool size when absent.
    pub re_max: Option<f64>,
    /// Cap per 100 customers without PV.
    pub re_max_per_100: f64,
    /// Cap per 100 customers with PV.
    pub re_max_pv_per_100: f64,
    /// Capacity in kWh per slot; derived from the simulated peak when absent.
    pub e_max: Option<f64>,
    pub e_max_factor: f64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        LimitsConfig {
            p_min: 6.0,
            p_max: 14.0,
            re_max: None,
            re_max_per_100: 35_000.0,
            re_max_pv_per_100: 27_000.0,
            e_max: None,
            e_max_factor: 1.5,
        }
    }
}

impl LimitsConfig {
    pub fn revenue_cap(&self, customers: usize, pv: bool) -> f64 {
        self.re_max.unwrap_or_else(|| {
            let per_100 = if pv { self.re_max_pv_per_100 } else { self.re_max_per_100 };
            per_100 * customers as f64 / 100.0
        })
    }

    pub fn market(&self, e_max: f64, re_max: f64) -> MarketLimits {
        MarketLimits::uniform(self.p_min, self.p_max, e_max, re_max, HORIZON)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistoryConfig {
    /// Metered days per smart-meter household.
    pub sm_days: usize,
    /// Upper bound of the per-day waiting penalty, cents per slot of delay.
    pub w_max: f64,
    /// Relative noise on curtailable usage.
    pub curtail_noise: f64,
    pub cnone_days: usize,
    /// Relative noise on synthetic aggregate demand.
    pub cnone_noise: f64,
    /// Real price/demand history to fit the aggregate model from.
    pub cnone_csv: Option<PathBuf>,
    /// Own-price elasticity of the synthetic aggregate demand at the
    /// reference price.
    pub self_elasticity: f64,
    /// Fraction of the own-price response that shifts to other hours.
    pub shift_fraction: f64,
    pub reference_price: f64,
    /// Random price days used to find the pool's peak demand.
    pub peak_days: usize,
}

impl Default for HistoryConfig {
    fn default() -> Self {
        HistoryConfig {
            sm_days: 90,
            w_max: 0.5,
            curtail_noise: 0.1,
            cnone_days: 60,
            cnone_noise: 0.02,
            cnone_csv: None,
            self_elasticity: 0.2,
            shift_fraction: 0.5,
            reference_price: 10.0,
            peak_days: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Forgetting factor of the aggregate demand fit.
    pub forgetting: f64,
    pub pool: PoolCounts,
    pub cases: Vec<CaseSpec>,
    pub household: HouseholdTemplate,
    /// Battery for every HEMS household.
    pub storage: Option<StorageSpec>,
    /// PV for every customer.
    pub pv: Option<PvConfig>,
    /// ±20% per-household variation of appliance energy.
    pub jitter: bool,
    pub cost: CostConfig,
    pub limits: LimitsConfig,
    pub ga: GaConfig,
    pub baseline: BaselineConfig,
    pub history: HistoryConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            forgetting: 1.0,
            pool: PoolCounts::default(),
            cases: reference_cases(),
            household: HouseholdTemplate::default(),
            storage: None,
            pv: None,
            jitter: false,
            cost: CostConfig::default(),
            limits: LimitsConfig::default(),
            ga: GaConfig::default(),
            baseline: BaselineConfig::default(),
            history: HistoryConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: ScenarioConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(csv) = &config.history.cnone_csv {
            if csv.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                config.history.cnone_csv = Some(base.join(csv));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool.total() == 0 {
            return Err(Error::Config("the customer pool is empty".into()));
        }
        if let Some(case) = self.cases.iter().find(|c| c.counts.total() == 0) {
            return Err(Error::Config(format!("case {} has no customers", case.id)));
        }
        if !(0.0..=1.0).contains(&self.forgetting) {
            return Err(Error::Config(format!("forgetting factor {} outside [0, 1]", self.forgetting)));
        }
        if !(self.limits.p_min > 0.0 && self.limits.p_min <= self.limits.p_max) {
            return Err(Error::Config("price bounds must satisfy 0 < p_min ≤ p_max".into()));
        }
        if !(self.history.w_max >= 0.0 && (0.0..1.0).contains(&self.history.curtail_noise)) {
            return Err(Error::Config("w_max must be ≥ 0 and curtail_noise in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.history.cnone_noise) {
            return Err(Error::Config("cnone_noise must be in [0, 1)".into()));
        }
        if let Some(csv) = &self.history.cnone_csv {
            if !csv.exists() {
                return Err(Error::Config(format!("history file {} does not exist", csv.display())));
            }
        }
        if !(0.0..1.0).contains(&self.cost.storage_spread) {
            return Err(Error::Config("cost.storage_spread must be in [0, 1)".into()));
        }
        if self.cost.b_slots.as_ref().is_some_and(|b| b.len() != HORIZON) {
            return Err(Error::Config(format!("cost.b_slots must have {HORIZON} values")));
        }
        self.cost.model().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.ga.validate()?;
        let mut household = self.household.household();
        household.storage = self.storage.clone();
        household.validate(HORIZON).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn case(&self, id: usize) -> Result<CaseSpec> {
        self.cases
            .iter()
            .find(|c| c.id == id)
            .copied()
            .ok_or_else(|| Error::Config(format!("no case {id} in the config")))
    }
}
