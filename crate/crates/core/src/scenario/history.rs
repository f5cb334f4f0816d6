use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cnone::{AggregateDemandModel, DemandDay};
use crate::hems::{schedule_appliance, schedule_curtailable, ApplianceLoad, HouseholdSpec};
use crate::prices::to_ticks;
use crate::{Error, PriceVector, Result, DAY_START_HOUR, HORIZON};

/// Energy of the reference household per day, kWh.
pub const DAILY_ENERGY_PER_CUSTOMER: f64 = 36.0;

/// Minimum number of metered days for a usable history.
pub const MIN_HISTORY_DAYS: usize = 30;

/// Metered history of one smart-meter household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageHistory {
    pub prices: Vec<PriceVector>,
    /// Per appliance, in household order: one consumption vector per day.
    pub appliances: Vec<ApplianceHistory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceHistory {
    pub name: String,
    pub days: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryOptions {
    pub w_max: f64,
    pub curtail_noise: f64,
    pub p_min: f64,
    pub p_max: f64,
}

pub fn random_prices<R: Rng>(rng: &mut R, p_min: f64, p_max: f64) -> PriceVector {
    let (lo, hi) = (to_ticks(p_min), to_ticks(p_max));
    PriceVector::new((0..HORIZON).map(|_| rng.random_range(lo..=hi) as f64 / 100.0).collect())
}

/// Prices seen by a customer who dislikes waiting: each window slot costs
/// `w` cents more per slot of delay from the window start.
fn perturbed(prices: &PriceVector, window: &crate::Window, w: f64) -> PriceVector {
    let mut p = prices.as_slice().to_vec();
    for (pos, h) in window.slots(HORIZON).enumerate() {
        p[h] += w * pos as f64;
    }
    PriceVector::new(p)
}

/// Simulates one day of metered appliance usage under `prices`.
pub fn simulate_day<R: Rng>(
    household: &HouseholdSpec,
    prices: &PriceVector,
    options: &HistoryOptions,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let w = if options.w_max > 0.0 { rng.random_range(0.0..=options.w_max) } else { 0.0 };
    household
        .appliances
        .iter()
        .map(|a| match a.load {
            ApplianceLoad::Curtailable { u_lower, u_upper, .. } => {
                let mut x = schedule_curtailable(prices, a)?.consumption;
                for h in a.window.slots(HORIZON) {
                    let noise = if options.curtail_noise > 0.0 {
                        rng.random_range(-options.curtail_noise..=options.curtail_noise)
                    } else {
                        0.0
                    };
                    x[h] = (x[h] * (1.0 + noise)).clamp(u_lower, u_upper);
                }
                Ok(x)
            }
            _ => Ok(schedule_appliance(&perturbed(prices, &a.window, w), a)?.consumption),
        })
        .collect()
}

/// Synthetic metered history: random cent-grid prices each day and the
/// usage a waiting-averse customer would choose.
pub fn generate_csm_history(
    household: &HouseholdSpec,
    days: usize,
    seed: u64,
    options: &HistoryOptions,
) -> Result<UsageHistory> {
    if days < MIN_HISTORY_DAYS {
        return Err(Error::input(format!("need at least {MIN_HISTORY_DAYS} days of history, got {days}")));
    }
    household.validate(HORIZON)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prices = Vec::with_capacity(days);
    let mut appliances: Vec<ApplianceHistory> = household
        .appliances
        .iter()
        .map(|a| ApplianceHistory {
            name: a.name.clone(),
            days: Vec::with_capacity(days),
        })
        .collect();
    for _ in 0..days {
        let p = random_prices(&mut rng, options.p_min, options.p_max);
        for (store, usage) in appliances.iter_mut().zip(simulate_day(household, &p, options, &mut rng)?) {
            store.days.push(usage);
        }
        prices.push(p);
    }
    Ok(UsageHistory { prices, appliances })
}

/// File name used for an appliance's history.
pub fn history_file_name(appliance: &str) -> String {
    let stem: String = appliance
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    format!("{stem}.csv")
}

#[derive(Debug, Serialize, Deserialize)]
struct UsageRow {
    day: usize,
    slot: usize,
    price_cents: f64,
    kwh: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.record() as usize);
    Error::Parse {
        path: path.to_path_buf(),
        row,
        msg: e.to_string(),
    }
}

/// Writes one `day,slot,price_cents,kwh` CSV per appliance into `dir`.
pub fn write_history(dir: &Path, history: &UsageHistory) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for a in &history.appliances {
        let path = dir.join(history_file_name(&a.name));
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        for (d, (prices, usage)) in history.prices.iter().zip(&a.days).enumerate() {
            for slot in 0..HORIZON {
                w.serialize(UsageRow {
                    day: d + 1,
                    slot,
                    price_cents: prices[slot],
                    kwh: usage[slot],
                })
                .map_err(|e| csv_err(&path, e))?;
            }
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads the files written by [`write_history`] for the named appliances.
pub fn read_history(dir: &Path, appliances: &[String]) -> Result<UsageHistory> {
    let mut prices: Option<Vec<PriceVector>> = None;
    let mut out = Vec::new();
    for name in appliances {
        let path = dir.join(history_file_name(name));
        let mut r = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
        let mut day_prices: Vec<Vec<f64>> = Vec::new();
        let mut days: Vec<Vec<f64>> = Vec::new();
        for (i, row) in r.deserialize::<UsageRow>().enumerate() {
            let row_no = i + 1;
            let parse = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                row: row_no,
                msg,
            };
            let row = row.map_err(|e| parse(e.to_string()))?;
            if row.slot >= HORIZON || row.day != i / HORIZON + 1 || row.slot != i % HORIZON {
                return Err(parse(format!("expected day {} slot {}", i / HORIZON + 1, i % HORIZON)));
            }
            if row.slot == 0 {
                day_prices.push(Vec::with_capacity(HORIZON));
                days.push(Vec::with_capacity(HORIZON));
            }
            day_prices.last_mut().expect("day started").push(row.price_cents);
            days.last_mut().expect("day started").push(row.kwh);
        }
        if days.last().is_some_and(|d| d.len() != HORIZON) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: days.len() * HORIZON,
                msg: "last day is incomplete".into(),
            });
        }
        let day_prices: Vec<PriceVector> = day_prices.into_iter().map(PriceVector::new).collect();
        match &prices {
            None => prices = Some(day_prices),
            Some(p) if *p != day_prices => {
                return Err(Error::input(format!("{} disagrees with the other files on prices", path.display())))
            }
            Some(_) => {}
        }
        out.push(ApplianceHistory { name: name.clone(), days });
    }
    Ok(UsageHistory {
        prices: prices.unwrap_or_default(),
        appliances: out,
    })
}

/// Typical residential load shape for one customer, kWh per slot, summing to
/// [`DAILY_ENERGY_PER_CUSTOMER`]: flat night, a morning bump and an evening
/// peak around 7PM.
pub fn reference_load_shape() -> Vec<f64> {
    let raw: Vec<f64> = (0..HORIZON)
        .map(|slot| {
            let hour = ((slot + DAY_START_HOUR) % 24) as f64;
            let bump = |centre: f64, width: f64| (-(hour - centre).powi(2) / (2.0 * width * width)).exp();
            0.8 + 0.5 * bump(8.0, 1.5) + 1.6 * bump(19.0, 2.5)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x * DAILY_ENERGY_PER_CUSTOMER / total).collect()
}

/// Ground-truth aggregate demand for `pool` customers. At the reference
/// price every hour consumes the reference shape; raising hour h's price
/// cuts its demand with elasticity `self_elasticity`, and `shift_fraction`
/// of that cut reappears in the other hours in proportion to their load.
pub fn synthetic_cnone_truth(pool: f64, self_elasticity: f64, shift_fraction: f64, reference_price: f64) -> AggregateDemandModel {
    let base: Vec<f64> = reference_load_shape().into_iter().map(|x| x * pool).collect();
    let n = base.len();
    let total: f64 = base.iter().sum();
    let mut beta = vec![vec![0.0; n]; n];
    for h in 0..n {
        let own = self_elasticity * base[h] / reference_price;
        beta[h][h] = -own;
        let others = total - base[h];
        for l in (0..n).filter(|&l| l != h) {
            beta[l][h] = shift_fraction * own * base[l] / others;
        }
    }
    let intercepts = (0..n)
        .map(|h| base[h] - beta[h].iter().sum::<f64>() * reference_price)
        .collect();
    AggregateDemandModel {
        intercepts,
        elasticities: beta,
    }
}

/// Noisy observations of `truth` under random cent-grid prices.
pub fn generate_cnone_history(
    truth: &AggregateDemandModel,
    days: usize,
    seed: u64,
    noise: f64,
    p_min: f64,
    p_max: f64,
) -> Vec<DemandDay> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..days)
        .map(|_| {
            let prices = random_prices(&mut rng, p_min, p_max);
            let demand = truth
                .predict_raw(&prices)
                .into_iter()
                .map(|y| {
                    let e = if noise > 0.0 { rng.random_range(-noise..=noise) } else { 0.0 };
                    (y * (1.0 + e)).max(0.0)
                })
                .collect();
            DemandDay { prices, demand }
        })
        .collect()
}

#[derive(Debug, Deserialize, Serialize)]
struct DemandRow {
    date: String,
    slot: usize,
    price_cents: f64,
    demand_kwh: f64,
}

/// Reads a `date,slot,price_cents,demand_kwh` file (slots 0..24 per date,
/// dates sorting chronologically as strings). With `pool` set, demand is
/// rescaled so the mean daily energy equals `pool` × 36 kWh. Row numbers in
/// errors count data rows from 1, excluding the header.
pub fn ingest_price_demand_csv(path: &Path, pool: Option<usize>) -> Result<Vec<DemandDay>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row: 0,
        msg: e.to_string(),
    })?;
    let mut by_date: BTreeMap<String, Vec<Option<(f64, f64)>>> = BTreeMap::new();
    for (i, row) in reader.deserialize::<DemandRow>().enumerate() {
        let row_no = i + 1;
        let parse = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            row: row_no,
            msg,
        };
        let row = row.map_err(|e| parse(e.to_string()))?;
        if row.slot >= HORIZON {
            return Err(parse(format!("slot {} outside 0..{HORIZON}", row.slot)));
        }
        if !(row.price_cents.is_finite() && row.demand_kwh.is_finite() && row.demand_kwh >= 0.0) {
            return Err(parse("price and demand must be finite, demand nonnegative".into()));
        }
        let day = by_date.entry(row.date.clone()).or_insert_with(|| vec![None; HORIZON]);
        if day[row.slot].replace((row.price_cents, row.demand_kwh)).is_some() {
            return Err(parse(format!("duplicate slot {} on {}", row.slot, row.date)));
        }
    }
    let mut days = Vec::with_capacity(by_date.len());
    for (date, slots) in by_date {
        if let Some(missing) = slots.iter().position(Option::is_none) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: 0,
                msg: format!("date {date} is missing slot {missing}"),
            });
        }
        let (prices, demand): (Vec<f64>, Vec<f64>) = slots.into_iter().map(|s| s.expect("checked")).unzip();
        days.push(DemandDay {
            prices: PriceVector::new(prices),
            demand,
        });
    }
    if let Some(pool) = pool {
        let mean_daily = days.iter().map(|d| d.demand.iter().sum::<f64>()).sum::<f64>() / days.len().max(1) as f64;
        if mean_daily > 0.0 {
            let factor = pool as f64 * DAILY_ENERGY_PER_CUSTOMER / mean_daily;
            days.iter_mut().for_each(|d| d.demand.iter_mut().for_each(|y| *y *= factor));
        }
    }
    Ok(days)
}

/// Writes days in the format read by [`ingest_price_demand_csv`], dated
/// `day-0001`, `day-0002`, ...
pub fn write_price_demand_csv(path: &Path, days: &[DemandDay]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for (d, day) in days.iter().enumerate() {
        for slot in 0..day.prices.len() {
            w.serialize(DemandRow {
                date: format!("day-{:04}", d + 1),
                slot,
                price_cents: day.prices[slot],
                demand_kwh: day.demand[slot],
            })
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csm::{enumerate_schedules, RankProbabilityModel};
    use crate::scenario::config::HouseholdTemplate;

    fn options(w_max: f64) -> HistoryOptions {
        HistoryOptions {
            w_max,
            curtail_noise: 0.1,
            p_min: 6.0,
            p_max: 14.0,
        }
    }

    #[test]
    fn zero_penalty_reproduces_bill_minimizing_schedules() {
        let household = HouseholdTemplate::default().household();
        let h = generate_csm_history(&household, 30, 3, &options(0.0)).unwrap();
        for (a, spec) in h.appliances.iter().zip(&household.appliances) {
            if !spec.is_shiftable() {
                continue;
            }
            for (day, prices) in a.days.iter().zip(&h.prices) {
                assert_eq!(day, &schedule_appliance(prices, spec).unwrap().consumption);
            }
        }
    }

    #[test]
    fn history_is_seed_deterministic() {
        let household = HouseholdTemplate::default().household();
        let a = generate_csm_history(&household, 30, 9, &options(0.5)).unwrap();
        let b = generate_csm_history(&household, 30, 9, &options(0.5)).unwrap();
        assert_eq!(a, b);
        assert!(generate_csm_history(&household, 29, 9, &options(0.5)).is_err());
    }

    #[test]
    fn waiting_penalty_spreads_ranks() {
        let household = HouseholdTemplate::default().household();
        let h = generate_csm_history(&household, 90, 4, &options(0.5)).unwrap();
        let phev = household.appliances.iter().position(|a| a.name == "phev").unwrap();
        let set = enumerate_schedules(&household.appliances[phev], HORIZON).unwrap();
        let days = h.prices.iter().zip(h.appliances[phev].days.iter().map(|d| d.as_slice()));
        let model = RankProbabilityModel::learn(&set, days).unwrap();
        assert!(model.probabilities[0] < 1.0);
    }

    #[test]
    fn curtailable_usage_stays_within_comfort_band() {
        let household = HouseholdTemplate::default().household();
        let h = generate_csm_history(&household, 30, 5, &options(0.5)).unwrap();
        let ac = household.appliances.iter().position(|a| !a.is_shiftable()).unwrap();
        for day in &h.appliances[ac].days {
            for slot in household.appliances[ac].window.slots(HORIZON) {
                assert!((1.0..=2.0).contains(&day[slot]));
            }
        }
    }

    #[test]
    fn usage_history_round_trips() {
        let household = HouseholdTemplate::default().household();
        let h = generate_csm_history(&household, 30, 6, &options(0.5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_history(dir.path(), &h).unwrap();
        let names: Vec<String> = household.appliances.iter().map(|a| a.name.clone()).collect();
        assert_eq!(read_history(dir.path(), &names).unwrap(), h);
    }

    #[test]
    fn synthetic_truth_is_feasible_and_matches_shape_at_reference() {
        let truth = synthetic_cnone_truth(100.0, 0.2, 0.5, 10.0);
        truth.check_invariants().unwrap();
        let at_ref = truth.predict_raw(&PriceVector::uniform(10.0, HORIZON));
        let shape = reference_load_shape();
        for (y, s) in at_ref.iter().zip(&shape) {
            assert!((y - 100.0 * s).abs() < 1e-9);
        }
        assert!((shape.iter().sum::<f64>() - 36.0).abs() < 1e-9);
    }

    #[test]
    fn demand_csv_round_trips() {
        let truth = synthetic_cnone_truth(10.0, 0.2, 0.5, 10.0);
        let days = generate_cnone_history(&truth, 12, 1, 0.02, 6.0, 14.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_price_demand_csv(&path, &days).unwrap();
        assert_eq!(ingest_price_demand_csv(&path, None).unwrap(), days);
    }

    fn write_text(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    fn one_day(date: &str, demand: f64) -> String {
        (0..HORIZON).map(|s| format!("{date},{s},10.0,{demand}\n")).collect()
    }

    #[test]
    fn one_complete_day_and_scaling() {
        let text = format!("date,slot,price_cents,demand_kwh\n{}", one_day("2012-01-01", 15_000.0));
        let (_dir, path) = write_text(&text);
        let days = ingest_price_demand_csv(&path, None).unwrap();
        assert_eq!(days.len(), 1);
        // 24 × 15000 = 360000 kWh per day, pool of 100 → factor 0.01
        let scaled = ingest_price_demand_csv(&path, Some(100)).unwrap();
        assert!((scaled[0].demand[0] - 150.0).abs() < 1e-9);
    }

    #[test]
    fn malformed_row_is_named() {
        let mut text = format!(
            "date,slot,price_cents,demand_kwh\n{}",
            one_day("2012-01-01", 1.0)
        );
        text.push_str(&one_day("2012-01-02", 1.0));
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[17] = "2012-01-01,16,ten,1.0".into();
        let (_dir, path) = write_text(&(lines.join("\n") + "\n"));
        match ingest_price_demand_csv(&path, None) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 17),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_slot_is_reported() {
        let text = format!("date,slot,price_cents,demand_kwh\n{}", one_day("2012-01-01", 1.0));
        let text: String = text.lines().filter(|l| !l.contains(",5,")).map(|l| format!("{l}\n")).collect();
        let (_dir, path) = write_text(&text);
        match ingest_price_demand_csv(&path, None) {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("slot 5")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
