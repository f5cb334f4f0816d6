//! `dynprice` command-line interface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dynprice::cnone::{fit_aggregate_demand, AggregateDemandModel, DemandHistory};
use dynprice::scenario::{
    compare, generate_csm_history, generate_cnone_history, history_options, ingest_price_demand_csv, run_case,
    run_pool, storage_study, synthetic_cnone_truth, write_case_outputs, write_history, write_price_demand_csv,
    RunOptions, ScenarioConfig,
};
use dynprice::{Error, Result};

#[derive(Parser)]
#[command(name = "dynprice", version, about = "Day-ahead dynamic pricing optimizer and market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the aggregate demand model from a price/demand CSV
    FitCnone {
        /// CSV with columns date,slot,price_cents,demand_kwh
        csv: PathBuf,
        /// Forgetting factor in [0, 1]
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Rescale demand to this many customers at 36 kWh/day each
        #[arg(long)]
        pool: Option<usize>,
        /// Write the model JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic smart-meter and aggregate demand histories
    GenHistory {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 90)]
        days: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out/history")]
        out: PathBuf,
    },
    /// Optimize prices for one case and write result files
    RunCase {
        #[command(flatten)]
        config: ConfigArg,
        /// Case id from the config; the config's pool when omitted
        #[arg(long)]
        case: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also run the iterative baseline
        #[arg(long)]
        baseline: bool,
    },
    /// Compare the GA against the iterative baseline
    Compare {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,6")]
        cases: Vec<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Retailer profit with and without battery sell-back
    StorageStudy {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// Scenario config (TOML); built-in defaults when absent
    #[arg(env = "DYNPRICE_CONFIG")]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ScenarioConfig> {
        match &self.config {
            Some(path) => ScenarioConfig::load(path),
            None => Ok(ScenarioConfig::default()),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to available parallelism
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the GA population size
    #[arg(long)]
    population: Option<usize>,
    /// Override the GA generation count
    #[arg(long)]
    generations: Option<usize>,
}

impl RunArgs {
    fn apply(&self, config: &mut ScenarioConfig) -> Result<RunOptions> {
        if let Some(p) = self.population {
            config.ga.population = p;
        }
        if let Some(g) = self.generations {
            config.ga.generations = g;
        }
        config.ga.validate()?;
        Ok(RunOptions {
            seed: self.seed.unwrap_or(config.seed),
            jobs: self.jobs.or(config.ga.jobs),
            baseline: false,
        })
    }
}

fn write_json(path: Option<&Path>, value: &AggregateDemandModel) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))? + "\n";
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::FitCnone { csv, lambda, pool, out } => {
            let days = ingest_price_demand_csv(&csv, pool)?;
            let model = fit_aggregate_demand(&DemandHistory::new(days, lambda))?;
            model.check_invariants()?;
            write_json(out.as_deref(), &model)?;
        }
        Command::GenHistory { config, days, seed, out } => {
            let config = config.load()?;
            let seed = seed.unwrap_or(config.seed);
            let household = config.household.household();
            let history = generate_csm_history(&household, days, seed, &history_options(&config))?;
            let mut files = write_history(&out, &history)?;
            let h = &config.history;
            let truth = synthetic_cnone_truth(config.pool.total() as f64, h.self_elasticity, h.shift_fraction, h.reference_price);
            let aggregate = generate_cnone_history(&truth, days, seed, h.cnone_noise, config.limits.p_min, config.limits.p_max);
            let path = out.join("aggregate.csv");
            write_price_demand_csv(&path, &aggregate)?;
            files.push(path);
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::RunCase {
            config,
            case,
            run,
            out,
            baseline,
        } => {
            let mut config = config.load()?;
            let mut options = run.apply(&mut config)?;
            options.baseline = baseline;
            let (result, dir) = match case {
                Some(k) => (run_case(&config, k, &options)?, out.join(format!("case{k}"))),
                None => (run_pool(&config, 0, config.pool, &options)?, out.join("pool")),
            };
            write_case_outputs(&dir, &result)?;
            println!(
                "revenue {:.2} cents, cost {:.2} cents, profit {:.2} cents, violation {} ({:.1} s) -> {}",
                result.revenue,
                result.cost,
                result.profit,
                result.violation,
                result.wall_clock_seconds,
                dir.display()
            );
            if let Some(b) = &result.baseline {
                println!("baseline profit {:.2} cents, violation {}", b.profit, b.violation);
            }
        }
        Command::Compare { config, cases, run } => {
            let mut config = config.load()?;
            let options = run.apply(&mut config)?;
            let rows = compare(&config, &cases, &options)?;
            println!("{:>4} {:>14} {:>14} {:>9}", "case", "ga_profit", "base_profit", "ga>=base");
            for r in rows {
                println!(
                    "{:>4} {:>14.2} {:>14.2} {:>9}",
                    r.case,
                    r.ga_profit,
                    r.baseline_profit,
                    r.ga_profit >= r.baseline_profit
                );
            }
        }
        Command::StorageStudy { config, run } => {
            let mut config = config.load()?;
            let options = run.apply(&mut config)?;
            println!(
                "{:>10} {:>12} {:>12} {:>12} {:>16} {:>14}",
                "sell_back", "revenue", "cost", "profit", "bill_no_storage", "bill_storage"
            );
            for v in storage_study(&config, &options)? {
                println!(
                    "{:>10} {:>12.2} {:>12.2} {:>12.2} {:>16.2} {:>14.2}",
                    v.sell_back, v.result.revenue, v.result.cost, v.result.profit, v.bill_without_storage, v.bill_with_storage
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
