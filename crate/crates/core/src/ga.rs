//! Binary-encoded genetic algorithm over hourly price vectors.
//!
//! Constraints are handled by Deb's feasibility rules, so the fitness
//! function returns a full [`MarketEvaluation`] instead of a scalar.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::prices::to_ticks;
use crate::retailer::{MarketEvaluation, MarketLimits};
use crate::{Error, PriceVector, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub bits_per_price: usize,
    pub population: usize,
    pub mutation_prob: f64,
    pub generations: usize,
    pub crossover_prob: f64,
    pub tournament_size: usize,
    pub elitism: usize,
    pub seed: u64,
    /// Worker threads for fitness evaluation; `None` uses all cores.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            bits_per_price: 10,
            population: 300,
            mutation_prob: 0.005,
            generations: 300,
            crossover_prob: 0.9,
            tournament_size: 2,
            elitism: 1,
            seed: 0,
            jobs: None,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.population % 2 != 0 {
            return Err(Error::Config(format!("population {} must be positive and even", self.population)));
        }
        if !(1..=31).contains(&self.bits_per_price) {
            return Err(Error::Config("bits per price must be in 1..=31".into()));
        }
        for (name, p) in [("mutation", self.mutation_prob), ("crossover", self.crossover_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} probability {p} outside [0, 1]")));
            }
        }
        if self.tournament_size == 0 || self.tournament_size > self.population {
            return Err(Error::Config("tournament size must be in 1..=population".into()));
        }
        if self.elitism > self.population {
            return Err(Error::Config("elitism exceeds population".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }
}

/// One bit per byte, most significant bit of each price first.
pub type Bits = Vec<u8>;

/// Decodes one price per `bits_per_price` group:
/// `p_min + round_cent(g (p_max − p_min) / (2^bits − 1))`.
pub fn decode(bits: &[u8], bits_per_price: usize, limits: &MarketLimits) -> PriceVector {
    let top = ((1u64 << bits_per_price) - 1) as f64;
    let prices = bits
        .chunks(bits_per_price)
        .enumerate()
        .map(|(h, group)| {
            let g = group.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b & 1));
            let lo = to_ticks(limits.p_min[h]);
            let span = (to_ticks(limits.p_max[h]) - lo) as f64;
            (lo + (g as f64 * span / top).round() as i64) as f64 / 100.0
        })
        .collect();
    PriceVector::new(prices)
}

/// Deb's rules. `Greater` means `a` is better; `Equal` only on exact ties.
pub fn deb_compare(a: &MarketEvaluation, b: &MarketEvaluation) -> Ordering {
    match (a.is_feasible(), b.is_feasible()) {
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        (true, true) => a.profit.total_cmp(&b.profit),
        (false, false) => b.violation.total_cmp(&a.violation),
    }
}

/// True when `a` wins against `b`; ties go to `a`.
pub fn deb_prefers(a: &MarketEvaluation, b: &MarketEvaluation) -> bool {
    deb_compare(a, b) != Ordering::Less
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    pub bits: Bits,
    pub prices: PriceVector,
    pub evaluation: MarketEvaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    /// Best feasible profit found so far; `None` until one exists.
    pub best_profit: Option<f64>,
    pub mean_profit: f64,
    pub feasible_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaOutcome {
    pub best: Chromosome,
    pub trace: Vec<GenerationStats>,
    /// Distinct chromosomes evaluated.
    pub evaluations: usize,
}

pub fn write_trace<W: Write>(trace: &[GenerationStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["generation", "best_profit", "mean_profit", "feasible_fraction"])
        .map_err(csv_error)?;
    for s in trace {
        w.write_record([
            s.generation.to_string(),
            s.best_profit.map(|p| p.to_string()).unwrap_or_default(),
            s.mean_profit.to_string(),
            s.feasible_fraction.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn generation_rng(seed: u64, generation: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(generation as u64);
    rng
}

pub fn random_population(config: &GaConfig, horizon: usize) -> Vec<Bits> {
    let mut rng = generation_rng(config.seed, 0);
    let len = config.bits_per_price * horizon;
    (0..config.population)
        .map(|_| (0..len).map(|_| rng.random_range(0..=1u8)).collect())
        .collect()
}

/// Encodes a price vector to the nearest representable chromosome.
pub fn encode(prices: &PriceVector, bits_per_price: usize, limits: &MarketLimits) -> Bits {
    let top = (1u64 << bits_per_price) - 1;
    let mut bits = Vec::with_capacity(prices.len() * bits_per_price);
    for h in 0..prices.len() {
        let span = limits.p_max[h] - limits.p_min[h];
        let frac = if span > 0.0 { ((prices[h] - limits.p_min[h]) / span).clamp(0.0, 1.0) } else { 0.0 };
        let g = (frac * top as f64).round() as u64;
        bits.extend((0..bits_per_price).rev().map(|i| ((g >> i) & 1) as u8));
    }
    bits
}

pub fn evolve<F>(config: &GaConfig, limits: &MarketLimits, fitness: F) -> Result<GaOutcome>
where
    F: Fn(&PriceVector) -> Result<MarketEvaluation> + Sync,
{
    config.validate()?;
    let initial = random_population(config, limits.horizon());
    evolve_from(config, limits, initial, fitness)
}

/// Like [`evolve`] but starting from a given population.
pub fn evolve_from<F>(config: &GaConfig, limits: &MarketLimits, initial: Vec<Bits>, fitness: F) -> Result<GaOutcome>
where
    F: Fn(&PriceVector) -> Result<MarketEvaluation> + Sync,
{
    config.validate()?;
    limits.validate()?;
    let len = config.bits_per_price * limits.horizon();
    if initial.len() != config.population || initial.iter().any(|c| c.len() != len) {
        return Err(Error::Config(format!(
            "initial population must hold {} chromosomes of {len} bits",
            config.population
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let mut cache: HashMap<Bits, MarketEvaluation> = HashMap::new();
    let evaluate = |population: Vec<Bits>, cache: &mut HashMap<Bits, MarketEvaluation>| -> Result<Vec<Chromosome>> {
        let mut fresh: Vec<&Bits> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for c in &population {
            if !cache.contains_key(c) && seen.insert(c) {
                fresh.push(c);
            }
        }
        let results: Vec<Result<MarketEvaluation>> =
            pool.install(|| fresh.par_iter().map(|c| fitness(&decode(c, config.bits_per_price, limits))).collect());
        for (c, r) in fresh.into_iter().zip(results) {
            cache.insert(c.clone(), r.map_err(|e| e.in_stage("fitness evaluation"))?);
        }
        Ok(population
            .into_iter()
            .map(|bits| {
                let evaluation = cache[&bits].clone();
                let prices = decode(&bits, config.bits_per_price, limits);
                Chromosome { bits, prices, evaluation }
            })
            .collect())
    };

    let mut population = evaluate(initial, &mut cache)?;
    let mut best = best_of(&population).clone();
    let mut trace = Vec::with_capacity(config.generations);

    for generation in 1..=config.generations {
        let mut rng = generation_rng(config.seed, generation);
        let parents = select(&population, config.tournament_size, &mut rng);
        let mut children: Vec<Bits> = Vec::with_capacity(config.population);
        for pair in parents.chunks(2) {
            let mut a = population[pair[0]].bits.clone();
            let mut b = population[pair[1]].bits.clone();
            if rng.random_bool(config.crossover_prob) {
                for i in 0..len {
                    if rng.random_bool(0.5) {
                        std::mem::swap(&mut a[i], &mut b[i]);
                    }
                }
            }
            for c in [&mut a, &mut b] {
                for bit in c.iter_mut() {
                    if rng.random_bool(config.mutation_prob) {
                        *bit ^= 1;
                    }
                }
            }
            children.push(a);
            children.push(b);
        }

        let mut ranked: Vec<usize> = (0..population.len()).collect();
        ranked.sort_by(|&i, &j| deb_compare(&population[j].evaluation, &population[i].evaluation));
        let elite: Vec<Bits> = ranked[..config.elitism].iter().map(|&i| population[i].bits.clone()).collect();
        children.truncate(config.population - config.elitism);
        let next: Vec<Bits> = elite.into_iter().chain(children).collect();

        population = evaluate(next, &mut cache)?;
        let champion = best_of(&population);
        if deb_compare(&champion.evaluation, &best.evaluation) == Ordering::Greater {
            best = champion.clone();
        }
        let feasible = population.iter().filter(|c| c.evaluation.is_feasible()).count();
        trace.push(GenerationStats {
            generation,
            best_profit: best.evaluation.is_feasible().then_some(best.evaluation.profit),
            mean_profit: population.iter().map(|c| c.evaluation.profit).sum::<f64>() / population.len() as f64,
            feasible_fraction: feasible as f64 / population.len() as f64,
        });
    }

    Ok(GaOutcome {
        best,
        trace,
        evaluations: cache.len(),
    })
}

/// First best individual by Deb order.
fn best_of(population: &[Chromosome]) -> &Chromosome {
    let mut best = &population[0];
    for c in &population[1..] {
        if deb_compare(&c.evaluation, &best.evaluation) == Ordering::Greater {
            best = c;
        }
    }
    best
}

/// Deterministic tournaments without replacement: each pass shuffles the
/// population and plays disjoint groups; passes repeat until the mating pool
/// is full.
fn select(population: &[Chromosome], size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = population.len();
    let mut parents = Vec::with_capacity(n);
    let mut order: Vec<usize> = (0..n).collect();
    while parents.len() < n {
        order.shuffle(rng);
        for group in order.chunks_exact(size) {
            let winner = group[1..].iter().fold(group[0], |w, &c| {
                if deb_prefers(&population[w].evaluation, &population[c].evaluation) {
                    w
                } else {
                    c
                }
            });
            parents.push(winner);
            if parents.len() == n {
                break;
            }
        }
    }
    parents
}
