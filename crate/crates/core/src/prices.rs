use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of hourly slots in a pricing day.
pub const HORIZON: usize = 24;

/// Clock hour of slot 0; the scheduling day runs from 8AM to 8AM.
pub const DAY_START_HOUR: usize = 8;

/// Hourly retail prices in cents/kWh.
///
/// Comparisons that must be exact (schedule ranking, tie detection) go
/// through [`PriceVector::ticks`], which expresses each price as an integer
/// number of hundredths of a cent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceVector(Vec<f64>);

impl PriceVector {
    pub fn new(prices: Vec<f64>) -> Self {
        PriceVector(prices)
    }

    pub fn uniform(price: f64, len: usize) -> Self {
        PriceVector(vec![price; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Prices as integer hundredths of a cent.
    pub fn ticks(&self) -> Vec<i64> {
        self.0.iter().map(|&p| to_ticks(p)).collect()
    }

    /// Σ p_h · x_h in cents.
    pub fn dot(&self, energy: &[f64]) -> f64 {
        self.0.iter().zip(energy).map(|(p, x)| p * x).sum()
    }

    /// Largest absolute per-slot difference.
    pub fn max_abs_diff(&self, other: &PriceVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for PriceVector {
    type Output = f64;

    fn index(&self, slot: usize) -> &f64 {
        &self.0[slot]
    }
}

pub(crate) fn to_ticks(price: f64) -> i64 {
    (price * 100.0).round() as i64
}

/// A contiguous run of slots, `len` long, starting at slot `start`.
/// Slot indices wrap modulo the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub len: usize,
}

impl Window {
    pub fn new(start: usize, len: usize) -> Self {
        Window { start, len }
    }

    /// Window covering clock hours `[start_hour, end_hour)` on a day whose
    /// slot 0 begins at [`DAY_START_HOUR`]. `end_hour == start_hour` means a
    /// full day.
    pub fn from_clock(start_hour: usize, end_hour: usize) -> Result<Self> {
        if start_hour >= 24 || end_hour >= 24 {
            return Err(Error::input(format!(
                "clock hours must lie in 0..24, got {start_hour}-{end_hour}"
            )));
        }
        let start = (start_hour + HORIZON - DAY_START_HOUR) % HORIZON;
        let len = match (end_hour + 24 - start_hour) % 24 {
            0 => HORIZON,
            n => n,
        };
        Ok(Window { start, len })
    }

    /// Slot index of window position `pos` over a horizon of `horizon` slots.
    pub fn slot(&self, pos: usize, horizon: usize) -> usize {
        (self.start + pos) % horizon
    }

    /// Slot indices in window order.
    pub fn slots(&self, horizon: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).map(move |pos| self.slot(pos, horizon))
    }

    pub(crate) fn check(&self, horizon: usize) -> Result<()> {
        if self.len == 0 || self.len > horizon || self.start >= horizon {
            return Err(Error::input(format!(
                "window start {} len {} does not fit a {horizon}-slot horizon",
                self.start, self.len
            )));
        }
        Ok(())
    }
}
