//! Phase-pooled histograms of displaced homodyne samples.

use crate::em::Frequencies;
use crate::error::{Error, Result};
use crate::grid::BinGrid;
use crate::record::HomodyneRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    grid: BinGrid,
    counts: Vec<u64>,
    total: u64,
    overflow: u64,
}

impl Histogram {
    pub fn from_counts(grid: BinGrid, counts: Vec<u64>, overflow: u64) -> Result<Self> {
        if counts.len() != grid.bin_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} counts for {} bins",
                counts.len(),
                grid.bin_count()
            )));
        }
        let total = counts.iter().sum();
        Ok(Self {
            grid,
            counts,
            total,
            overflow,
        })
    }

    pub fn grid(&self) -> &BinGrid {
        &self.grid
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Samples inside the grid.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Samples that fell outside the grid.
    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    /// Overflow as a fraction of all samples.
    pub fn overflow_fraction(&self) -> f64 {
        let all = self.total + self.overflow;
        if all == 0 {
            0.0
        } else {
            self.overflow as f64 / all as f64
        }
    }

    /// Normalized frequencies `counts / total`.
    pub fn frequencies(&self) -> Result<Frequencies> {
        if self.total == 0 {
            return Err(Error::EmptyHistogram {
                overflow: self.overflow,
            });
        }
        Frequencies::from_counts(&self.counts)
    }
}

/// Histogram of `x - sqrt(eta) (q cos(theta) + p sin(theta))` over all samples.
///
/// Subtracting the shift makes the pooled histogram the phase-averaged
/// statistics of the state displaced so that `(q, p)` moves to the origin.
/// Samples falling outside `grid` are tallied as overflow.
pub fn shift_and_histogram(
    record: &HomodyneRecord,
    q: f64,
    p: f64,
    grid: &BinGrid,
) -> Result<Histogram> {
    if record.is_empty() {
        return Err(Error::InvalidParameter(
            "homodyne record holds no samples".into(),
        ));
    }
    let root_eta = record.eta.sqrt();
    let mut counts = vec![0u64; grid.bin_count()];
    let mut overflow = 0u64;
    // records are grouped by phase; only recompute the shift when it changes
    let mut theta = f64::NAN;
    let mut shift = 0.0;
    for s in &record.samples {
        if s.theta != theta {
            theta = s.theta;
            let (sin, cos) = theta.sin_cos();
            shift = root_eta * (q * cos + p * sin);
        }
        match grid.index_of(s.x - shift) {
            Some(i) => counts[i] += 1,
            None => overflow += 1,
        }
    }
    let hist = Histogram::from_counts(*grid, counts, overflow)?;
    if hist.total == 0 {
        return Err(Error::EmptyHistogram { overflow });
    }
    Ok(hist)
}
