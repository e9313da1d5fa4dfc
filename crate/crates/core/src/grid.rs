//! Uniform binning of the quadrature axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform bins covering `[x_min, x_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    x_min: f64,
    x_max: f64,
    bin_count: usize,
}

impl BinGrid {
    pub fn new(x_min: f64, x_max: f64, bin_count: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return Err(Error::InvalidParameter(format!(
                "bin range [{x_min}, {x_max}) is empty or not finite"
            )));
        }
        if bin_count == 0 {
            return Err(Error::InvalidParameter(
                "bin_count must be at least 1".into(),
            ));
        }
        Ok(Self {
            x_min,
            x_max,
            bin_count,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min) / self.bin_count as f64
    }

    /// Center of bin `index`.
    ///
    /// Measured from the midpoint of the range so that bins mirrored about
    /// the midpoint get exactly negated offsets.
    pub fn center(&self, index: usize) -> f64 {
        let mid = 0.5 * (self.x_min + self.x_max);
        let offset = index as f64 + 0.5 - 0.5 * self.bin_count as f64;
        mid + offset * self.width()
    }

    /// Lower and upper edge of bin `index`.
    pub fn bounds(&self, index: usize) -> (f64, f64) {
        let c = self.center(index);
        let h = 0.5 * self.width();
        (c - h, c + h)
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.bin_count).map(move |i| self.center(i))
    }

    /// Bin holding `x`, or `None` outside `[x_min, x_max)`.
    #[inline]
    pub fn index_of(&self, x: f64) -> Option<usize> {
        if !(x >= self.x_min && x < self.x_max) {
            return None;
        }
        let i = ((x - self.x_min) / self.width()) as usize;
        Some(i.min(self.bin_count - 1))
    }
}
