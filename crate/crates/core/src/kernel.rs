//! Bin-integrated lossy Fock densities `A_vn = int_{bin v} A_n(x) dx`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::em::ModelMatrix;
use crate::error::{Error, Result};
use crate::fock::{fill_wavefunctions, LossWeights};
use crate::grid::BinGrid;
use crate::quadrature::Rule;

/// Columns missing more probability than this are rejected by default.
pub const MAX_COLUMN_DEFICIT: f64 = 1e-6;

/// Agreement required between successive quadrature orders in a bin.
const BIN_TOLERANCE: f64 = 1e-12;
const MIN_ORDER: usize = 4;
const MAX_ORDER: usize = 1024;

const CACHE_MAGIC: &[u8; 8] = b"HMLKERN\0";
const CACHE_VERSION: u32 = 1;
const CACHE_HEADER_LEN: usize = 64;

/// Kernel linking photon distributions to phase-averaged homodyne histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    grid: BinGrid,
    n_max: usize,
    eta: f64,
    model: ModelMatrix,
    deficits: Vec<f64>,
}

impl KernelMatrix {
    /// Builds the kernel with adaptive Gauss–Legendre integration in every bin.
    ///
    /// The order starts at 4 and doubles until two successive orders agree to
    /// 1e-12 in every column of the bin. Columns may lose at most
    /// [`MAX_COLUMN_DEFICIT`] outside the range.
    pub fn build(grid: BinGrid, n_max: usize, eta: f64) -> Result<Self> {
        Self::build_with_limit(grid, n_max, eta, MAX_COLUMN_DEFICIT)
    }

    /// As [`KernelMatrix::build`] with an explicit column-deficit limit.
    pub fn build_with_limit(
        grid: BinGrid,
        n_max: usize,
        eta: f64,
        max_deficit: f64,
    ) -> Result<Self> {
        check_limit(max_deficit)?;
        let weights = LossWeights::new(n_max, eta)?;
        let cols = n_max + 1;
        let mut orders = Vec::new();
        let mut order = MIN_ORDER;
        while order <= MAX_ORDER {
            orders.push(Rule::legendre(order));
            order *= 2;
        }

        let rows: Vec<Vec<f64>> = (0..grid.bin_count())
            .into_par_iter()
            .map(|bin| {
                let (lo, hi) = grid.bounds(bin);
                let mut scratch = Scratch::new(cols);
                let mut coarse = scratch.integrate(&weights, &orders[0], lo, hi);
                for rule in &orders[1..] {
                    let fine = scratch.integrate(&weights, rule, lo, hi);
                    let change = coarse
                        .iter()
                        .zip(&fine)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    coarse = fine;
                    if change <= BIN_TOLERANCE {
                        return coarse;
                    }
                }
                log::warn!("bin {bin} did not settle below {BIN_TOLERANCE:e} at order {MAX_ORDER}");
                coarse
            })
            .collect();

        let model = ModelMatrix::new(grid.bin_count(), cols, rows.concat())?;
        let kernel = Self::from_parts(grid, n_max, eta, model)?;
        kernel.check_deficits(max_deficit)?;
        Ok(kernel)
    }

    fn from_parts(grid: BinGrid, n_max: usize, eta: f64, model: ModelMatrix) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidParameter(format!("eta={eta} outside (0, 1]")));
        }
        if model.as_slice().iter().any(|&a| a.is_nan() || a < 0.0) {
            return Err(Error::Format(
                "kernel has negative or non-finite entries".into(),
            ));
        }
        let deficits: Vec<f64> = model.column_sums().into_iter().map(|s| 1.0 - s).collect();
        for (column, &deficit) in deficits.iter().enumerate() {
            if deficit < -1e-12 {
                return Err(Error::Format(format!(
                    "kernel column {column} sums to {}",
                    1.0 - deficit
                )));
            }
        }
        Ok(Self {
            grid,
            n_max,
            eta,
            model,
            deficits,
        })
    }

    /// Fails with the first column whose deficit exceeds `max_deficit`.
    pub fn check_deficits(&self, max_deficit: f64) -> Result<()> {
        match self
            .deficits
            .iter()
            .enumerate()
            .find(|(_, &d)| d > max_deficit)
        {
            Some((column, &deficit)) => Err(Error::ColumnDeficit { column, deficit }),
            None => Ok(()),
        }
    }

    pub fn grid(&self) -> &BinGrid {
        &self.grid
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn model(&self) -> &ModelMatrix {
        &self.model
    }

    /// `A[bin][n]`.
    pub fn entry(&self, bin: usize, n: usize) -> f64 {
        self.model.get(bin, n)
    }

    /// Probability each column leaves outside the bin range.
    pub fn column_deficits(&self) -> &[f64] {
        &self.deficits
    }

    pub fn write_cache<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = [0u8; CACHE_HEADER_LEN];
        header[0..8].copy_from_slice(CACHE_MAGIC);
        header[8..12].copy_from_slice(&CACHE_VERSION.to_le_bytes());
        header[16..24].copy_from_slice(&self.grid.x_min().to_le_bytes());
        header[24..32].copy_from_slice(&self.grid.x_max().to_le_bytes());
        header[32..40].copy_from_slice(&(self.grid.bin_count() as u64).to_le_bytes());
        header[40..48].copy_from_slice(&(self.n_max as u64).to_le_bytes());
        header[48..56].copy_from_slice(&self.eta.to_le_bytes());
        out.write_all(&header)?;
        for v in self.model.as_slice() {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a cached kernel. Column deficits are not checked here; see
    /// [`KernelMatrix::check_deficits`].
    pub fn read_cache<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; CACHE_HEADER_LEN];
        input
            .read_exact(&mut header)
            .map_err(|_| Error::Format("kernel cache header truncated".into()))?;
        if &header[0..8] != CACHE_MAGIC {
            return Err(Error::Format("not a kernel cache file".into()));
        }
        let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(Error::Format(format!(
                "unsupported kernel cache version {version}"
            )));
        }
        let f64_at = |i: usize| f64::from_le_bytes(header[i..i + 8].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(header[i..i + 8].try_into().unwrap()) as usize;
        let grid = BinGrid::new(f64_at(16), f64_at(24), u64_at(32))?;
        let n_max = u64_at(40);
        let eta = f64_at(48);
        let len = grid
            .bin_count()
            .checked_mul(n_max + 1)
            .ok_or_else(|| Error::Format("kernel cache dimensions overflow".into()))?;
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() != len * 8 {
            return Err(Error::Format(format!(
                "kernel cache holds {} bytes, expected {}",
                bytes.len(),
                len * 8
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let model = ModelMatrix::new(grid.bin_count(), n_max + 1, data)?;
        Self::from_parts(grid, n_max, eta, model)
    }

    pub fn matches(&self, grid: &BinGrid, n_max: usize, eta: f64) -> bool {
        self.grid == *grid && self.n_max == n_max && self.eta == eta
    }

    /// Loads the kernel cached at `path` when its key matches, otherwise builds
    /// it and (re)writes the cache.
    pub fn load_or_build(
        path: &Path,
        grid: BinGrid,
        n_max: usize,
        eta: f64,
        max_deficit: f64,
    ) -> Result<Self> {
        check_limit(max_deficit)?;
        if let Ok(file) = File::open(path) {
            match Self::read_cache(BufReader::new(file)) {
                Ok(k) if k.matches(&grid, n_max, eta) => {
                    k.check_deficits(max_deficit)?;
                    return Ok(k);
                }
                Ok(_) => log::info!(
                    "kernel cache {} has a different key; rebuilding",
                    path.display()
                ),
                Err(e) => log::warn!("ignoring unreadable kernel cache {}: {e}", path.display()),
            }
        }
        let kernel = Self::build_with_limit(grid, n_max, eta, max_deficit)?;
        kernel.write_cache(BufWriter::new(File::create(path)?))?;
        Ok(kernel)
    }
}

fn check_limit(max_deficit: f64) -> Result<()> {
    if (0.0..1.0).contains(&max_deficit) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "column deficit limit {max_deficit} outside [0, 1)"
        )))
    }
}

struct Scratch {
    psi: Vec<f64>,
    dens: Vec<f64>,
}

impl Scratch {
    fn new(cols: usize) -> Self {
        Self {
            psi: vec![0.0; cols],
            dens: vec![0.0; cols],
        }
    }

    fn integrate(&mut self, weights: &LossWeights, rule: &Rule, lo: f64, hi: f64) -> Vec<f64> {
        let mut acc = vec![0.0; self.psi.len()];
        for (x, w) in rule.mapped(lo, hi) {
            fill_wavefunctions(x, &mut self.psi);
            self.psi.iter_mut().for_each(|v| *v *= *v);
            weights.mix(&self.psi, &mut self.dens);
            acc.iter_mut()
                .zip(&self.dens)
                .for_each(|(a, d)| *a += w * d);
        }
        acc
    }
}
