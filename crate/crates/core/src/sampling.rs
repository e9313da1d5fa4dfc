//! Monte Carlo homodyne data by inverse-CDF sampling of tabulated densities.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::fill_wavefunctions;
use crate::record::{HomodyneRecord, Sample};
use crate::state::{quadratic_form, LossyQuadrature, StateSpec};

/// Density tabulation used by the sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tabulation {
    /// Initial range is `[-half_width, half_width]`.
    pub half_width: f64,
    /// Number of cells over the initial range.
    pub cells: usize,
    /// The range grows in steps of `widen_step` up to this half width.
    pub max_half_width: f64,
    pub widen_step: f64,
    /// Largest probability allowed outside the tabulated range.
    pub tail_tolerance: f64,
}

impl Default for Tabulation {
    fn default() -> Self {
        Self {
            half_width: 8.0,
            cells: 16_000,
            max_half_width: 20.0,
            widen_step: 4.0,
            tail_tolerance: 1e-9,
        }
    }
}

/// Cumulative distribution of one phase on a uniform grid.
#[derive(Debug, Clone)]
struct PhaseTable {
    x0: f64,
    dx: f64,
    cdf: Vec<f64>,
}

impl PhaseTable {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let total = *self.cdf.last().unwrap();
        let u = rng.random::<f64>() * total;
        let cells = self.cdf.len() - 1;
        let upper = self.cdf.partition_point(|&c| c <= u).clamp(1, cells);
        let cell = upper - 1;
        let (lo, hi) = (self.cdf[cell], self.cdf[upper]);
        let frac = if hi > lo {
            ((u - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        self.x0 + (cell as f64 + frac) * self.dx
    }
}

/// Tabulates `h(x; theta)` for every phase, widening the range until the
/// mass outside it is below the tolerance for all phases.
fn tabulate(lossy: &LossyQuadrature, phases: &[f64], tab: &Tabulation) -> Result<Vec<PhaseTable>> {
    if !(tab.half_width > 0.0 && tab.cells > 0 && tab.max_half_width >= tab.half_width) {
        return Err(Error::InvalidParameter(
            "invalid tabulation settings".into(),
        ));
    }
    let dx = 2.0 * tab.half_width / tab.cells as f64;
    let d = lossy.dim();
    let mut half_width = tab.half_width;
    loop {
        let cells = (2.0 * half_width / dx).round() as usize;
        let x0 = -0.5 * cells as f64 * dx;
        let psi: Vec<f64> = (0..=cells)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut row = vec![0.0; d];
                fill_wavefunctions(x0 + i as f64 * dx, &mut row);
                row
            })
            .collect();
        let tables: Vec<(PhaseTable, f64)> = phases
            .par_iter()
            .map(|&theta| {
                let m = lossy.phase_matrix(theta);
                let h: Vec<f64> = psi
                    .chunks_exact(d)
                    .map(|v| quadratic_form(&m, v).max(0.0))
                    .collect();
                let mut cdf = Vec::with_capacity(cells + 1);
                let mut acc = 0.0;
                cdf.push(0.0);
                for w in h.windows(2) {
                    acc += 0.5 * dx * (w[0] + w[1]);
                    cdf.push(acc);
                }
                (PhaseTable { x0, dx, cdf }, (1.0 - acc).abs())
            })
            .collect();
        let worst = tables.iter().map(|t| t.1).fold(0.0, f64::max);
        if worst <= tab.tail_tolerance {
            return Ok(tables.into_iter().map(|t| t.0).collect());
        }
        if half_width >= tab.max_half_width {
            return Err(Error::TabulationRange { tail: worst });
        }
        half_width = (half_width + tab.widen_step).min(tab.max_half_width);
        log::debug!("tail mass {worst:.3e}; widening tabulation to +/-{half_width}");
    }
}

/// Phases `j pi / phase_count`.
pub fn phase_grid(phase_count: usize) -> Vec<f64> {
    (0..phase_count)
        .map(|j| j as f64 * PI / phase_count as f64)
        .collect()
}

/// Draws `events_per_phase` samples at each of `phase_count` equally spaced
/// phases in `[0, pi)` using the default tabulation.
pub fn sample_homodyne(
    state: &StateSpec,
    phase_count: usize,
    events_per_phase: usize,
    eta: f64,
    seed: u64,
) -> Result<HomodyneRecord> {
    sample_homodyne_with(
        state,
        phase_count,
        events_per_phase,
        eta,
        seed,
        &Tabulation::default(),
    )
}

/// As [`sample_homodyne`] with explicit tabulation settings.
///
/// Phase `j` draws from its own ChaCha stream `j` of the master seed, so the
/// record does not depend on how phases are scheduled.
pub fn sample_homodyne_with(
    state: &StateSpec,
    phase_count: usize,
    events_per_phase: usize,
    eta: f64,
    seed: u64,
    tab: &Tabulation,
) -> Result<HomodyneRecord> {
    if phase_count == 0 || events_per_phase == 0 {
        return Err(Error::InvalidParameter(
            "phase_count and events_per_phase must be positive".into(),
        ));
    }
    let lossy = LossyQuadrature::new(state, eta)?;
    let phases = phase_grid(phase_count);
    let tables = tabulate(&lossy, &phases, tab)?;
    let per_phase: Vec<Vec<Sample>> = tables
        .par_iter()
        .zip(&phases)
        .enumerate()
        .map(|(j, (table, &theta))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            (0..events_per_phase)
                .map(|_| Sample {
                    theta,
                    x: table.draw(&mut rng),
                })
                .collect()
        })
        .collect();
    Ok(HomodyneRecord {
        eta,
        samples: per_phase.concat(),
        seed,
        source_label: String::new(),
    })
}
