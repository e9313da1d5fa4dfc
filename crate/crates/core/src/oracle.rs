//! Exact phase-space quantities computed directly from a density matrix.
//!
//! These never touch homodyne data and serve as ground truth for the
//! reconstruction. Displacement by `(q, p)` uses `beta = (q + i p)/sqrt(2)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature::Rule;
use crate::state::StateSpec;

/// Largest photon-number mass a displaced distribution may lose above its cutoff.
pub const MAX_DISPLACED_TAIL: f64 = 1e-8;

/// Tolerance on the neglected part of the smoothing integral.
const SMOOTHING_TOLERANCE: f64 = 1e-9;
const HERMITE_ORDER: usize = 48;

/// Matrix elements `<m|D(beta)|n>` for `m < rows`, `n < cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementAmplitudes {
    beta: Complex64,
    entries: DMatrix<Complex64>,
}

impl DisplacementAmplitudes {
    /// Fills the matrix with the ladder-operator recurrence
    /// `sqrt(m+1) D_{m+1,n} = beta D_{m,n} + sqrt(n) D_{m,n-1}`,
    /// seeded by the first row and column.
    pub fn new(beta: Complex64, rows: usize, cols: usize) -> Self {
        let mut d = DMatrix::from_element(rows, cols, Complex64::new(0.0, 0.0));
        if rows == 0 || cols == 0 {
            return Self { beta, entries: d };
        }
        d[(0, 0)] = Complex64::new((-0.5 * beta.norm_sqr()).exp(), 0.0);
        for n in 1..cols {
            d[(0, n)] = -beta.conj() * d[(0, n - 1)] / (n as f64).sqrt();
        }
        for m in 0..rows - 1 {
            let scale = 1.0 / ((m + 1) as f64).sqrt();
            d[(m + 1, 0)] = beta * d[(m, 0)] * scale;
            for n in 1..cols {
                d[(m + 1, n)] = (beta * d[(m, n)] + (n as f64).sqrt() * d[(m, n - 1)]) * scale;
            }
        }
        Self { beta, entries: d }
    }

    /// Amplitudes for the phase-space point `(q, p)`.
    pub fn at_point(q: f64, p: f64, rows: usize, cols: usize) -> Self {
        Self::new(Complex64::new(q, p) * FRAC_1_SQRT_2, rows, cols)
    }

    pub fn beta(&self) -> Complex64 {
        self.beta
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.entries[(m, n)]
    }

    /// Largest deviation of the column Gram matrix from the identity.
    ///
    /// Small only when `rows` is well above the photon numbers each column
    /// reaches, roughly `(sqrt(cols) + |beta|)^2`.
    pub fn column_orthonormality_error(&self) -> f64 {
        let gram = self.entries.adjoint() * &self.entries;
        let mut worst = 0.0f64;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).norm());
            }
        }
        worst
    }
}

/// Photon statistics of a displaced state together with the mass that fell
/// above the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacedPhotons {
    pub probs: Vec<f64>,
    pub tail_mass: f64,
}

impl DisplacedPhotons {
    /// `(1/pi) sum_n (-1)^n rho_n`.
    pub fn wigner(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| if n % 2 == 0 { *p } else { -*p })
            .sum::<f64>()
            / PI
    }
}

fn displaced_unchecked(state: &StateSpec, q: f64, p: f64, n_max: usize) -> DisplacedPhotons {
    let amps = DisplacementAmplitudes::at_point(q, p, state.dim(), n_max + 1);
    let d = amps.entries();
    let rd = state.matrix() * d;
    let probs: Vec<f64> = (0..=n_max)
        .map(|n| d.column(n).dotc(&rd.column(n)).re.max(0.0))
        .collect();
    let trace = state.matrix().trace().re;
    let tail_mass = (trace - probs.iter().sum::<f64>()).max(0.0);
    DisplacedPhotons { probs, tail_mass }
}

/// `rho_n(q, p) = <n| D^dag rho D |n>` for `n <= n_max`.
///
/// Fails when more than 1e-8 of the displaced population lies above `n_max`.
pub fn displaced_photon_distribution(
    state: &StateSpec,
    q: f64,
    p: f64,
    n_max: usize,
) -> Result<DisplacedPhotons> {
    if !(q.is_finite() && p.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "phase-space point ({q}, {p}) is not finite"
        )));
    }
    let out = displaced_unchecked(state, q, p, n_max);
    if out.tail_mass > MAX_DISPLACED_TAIL {
        return Err(Error::Truncation {
            tail: out.tail_mass,
            tolerance: MAX_DISPLACED_TAIL,
        });
    }
    Ok(out)
}

/// Wigner function as the alternating sum of displaced photon probabilities.
pub fn wigner_exact(state: &StateSpec, q: f64, p: f64, n_max: usize) -> Result<f64> {
    Ok(displaced_photon_distribution(state, q, p, n_max)?.wigner())
}

/// A cutoff large enough for any displacement up to `radius` from the origin.
pub fn safe_cutoff(state: &StateSpec, radius: f64) -> usize {
    let amplitude = (state.dim() as f64).sqrt() + radius * FRAC_1_SQRT_2;
    (amplitude * amplitude + 12.0 * amplitude + 20.0).ceil() as usize
}

/// Wigner function with the cutoff picked by [`safe_cutoff`].
pub fn wigner_exact_auto(state: &StateSpec, q: f64, p: f64) -> Result<f64> {
    wigner_exact(state, q, p, safe_cutoff(state, q.hypot(p)))
}

/// Gaussian-smoothed Wigner function
/// `P(q,p;-|s|) = int (1/(pi |s|)) exp(-|r - r'|^2/|s|) W(r') d^2 r'`.
///
/// After the substitution `r' = r + sqrt(|s|) u` the Gaussian becomes the
/// Gauss–Hermite weight, so the product rule covers the whole plane.
pub fn s_ordered_quasidistribution(
    state: &StateSpec,
    q: f64,
    p: f64,
    s_abs: f64,
    n_max: usize,
) -> Result<f64> {
    if !(s_abs > 0.0 && s_abs.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "|s| = {s_abs} must be positive"
        )));
    }
    let rule = Rule::hermite(HERMITE_ORDER);
    let scale = s_abs.sqrt();
    let mut value = 0.0;
    let mut neglected = 0.0;
    for (&u, &wu) in rule.nodes().iter().zip(rule.weights()) {
        for (&v, &wv) in rule.nodes().iter().zip(rule.weights()) {
            let w = wu * wv / PI;
            let d = displaced_unchecked(state, q + scale * u, p + scale * v, n_max);
            value += w * d.wigner();
            neglected += w * d.tail_mass / PI;
        }
    }
    if neglected > SMOOTHING_TOLERANCE {
        return Err(Error::Truncation {
            tail: neglected,
            tolerance: SMOOTHING_TOLERANCE,
        });
    }
    Ok(value)
}
