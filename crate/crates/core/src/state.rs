//! Reference states in a truncated Fock basis and their homodyne statistics.
//!
//! Phase-space convention: a coherent state `|alpha>` has quadrature means
//! `<x_theta> = q cos(theta) + p sin(theta)` with `(q, p) = sqrt(2) (Re alpha, Im alpha)`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{fill_wavefunctions, ln_factorials};

/// Largest population a truncated state may lose above its top Fock level.
pub const MAX_TRUNCATED_TAIL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateKind {
    Vacuum,
    Fock(usize),
    Coherent(Complex64),
    /// `|alpha> + e^{i phase} |-alpha>`; `relative_phase = pi` is the odd cat.
    Cat {
        alpha: Complex64,
        relative_phase: f64,
    },
}

impl StateKind {
    /// Truncation that keeps the tail population well below [`MAX_TRUNCATED_TAIL`].
    pub fn suggested_dim(&self) -> usize {
        match *self {
            StateKind::Vacuum => 1,
            StateKind::Fock(n) => n + 1,
            StateKind::Coherent(alpha) | StateKind::Cat { alpha, .. } => {
                let mean = alpha.norm_sqr();
                (mean + 10.0 * (mean + 1.0).sqrt()).ceil() as usize + 5
            }
        }
    }
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateKind::Vacuum => write!(f, "vacuum"),
            StateKind::Fock(n) => write!(f, "fock({n})"),
            StateKind::Coherent(a) => write!(f, "coherent({}{:+}i)", a.re, a.im),
            StateKind::Cat {
                alpha,
                relative_phase,
            } => {
                write!(f, "cat({}{:+}i, {})", alpha.re, alpha.im, relative_phase)
            }
        }
    }
}

/// Density matrix in the Fock basis `|0> .. |dim-1>`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpec {
    rho: DMatrix<Complex64>,
}

impl StateSpec {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn from_matrix(rho: DMatrix<Complex64>) -> Result<Self> {
        let dim = rho.nrows();
        if dim == 0 || rho.ncols() != dim {
            return Err(Error::InvalidState(
                "density matrix must be square and non-empty".into(),
            ));
        }
        let asym = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| (rho[(i, j)] - rho[(j, i)].conj()).norm())
            .fold(0.0, f64::max);
        if asym > 1e-12 {
            return Err(Error::InvalidState(format!(
                "not Hermitian (deviation {asym:.3e})"
            )));
        }
        let trace = rho.trace().re;
        if (trace - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {trace} differs from 1")));
        }
        let min_eig = rho.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-10 {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(Self { rho })
    }

    /// Pure state from (not necessarily normalized) Fock amplitudes.
    pub fn pure(amplitudes: &[Complex64]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if amplitudes.is_empty() || norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let dim = amplitudes.len();
        let rho = DMatrix::from_fn(dim, dim, |m, n| {
            amplitudes[m] * amplitudes[n].conj() / (norm * norm)
        });
        Ok(Self { rho })
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    #[inline]
    pub fn element(&self, m: usize, n: usize) -> Complex64 {
        self.rho[(m, n)]
    }

    /// Photon-number populations `rho_nn`.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|n| self.rho[(n, n)].re).collect()
    }
}

/// Builds a reference state truncated to `dim` Fock levels.
///
/// Fails when more than 1e-10 of the population lies above the truncation.
pub fn make_state(kind: StateKind, dim: usize) -> Result<StateSpec> {
    if dim == 0 {
        return Err(Error::InvalidState("dimension must be at least 1".into()));
    }
    match kind {
        StateKind::Vacuum => {
            let mut amp = vec![Complex64::new(0.0, 0.0); dim];
            amp[0] = Complex64::new(1.0, 0.0);
            StateSpec::pure(&amp)
        }
        StateKind::Fock(n) => {
            if n >= dim {
                return Err(Error::Truncation {
                    tail: 1.0,
                    tolerance: MAX_TRUNCATED_TAIL,
                });
            }
            let mut amp = vec![Complex64::new(0.0, 0.0); dim];
            amp[n] = Complex64::new(1.0, 0.0);
            StateSpec::pure(&amp)
        }
        StateKind::Coherent(alpha) => superposition(alpha, None, dim),
        StateKind::Cat {
            alpha,
            relative_phase,
        } => superposition(alpha, Some(relative_phase), dim),
    }
}

/// `|alpha>` or `|alpha> + e^{i phase}|-alpha>`, checking the truncated tail
/// against the exact norm.
fn superposition(alpha: Complex64, relative_phase: Option<f64>, dim: usize) -> Result<StateSpec> {
    let mean = alpha.norm_sqr();
    let lnf = ln_factorials(dim);
    let amp: Vec<Complex64> = (0..dim)
        .map(|n| {
            // e^{-|a|^2/2} a^n / sqrt(n!), kept in log magnitude to avoid overflow
            let c = if n == 0 {
                Complex64::new((-0.5 * mean).exp(), 0.0)
            } else if mean == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                let ln_mag = -0.5 * mean + n as f64 * alpha.norm().ln() - 0.5 * lnf[n];
                Complex64::from_polar(ln_mag.exp(), n as f64 * alpha.arg())
            };
            match relative_phase {
                None => c,
                Some(phi) => {
                    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                    c * (Complex64::new(1.0, 0.0) + Complex64::from_polar(sign, phi))
                }
            }
        })
        .collect();
    // exact norm of the untruncated vector
    let full_norm_sq = match relative_phase {
        None => 1.0,
        Some(phi) => 2.0 * (1.0 + phi.cos() * (-2.0 * mean).exp()),
    };
    if full_norm_sq <= 1e-300 {
        return Err(Error::InvalidState("superposition has zero norm".into()));
    }
    let kept: f64 = amp.iter().map(|c| c.norm_sqr()).sum();
    let tail = (1.0 - kept / full_norm_sq).max(0.0);
    if tail > MAX_TRUNCATED_TAIL {
        return Err(Error::Truncation {
            tail,
            tolerance: MAX_TRUNCATED_TAIL,
        });
    }
    StateSpec::pure(&amp)
}

/// Photon loss with transmission `eta`:
/// `(L rho)_mn = sum_k sqrt(C(m+k,k) C(n+k,k)) eta^{(m+n)/2} (1-eta)^k rho_{m+k,n+k}`.
pub fn apply_loss_channel(state: &StateSpec, eta: f64) -> Result<StateSpec> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "efficiency eta={eta} outside (0, 1]"
        )));
    }
    if eta == 1.0 {
        return Ok(state.clone());
    }
    let dim = state.dim();
    let lnf = ln_factorials(2 * dim);
    let (ln_eta, ln_loss) = (eta.ln(), (1.0 - eta).ln());
    let ln_binom = |a: usize, k: usize| lnf[a + k] - lnf[a] - lnf[k];
    let rho = DMatrix::from_fn(dim, dim, |m, n| {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..dim - m.max(n) {
            let ln_w = 0.5 * (ln_binom(m, k) + ln_binom(n, k))
                + 0.5 * (m + n) as f64 * ln_eta
                + k as f64 * ln_loss;
            acc += state.element(m + k, n + k) * ln_w.exp();
        }
        acc
    });
    Ok(StateSpec { rho })
}

/// Homodyne statistics `h(x; theta)` of a state seen through efficiency `eta`.
#[derive(Debug, Clone)]
pub struct LossyQuadrature {
    lossy: StateSpec,
    eta: f64,
}

impl LossyQuadrature {
    pub fn new(state: &StateSpec, eta: f64) -> Result<Self> {
        Ok(Self {
            lossy: apply_loss_channel(state, eta)?,
            eta,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn dim(&self) -> usize {
        self.lossy.dim()
    }

    /// Real symmetric matrix `M_mn = Re(rho_mn e^{i(n-m) theta})` so that
    /// `h(x; theta) = psi^T M psi`.
    pub fn phase_matrix(&self, theta: f64) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        for m in 0..d {
            for n in 0..d {
                let phase = Complex64::from_polar(1.0, (n as f64 - m as f64) * theta);
                out[m * d + n] = (self.lossy.element(m, n) * phase).re;
            }
        }
        out
    }

    pub fn density(&self, theta: f64, x: f64) -> f64 {
        let d = self.dim();
        let mut psi = vec![0.0; d];
        fill_wavefunctions(x, &mut psi);
        quadratic_form(&self.phase_matrix(theta), &psi)
    }
}

#[inline]
pub(crate) fn quadratic_form(matrix: &[f64], v: &[f64]) -> f64 {
    let d = v.len();
    let mut total = 0.0;
    for m in 0..d {
        if v[m] == 0.0 {
            continue;
        }
        let row = &matrix[m * d..(m + 1) * d];
        total += v[m] * row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
    total
}

/// `h(x; theta) = sum_mn (L rho)_mn e^{i(n-m) theta} psi_m(x) psi_n(x)`.
pub fn quadrature_density(state: &StateSpec, theta: f64, x: f64, eta: f64) -> Result<f64> {
    Ok(LossyQuadrature::new(state, eta)?.density(theta, x))
}

/// Vacuum density `exp(-x^2)/sqrt(pi)`.
pub fn vacuum_density(x: f64) -> f64 {
    (-x * x).exp() / PI.sqrt()
}
