//! Fock-state quadrature wavefunctions and their lossy densities.
//!
//! Quadratures are scaled so that the vacuum has variance 1/2:
//! `psi_n(x) = pi^{-1/4} (2^n n!)^{-1/2} H_n(x) exp(-x^2/2)`.

use crate::error::{Error, Result};

/// Largest photon number accepted by the wavefunction recurrence.
pub const MAX_PHOTON_NUMBER: usize = 10_000;

const PI_POW_MINUS_QUARTER: f64 = 0.751_125_544_464_942_5;

fn check_photon_number(n: usize) -> Result<()> {
    if n > MAX_PHOTON_NUMBER {
        return Err(Error::CutoffTooLarge {
            n,
            max: MAX_PHOTON_NUMBER,
        });
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "efficiency eta={eta} outside (0, 1]"
        )));
    }
    Ok(())
}

/// Fills `out[n] = psi_n(x)` for `n = 0..out.len()`.
///
/// Uses the normalized three-term recurrence, which keeps every value bounded
/// and never forms `H_n` or `n!` explicitly.
pub fn fill_wavefunctions(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = PI_POW_MINUS_QUARTER * (-0.5 * x * x).exp();
    if out.len() > 1 {
        out[1] = std::f64::consts::SQRT_2 * x * out[0];
    }
    for n in 2..out.len() {
        let nf = n as f64;
        out[n] = (2.0 / nf).sqrt() * x * out[n - 1] - ((nf - 1.0) / nf).sqrt() * out[n - 2];
    }
}

/// `psi_k(x)` for all `k <= n_max`.
pub fn wavefunctions(n_max: usize, x: f64) -> Result<Vec<f64>> {
    check_photon_number(n_max)?;
    let mut out = vec![0.0; n_max + 1];
    fill_wavefunctions(x, &mut out);
    Ok(out)
}

/// Quadrature wavefunction `<x|n>`.
pub fn fock_wavefunction(n: usize, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "quadrature value {x} is not finite"
        )));
    }
    Ok(wavefunctions(n, x)?[n])
}

/// Table of `ln k!` for `k = 0..=n`.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    table.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}

/// Binomial probabilities `C(n,k) eta^k (1-eta)^(n-k)` for every `n <= n_max`,
/// stored row by row (`n` major, `k <= n` minor).
#[derive(Debug, Clone)]
pub struct LossWeights {
    n_max: usize,
    rows: Vec<Vec<f64>>,
}

impl LossWeights {
    pub fn new(n_max: usize, eta: f64) -> Result<Self> {
        check_photon_number(n_max)?;
        check_eta(eta)?;
        let lnf = ln_factorials(n_max);
        let rows = (0..=n_max)
            .map(|n| {
                if eta == 1.0 {
                    let mut row = vec![0.0; n + 1];
                    row[n] = 1.0;
                    return row;
                }
                let (ln_eta, ln_loss) = (eta.ln(), (1.0 - eta).ln());
                (0..=n)
                    .map(|k| {
                        let ln_c = lnf[n] - lnf[k] - lnf[n - k];
                        (ln_c + k as f64 * ln_eta + (n - k) as f64 * ln_loss).exp()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { n_max, rows })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Weights `w[k]`, `k = 0..=n`, for `n` initial photons.
    pub fn row(&self, n: usize) -> &[f64] {
        &self.rows[n]
    }

    /// Mixes squared wavefunctions into lossy densities: `out[n] = sum_k w_nk psi_k^2`.
    pub(crate) fn mix(&self, psi_sq: &[f64], out: &mut [f64]) {
        for (n, o) in out.iter_mut().enumerate() {
            *o = self.rows[n].iter().zip(psi_sq).map(|(w, s)| w * s).sum();
        }
    }
}

/// Lossy quadrature density `A_n(x)` of the Fock state `|n>` at efficiency `eta`.
///
/// Evaluated as the binomial mixture `sum_k C(n,k) eta^k (1-eta)^(n-k) psi_k(x)^2`,
/// which equals the Gaussian convolution of `psi_n^2` with the loss smearing.
pub fn lossy_fock_density(n: usize, x: f64, eta: f64) -> Result<f64> {
    Ok(lossy_fock_densities(n, x, eta)?[n])
}

/// `A_k(x)` for all `k <= n_max`.
pub fn lossy_fock_densities(n_max: usize, x: f64, eta: f64) -> Result<Vec<f64>> {
    let weights = LossWeights::new(n_max, eta)?;
    let mut psi = wavefunctions(n_max, x)?;
    psi.iter_mut().for_each(|v| *v *= *v);
    let mut out = vec![0.0; n_max + 1];
    weights.mix(&psi, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn ground_state_at_origin() {
        assert_abs_diff_eq!(
            fock_wavefunction(0, 0.0).unwrap(),
            PI.powf(-0.25),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            fock_wavefunction(0, 0.0).unwrap(),
            0.7511255,
            epsilon = 1e-7
        );
    }

    #[test]
    fn odd_states_vanish_at_origin() {
        assert_eq!(fock_wavefunction(1, 0.0).unwrap(), 0.0);
        assert_eq!(fock_wavefunction(7, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn second_state_matches_hermite_formula() {
        // H_2 = 4x^2 - 2, normalization (2^2 2!)^{-1/2} = 1/sqrt(8)
        let by_hand =
            |x: f64| PI.powf(-0.25) * (4.0 * x * x - 2.0) / 8f64.sqrt() * (-x * x / 2.0).exp();
        assert_abs_diff_eq!(
            fock_wavefunction(2, 0.0).unwrap(),
            -0.5311259,
            epsilon = 1e-7
        );
        for x in [-2.5, -0.3, 0.0, 1.1, 4.0] {
            assert_abs_diff_eq!(
                fock_wavefunction(2, x).unwrap(),
                by_hand(x),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn guards_photon_number_and_finiteness() {
        assert!(matches!(
            fock_wavefunction(10_001, 0.0),
            Err(Error::CutoffTooLarge { n: 10_001, .. })
        ));
        assert!(fock_wavefunction(3, f64::INFINITY).is_err());
    }

    #[test]
    fn large_photon_numbers_stay_finite() {
        for x in [-20.0, -7.3, 0.1, 13.0, 20.0] {
            let psi = wavefunctions(MAX_PHOTON_NUMBER, x).unwrap();
            assert!(psi.iter().all(|v| v.is_finite() && v.abs() < 1.0));
        }
    }

    #[test]
    fn lossless_density_is_squared_wavefunction() {
        let psi = fock_wavefunction(5, 0.3).unwrap();
        assert_abs_diff_eq!(
            lossy_fock_density(5, 0.3, 1.0).unwrap(),
            psi * psi,
            epsilon = 1e-16
        );
    }

    #[test]
    fn lossy_vacuum_is_unchanged() {
        for x in [-3.0f64, -0.5, 0.0, 1.7] {
            let expect = (-x * x).exp() / PI.sqrt();
            assert_abs_diff_eq!(
                lossy_fock_density(0, x, 0.7).unwrap(),
                expect,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn half_lossy_single_photon_at_origin() {
        let v = lossy_fock_density(1, 0.0, 0.5).unwrap();
        assert_abs_diff_eq!(v, 0.5 / PI.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.2820948, epsilon = 1e-7);
    }

    #[test]
    fn lossy_density_is_even() {
        for eta in [0.3, 0.9, 1.0] {
            let a = lossy_fock_densities(25, 1.37, eta).unwrap();
            let b = lossy_fock_densities(25, -1.37, eta).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn loss_weights_are_distributions() {
        let w = LossWeights::new(40, 0.37).unwrap();
        for n in 0..=40 {
            assert_abs_diff_eq!(w.row(n).iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        }
        assert!(LossWeights::new(3, 0.0).is_err());
        assert!(LossWeights::new(3, 1.2).is_err());
    }
}
