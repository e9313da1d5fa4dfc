//! Reference computations that share no code with the library routes they
//! check: explicit Hermite polynomials, direct Gaussian convolution, closed
//! form Laguerre displacement elements.
#![allow(dead_code)]

use std::f64::consts::PI;

use homodyne_ml::StateSpec;
use num_complex::Complex64;

pub fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Physicists' Hermite polynomial by its defining recurrence.
pub fn hermite(n: usize, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * x);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * x * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// `pi^{-1/4} (2^n n!)^{-1/2} H_n(x) exp(-x^2/2)`, fine for moderate `n`.
pub fn hermite_function(n: usize, x: f64) -> f64 {
    let log_norm = -0.25 * PI.ln() - 0.5 * (n as f64 * 2f64.ln() + ln_factorial(n));
    hermite(n, x) * (log_norm - 0.5 * x * x).exp()
}

/// Trapezoid rule on a uniform grid; spectrally accurate for smooth,
/// rapidly decaying integrands.
pub fn trapezoid(a: f64, b: f64, steps: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / steps as f64;
    let inner: f64 = (1..steps).map(|i| f(a + i as f64 * h)).sum();
    h * (inner + 0.5 * (f(a) + f(b)))
}

const CONV_LIMIT: f64 = 14.0;
const CONV_STEPS: usize = 28_000;

/// Nodes of the uniform grid used by [`convolve_tabulated`].
pub fn convolution_nodes() -> Vec<f64> {
    let h = 2.0 * CONV_LIMIT / CONV_STEPS as f64;
    (0..=CONV_STEPS)
        .map(|i| -CONV_LIMIT + i as f64 * h)
        .collect()
}

/// Smearing of an ideal quadrature density by imperfect detection:
/// `int dx' (pi(1-eta))^{-1/2} exp(-(x - sqrt(eta) x')^2/(1-eta)) f(x')`,
/// with `f` given on [`convolution_nodes`].
pub fn convolve_tabulated(x: f64, eta: f64, ideal: &[f64]) -> f64 {
    assert_eq!(ideal.len(), CONV_STEPS + 1);
    let width = 1.0 - eta;
    let norm = 1.0 / (PI * width).sqrt();
    let h = 2.0 * CONV_LIMIT / CONV_STEPS as f64;
    let nodes = convolution_nodes();
    let mut acc = 0.0;
    for (i, (&xp, &f)) in nodes.iter().zip(ideal).enumerate() {
        let d = x - eta.sqrt() * xp;
        let w = if i == 0 || i == CONV_STEPS { 0.5 } else { 1.0 };
        acc += w * (-d * d / width).exp() * f;
    }
    norm * h * acc
}

pub fn lossy_convolution(x: f64, eta: f64, ideal: impl Fn(f64) -> f64) -> f64 {
    let table: Vec<f64> = convolution_nodes().into_iter().map(ideal).collect();
    convolve_tabulated(x, eta, &table)
}

/// Lossy Fock density by direct convolution of `psi_n^2`.
pub fn lossy_fock_convolution(n: usize, x: f64, eta: f64) -> f64 {
    lossy_convolution(x, eta, |xp| hermite_function(n, xp).powi(2))
}

/// Ideal quadrature density `<x_theta|rho|x_theta>` from explicit Hermite
/// functions and the phase factor `exp(i (n - m) theta)`.
pub fn ideal_quadrature_density(state: &StateSpec, theta: f64, x: f64) -> f64 {
    let d = state.dim();
    let psi: Vec<f64> = (0..d).map(|n| hermite_function(n, x)).collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..d {
        for n in 0..d {
            acc += state.element(m, n)
                * Complex64::from_polar(1.0, (n as f64 - m as f64) * theta)
                * psi[m]
                * psi[n];
        }
    }
    acc.re
}

/// Generalized Laguerre polynomial `L_n^{(k)}(x)` by upward recurrence.
pub fn laguerre(n: usize, k: usize, x: f64) -> f64 {
    let k = k as f64;
    let (mut l0, mut l1) = (1.0, 1.0 + k - x);
    if n == 0 {
        return l0;
    }
    for j in 1..n {
        let j = j as f64;
        let l2 = ((2.0 * j + 1.0 + k - x) * l1 - (j + k) * l0) / (j + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// `<m|D(gamma)|n>` in closed form.
pub fn displacement_element(m: usize, n: usize, gamma: Complex64) -> Complex64 {
    let r2 = gamma.norm_sqr();
    let (lo, hi, z) = if m >= n {
        (n, m, gamma)
    } else {
        (m, n, -gamma.conj())
    };
    let k = hi - lo;
    if r2 == 0.0 {
        return if k == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    let log_mag = 0.5 * (ln_factorial(lo) - ln_factorial(hi)) + k as f64 * z.norm().ln() - 0.5 * r2;
    Complex64::from_polar(log_mag.exp(), k as f64 * z.arg()) * laguerre(lo, k, r2)
}

pub fn beta(q: f64, p: f64) -> Complex64 {
    Complex64::new(q, p) / 2f64.sqrt()
}

/// `W = (1/pi) sum rho_mn (-1)^m <n|D(2 beta)|m>`.
pub fn wigner_fock_kernel(state: &StateSpec, q: f64, p: f64) -> f64 {
    let g = 2.0 * beta(q, p);
    let d = state.dim();
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..d {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        for n in 0..d {
            acc += state.element(m, n) * sign * displacement_element(n, m, g);
        }
    }
    acc.re / PI
}

/// `<n| D^dagger(beta) rho D(beta) |n>` for `n <= n_max`.
pub fn displaced_populations(state: &StateSpec, q: f64, p: f64, n_max: usize) -> Vec<f64> {
    let b = beta(q, p);
    let d = state.dim();
    (0..=n_max)
        .map(|n| {
            let col: Vec<Complex64> = (0..d).map(|m| displacement_element(m, n, b)).collect();
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..d {
                for k in 0..d {
                    acc += col[m].conj() * state.element(m, k) * col[k];
                }
            }
            acc.re
        })
        .collect()
}

/// `P(q,p;-|s|) = 1/(pi(1+|s|)) sum_n (-(1-|s|)/(1+|s|))^n rho_n(q,p)`.
pub fn s_ordered_closed_form(state: &StateSpec, q: f64, p: f64, s_abs: f64, n_max: usize) -> f64 {
    let ratio = -(1.0 - s_abs) / (1.0 + s_abs);
    let pops = displaced_populations(state, q, p, n_max);
    pops.iter()
        .enumerate()
        .map(|(n, r)| ratio.powi(n as i32) * r)
        .sum::<f64>()
        / (PI * (1.0 + s_abs))
}
