//! Expectation-maximization for positive linear models.
//!
//! The observed frequencies `p_v` are modelled as `sum_n A_vn rho_n` with a
//! non-negative matrix `A` whose columns are probability distributions over
//! the bins. The multiplicative update
//!
//! ```text
//! rho'_n = sum_v p_v A_vn rho_n / (sum_m A_vm rho_m)
//! ```
//!
//! never decreases the log-likelihood `sum_v p_v ln(sum_n A_vn rho_n)`.

use std::fmt;
use std::io::{self, Write};

use crate::error::{Error, Result};

/// Length of the window over which the plateau rule measures likelihood gain.
pub const PLATEAU_WINDOW: usize = 100;

/// Dense non-negative matrix, rows indexed by bin and columns by component.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ModelMatrix {
    /// Wraps row-major `data`.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "model entry {v} is not a finite non-negative number"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged model rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        (0..n).for_each(|i| data[i * n + i] = 1.0);
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            sums.iter_mut().zip(self.row(r)).for_each(|(s, v)| *s += v);
        }
        sums
    }

    /// Predicted frequencies `sum_n A_vn rho_n` for every bin.
    pub fn forward(&self, rho: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|r| dot(self.row(r), rho)).collect()
    }
}

/// Dot product with four partial sums, so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (a4, b4) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = a4
        .remainder()
        .iter()
        .zip(b4.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in a4.zip(b4) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Normalized observed frequencies together with the list of occupied bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Frequencies {
    values: Vec<f64>,
    support: Vec<usize>,
}

impl Frequencies {
    /// Normalizes non-negative weights to unit sum.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(
                "frequencies must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("frequencies sum to zero".into()));
        }
        let values: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(i, _)| i)
            .collect();
        Ok(Self { values, support })
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        Self::new(counts.iter().map(|&c| c as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Indices of bins with non-zero frequency.
    pub fn support(&self) -> &[usize] {
        &self.support
    }
}

/// Photon-number probabilities `rho_0 ..= rho_{n_max}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution {
    probs: Vec<f64>,
}

const SIMPLEX_TOLERANCE: f64 = 1e-12;

impl PhotonDistribution {
    /// Accepts probabilities that are non-negative and sum to one within 1e-12.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidParameter(
                "photon distribution needs at least one entry".into(),
            ));
        }
        if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidParameter(
                "photon probabilities must be non-negative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "photon probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Normalizes arbitrary non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidParameter(
                "weights must have a positive finite sum".into(),
            ));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    /// Uniform distribution over `0..=n_max`.
    pub fn flat(n_max: usize) -> Self {
        Self {
            probs: vec![1.0 / (n_max + 1) as f64; n_max + 1],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    /// `sum_n (-1)^n rho_n`, the parity expectation.
    pub fn parity(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| if n % 2 == 0 { *p } else { -*p })
            .sum()
    }

    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        self.probs
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_shapes(p: &Frequencies, model: &ModelMatrix, rho: &[f64]) -> Result<()> {
    if p.len() != model.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} frequencies for a model with {} bins",
            p.len(),
            model.rows()
        )));
    }
    if rho.len() != model.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} photon probabilities for a model with {} components",
            rho.len(),
            model.cols()
        )));
    }
    Ok(())
}

/// Log-likelihood `sum_v p_v ln(sum_n A_vn rho_n)`; empty bins contribute nothing.
pub fn log_likelihood(
    p: &Frequencies,
    model: &ModelMatrix,
    rho: &PhotonDistribution,
) -> Result<f64> {
    check_shapes(p, model, rho.probs())?;
    let mut ll = 0.0;
    for &bin in p.support() {
        let predicted = dot(model.row(bin), rho.probs());
        if predicted <= 0.0 {
            return Err(Error::ModelZero { bin });
        }
        ll += p.values()[bin] * predicted.ln();
    }
    Ok(ll)
}

/// Result of one multiplicative update.
#[derive(Debug, Clone)]
pub struct EmUpdate {
    /// Updated distribution, renormalized to unit sum.
    pub rho: PhotonDistribution,
    /// Log-likelihood of the distribution the update started from.
    pub loglik_before: f64,
    /// Sum of the update before renormalization.
    pub raw_sum: f64,
}

/// One EM step, also reporting the likelihood of the input and the
/// normalization slack introduced by kernel column deficits.
pub fn em_update(
    p: &Frequencies,
    model: &ModelMatrix,
    rho: &PhotonDistribution,
) -> Result<EmUpdate> {
    check_shapes(p, model, rho.probs())?;
    let (next, raw_sum, ll) = update(p, model, rho.probs(), true)?;
    Ok(EmUpdate {
        rho: PhotonDistribution { probs: next },
        loglik_before: ll.expect("likelihood requested"),
        raw_sum,
    })
}

/// Multiplicative update of `current`, returning the renormalized result,
/// its raw sum and, on request, the log-likelihood of `current`.
///
/// Subnormal results are flushed to zero.
fn update(
    p: &Frequencies,
    model: &ModelMatrix,
    current: &[f64],
    with_loglik: bool,
) -> Result<(Vec<f64>, f64, Option<f64>)> {
    let mut back = vec![0.0; model.cols()];
    let mut ll = 0.0;
    for &bin in p.support() {
        let row = model.row(bin);
        let predicted = dot(row, current);
        if predicted <= 0.0 {
            return Err(Error::ModelZero { bin });
        }
        let pv = p.values()[bin];
        if with_loglik {
            ll += pv * predicted.ln();
        }
        let ratio = pv / predicted;
        back.iter_mut().zip(row).for_each(|(b, a)| *b += ratio * a);
    }
    let mut next: Vec<f64> = back.iter().zip(current).map(|(b, r)| b * r).collect();
    let raw_sum: f64 = next.iter().sum();
    if raw_sum != 1.0 {
        if (raw_sum - 1.0).abs() > 1e-12 {
            log::trace!("EM update renormalized by {:.3e}", raw_sum - 1.0);
        }
        next.iter_mut().for_each(|v| *v /= raw_sum);
    }
    next.iter_mut()
        .filter(|v| **v < f64::MIN_POSITIVE)
        .for_each(|v| *v = 0.0);
    Ok((next, raw_sum, with_loglik.then_some(ll)))
}

/// One EM step.
pub fn em_step(
    p: &Frequencies,
    model: &ModelMatrix,
    rho: &PhotonDistribution,
) -> Result<PhotonDistribution> {
    em_update(p, model, rho).map(|u| u.rho)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmParams {
    pub max_iter: usize,
    /// Minimum log-likelihood gain per [`PLATEAU_WINDOW`] iterations; zero
    /// disables the plateau rule and always runs `max_iter` iterations.
    pub plateau_tol: f64,
    pub record_every: usize,
}

impl Default for EmParams {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            plateau_tol: 1e-10,
            record_every: 100,
        }
    }
}

impl EmParams {
    /// Fixed iteration count with no early stopping.
    pub fn fixed(max_iter: usize) -> Self {
        Self {
            max_iter,
            plateau_tol: 0.0,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "max_iter must be at least 1".into(),
            ));
        }
        if self.plateau_tol.is_nan() || self.plateau_tol < 0.0 {
            return Err(Error::InvalidParameter(
                "plateau_tol must be non-negative".into(),
            ));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter(
                "record_every must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    Plateau,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxIterations => "max-iterations",
            StopReason::Plateau => "plateau",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmDiagnostics {
    pub iterations_run: usize,
    pub loglik_trace: Vec<TracePoint>,
    pub final_loglik: f64,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Largest `|raw_sum - 1|` seen over all updates.
    pub max_renormalization: f64,
}

impl EmDiagnostics {
    /// Plain-text `iteration loglik` table.
    pub fn write_table<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# stop_reason = {}", self.stop_reason)?;
        writeln!(out, "# iteration loglik")?;
        for t in &self.loglik_trace {
            writeln!(out, "{} {:.17e}", t.iteration, t.loglik)?;
        }
        Ok(())
    }
}

/// Runs EM from the flat distribution.
///
/// Stops after `max_iter` updates, or once the log-likelihood gained over the
/// last [`PLATEAU_WINDOW`] iterations drops below `plateau_tol` (or an update
/// leaves the distribution unchanged).
pub fn reconstruct(
    p: &Frequencies,
    model: &ModelMatrix,
    params: &EmParams,
) -> Result<(PhotonDistribution, EmDiagnostics)> {
    params.validate()?;
    let mut rho = PhotonDistribution::flat(model.cols() - 1);
    let mut trace = Vec::new();
    let mut window_start = f64::NEG_INFINITY;
    let mut max_renorm = 0.0f64;
    let early_stop = params.plateau_tol > 0.0;

    check_shapes(p, model, rho.probs())?;
    let mut k = 0;
    let (final_loglik, stop_reason) = loop {
        if k == params.max_iter {
            break (log_likelihood(p, model, &rho)?, StopReason::MaxIterations);
        }
        let recording = k % params.record_every == 0;
        let checking = early_stop && k % PLATEAU_WINDOW == 0;
        let (next, raw_sum, ll) = update(p, model, rho.probs(), recording || checking)?;
        if let Some(ll) = ll {
            if recording {
                trace.push(TracePoint {
                    iteration: k,
                    loglik: ll,
                });
            }
            if checking {
                if k >= PLATEAU_WINDOW && ll - window_start < params.plateau_tol {
                    break (ll, StopReason::Plateau);
                }
                window_start = ll;
            }
        }
        if early_stop && rho.max_abs_diff(&next) <= 4.0 * f64::EPSILON {
            let ll = match ll {
                Some(ll) => ll,
                None => log_likelihood(p, model, &rho)?,
            };
            break (ll, StopReason::Plateau);
        }
        max_renorm = max_renorm.max((raw_sum - 1.0).abs());
        rho = PhotonDistribution { probs: next };
        k += 1;
    };
    if trace.last().is_none_or(|t| t.iteration != k) {
        trace.push(TracePoint {
            iteration: k,
            loglik: final_loglik,
        });
    }
    let diagnostics = EmDiagnostics {
        iterations_run: k,
        loglik_trace: trace,
        final_loglik,
        converged: stop_reason == StopReason::Plateau,
        stop_reason,
        max_renormalization: max_renorm,
    };
    Ok((rho, diagnostics))
}

/// Smallest cutoff whose ring radius `sqrt(2 n)` reaches `localization_radius`.
pub fn default_cutoff(localization_radius: f64) -> Result<usize> {
    if !(localization_radius > 0.0 && localization_radius.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "localization radius {localization_radius} must be positive"
        )));
    }
    let half_sq = 0.5 * localization_radius * localization_radius;
    // absorb rounding in r^2 so that r = sqrt(2n) maps back to n
    Ok((half_sq * (1.0 - 1e-12)).ceil() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn freqs(v: &[f64]) -> Frequencies {
        Frequencies::new(v.to_vec()).unwrap()
    }

    fn dist(v: &[f64]) -> PhotonDistribution {
        PhotonDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identity_loglik_by_hand() {
        let ll = log_likelihood(
            &freqs(&[0.3, 0.7]),
            &ModelMatrix::identity(2),
            &dist(&[0.3, 0.7]),
        )
        .unwrap();
        assert_abs_diff_eq!(ll, 0.3 * 0.3f64.ln() + 0.7 * 0.7f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(ll, -0.6108643, epsilon = 1e-7);
    }

    #[test]
    fn concentrated_frequencies_on_certain_bin_give_zero() {
        let model = ModelMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let ll = log_likelihood(&freqs(&[1.0, 0.0]), &model, &dist(&[0.4, 0.6])).unwrap();
        assert_abs_diff_eq!(ll, 0.0, epsilon = 1e-16);
    }

    #[test]
    fn support_mismatch_is_model_zero() {
        let err = log_likelihood(
            &freqs(&[1.0, 0.0]),
            &ModelMatrix::identity(2),
            &dist(&[0.0, 1.0]),
        );
        assert!(matches!(err, Err(Error::ModelZero { bin: 0 })));
        let err = em_step(
            &freqs(&[1.0, 0.0]),
            &ModelMatrix::identity(2),
            &dist(&[0.0, 1.0]),
        );
        assert!(matches!(err, Err(Error::ModelZero { bin: 0 })));
    }

    #[test]
    fn identity_converges_in_one_step() {
        let out = em_step(
            &freqs(&[0.3, 0.7]),
            &ModelMatrix::identity(2),
            &dist(&[0.5, 0.5]),
        )
        .unwrap();
        assert_abs_diff_eq!(out.probs()[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(out.probs()[1], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn two_by_two_step_by_hand() {
        let model = ModelMatrix::from_rows(&[vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let out = em_step(&freqs(&[1.0, 0.0]), &model, &dist(&[0.5, 0.5])).unwrap();
        assert_abs_diff_eq!(out.probs()[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(out.probs()[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn exact_model_is_fixed_point() {
        let model = ModelMatrix::from_rows(&[
            vec![0.5, 0.1, 0.2],
            vec![0.3, 0.6, 0.2],
            vec![0.2, 0.3, 0.6],
        ])
        .unwrap();
        let star = dist(&[0.2, 0.5, 0.3]);
        let p = Frequencies::new(model.forward(star.probs())).unwrap();
        let out = em_step(&p, &model, &star).unwrap();
        assert!(out.max_abs_diff(star.probs()) < 1e-15);
    }

    #[test]
    fn zeros_are_absorbing() {
        let model = ModelMatrix::from_rows(&[vec![0.5, 0.5, 0.1], vec![0.5, 0.5, 0.9]]).unwrap();
        let out = em_step(&freqs(&[0.2, 0.8]), &model, &dist(&[0.5, 0.0, 0.5])).unwrap();
        assert_eq!(out.probs()[1], 0.0);
    }

    #[test]
    fn reconstruct_identity_stops_after_first_step() {
        let p = freqs(&[0.1, 0.25, 0.65]);
        let (rho, diag) = reconstruct(&p, &ModelMatrix::identity(3), &EmParams::default()).unwrap();
        assert!(rho.max_abs_diff(p.values()) < 1e-15);
        assert!(diag.converged);
        assert_eq!(diag.stop_reason, StopReason::Plateau);
        assert_eq!(diag.iterations_run, 1);
    }

    #[test]
    fn fixed_count_runs_to_the_end_and_records_trace() {
        let model = ModelMatrix::from_rows(&[vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let params = EmParams {
            max_iter: 250,
            plateau_tol: 0.0,
            record_every: 100,
        };
        let (_, diag) = reconstruct(&freqs(&[0.6, 0.4]), &model, &params).unwrap();
        assert_eq!(diag.iterations_run, 250);
        assert_eq!(diag.stop_reason, StopReason::MaxIterations);
        assert!(!diag.converged);
        let iters: Vec<usize> = diag.loglik_trace.iter().map(|t| t.iteration).collect();
        assert_eq!(iters, vec![0, 100, 200, 250]);
        assert_eq!(diag.loglik_trace.last().unwrap().loglik, diag.final_loglik);
    }

    #[test]
    fn rejects_bad_params() {
        let p = freqs(&[1.0]);
        let m = ModelMatrix::identity(1);
        for params in [
            EmParams {
                max_iter: 0,
                ..EmParams::default()
            },
            EmParams {
                plateau_tol: -1.0,
                ..EmParams::default()
            },
            EmParams {
                record_every: 0,
                ..EmParams::default()
            },
        ] {
            assert!(reconstruct(&p, &m, &params).is_err());
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let err = em_step(
            &freqs(&[0.5, 0.5, 0.0]),
            &ModelMatrix::identity(2),
            &dist(&[0.5, 0.5]),
        );
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn cutoff_heuristic() {
        assert_eq!(default_cutoff(8.83).unwrap(), 39);
        assert_eq!(default_cutoff(2f64.sqrt()).unwrap(), 1);
        assert_eq!(default_cutoff(4.0).unwrap(), 8);
        assert_eq!(default_cutoff(78f64.sqrt()).unwrap(), 39);
        assert_eq!(default_cutoff(0.1).unwrap(), 1);
        assert!(default_cutoff(0.0).is_err());
        assert!(default_cutoff(-1.0).is_err());
    }

    #[test]
    fn diagnostics_table_lists_trace() {
        let (_, diag) = reconstruct(
            &freqs(&[0.5, 0.5]),
            &ModelMatrix::identity(2),
            &EmParams::fixed(3),
        )
        .unwrap();
        let mut buf = Vec::new();
        diag.write_table(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("# iteration loglik"));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 2);
    }
}
