//! Wigner function reconstruction over a grid of phase-space points.
//!
//! For every point `(q, p)` the homodyne samples are shifted by
//! `sqrt(eta)(q cos(theta) + p sin(theta))` and pooled over phases, the
//! displaced photon distribution is recovered by EM against a single shared
//! kernel, and `W(q,p)` is its alternating sum divided by `pi`.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::em::{self, default_cutoff, EmDiagnostics, EmParams, PhotonDistribution};
use crate::error::{Error, Result};
use crate::grid::BinGrid;
use crate::histogram::{shift_and_histogram, Histogram};
use crate::kernel::{KernelMatrix, MAX_COLUMN_DEFICIT};
use crate::oracle::{displaced_photon_distribution, safe_cutoff};
use crate::record::HomodyneRecord;
use crate::state::StateSpec;

/// Largest fraction of shifted samples allowed outside the bin range.
pub const MAX_OVERFLOW_FRACTION: f64 = 1e-3;

/// Photon-number cutoff: explicit, or derived from a localization radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cutoff {
    Explicit(usize),
    Auto,
}

impl FromStr for Cutoff {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Cutoff::Auto);
        }
        s.parse().map(Cutoff::Explicit).map_err(|_| {
            Error::InvalidParameter(format!("cutoff `{s}` is neither an integer nor `auto`"))
        })
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cutoff::Explicit(n) => write!(f, "{n}"),
            Cutoff::Auto => f.write_str("auto"),
        }
    }
}

impl Serialize for Cutoff {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cutoff::Explicit(n) => s.serialize_u64(*n as u64),
            Cutoff::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for Cutoff {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(u64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(n) => Ok(Cutoff::Explicit(n as usize)),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Everything needed to turn a homodyne record into a Wigner grid.
///
/// Field names double as config-file keys and (kebab-cased) CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionConfig {
    pub eta: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub bin_count: usize,
    pub n_max: Cutoff,
    pub localization_radius: Option<f64>,
    /// Largest probability a kernel column may leave outside the bin range.
    pub max_column_deficit: f64,
    pub max_iter: usize,
    pub plateau_tol: f64,
    pub record_every: usize,
    pub q_min: f64,
    pub q_max: f64,
    pub q_steps: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub p_steps: usize,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for ReconstructionConfig {
    /// Full-scale cat-state settings: 16000 bins over [-8, 8], cutoff 39,
    /// up to 10^4 iterations, 41x41 points over [-4, 4]^2. The top Fock
    /// columns reach past +/-8, so this kernel only builds with a raised
    /// `max_column_deficit`.
    fn default() -> Self {
        Self {
            eta: 0.9,
            x_min: -8.0,
            x_max: 8.0,
            bin_count: 16_000,
            n_max: Cutoff::Explicit(39),
            localization_radius: None,
            max_column_deficit: MAX_COLUMN_DEFICIT,
            max_iter: 10_000,
            plateau_tol: 1e-10,
            record_every: 100,
            q_min: -4.0,
            q_max: 4.0,
            q_steps: 41,
            p_min: -4.0,
            p_max: 4.0,
            p_steps: 41,
            seed: 0,
            input: None,
            output: None,
        }
    }
}

fn axis(min: f64, max: f64, steps: usize, name: &str) -> Result<Vec<f64>> {
    if steps == 0 || !(min.is_finite() && max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{name} axis needs finite bounds and at least one step"
        )));
    }
    if steps == 1 {
        if min != max {
            return Err(Error::InvalidParameter(format!(
                "{name} axis with one step needs {name}_min = {name}_max"
            )));
        }
        return Ok(vec![min]);
    }
    if min >= max {
        return Err(Error::InvalidParameter(format!(
            "{name} axis range [{min}, {max}] is empty"
        )));
    }
    let step = (max - min) / (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| {
            if i == steps - 1 {
                max
            } else {
                min + i as f64 * step
            }
        })
        .collect())
}

impl ReconstructionConfig {
    pub fn bin_grid(&self) -> Result<BinGrid> {
        BinGrid::new(self.x_min, self.x_max, self.bin_count)
    }

    pub fn em_params(&self) -> EmParams {
        EmParams {
            max_iter: self.max_iter,
            plateau_tol: self.plateau_tol,
            record_every: self.record_every,
        }
    }

    pub fn q_axis(&self) -> Result<Vec<f64>> {
        axis(self.q_min, self.q_max, self.q_steps, "q")
    }

    pub fn p_axis(&self) -> Result<Vec<f64>> {
        axis(self.p_min, self.p_max, self.p_steps, "p")
    }

    /// Explicit cutoff, or `ceil(r^2/2)` for the configured localization radius.
    pub fn resolved_cutoff(&self) -> Result<usize> {
        match self.n_max {
            Cutoff::Explicit(n) => Ok(n),
            Cutoff::Auto => {
                let r = self.localization_radius.ok_or_else(|| {
                    Error::InvalidParameter("n_max = auto requires localization_radius".into())
                })?;
                default_cutoff(r)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eta={} outside (0, 1]",
                self.eta
            )));
        }
        self.bin_grid()?;
        self.q_axis()?;
        self.p_axis()?;
        self.resolved_cutoff()?;
        if !(0.0..1.0).contains(&self.max_column_deficit) {
            return Err(Error::InvalidParameter(format!(
                "max_column_deficit={} outside [0, 1)",
                self.max_column_deficit
            )));
        }
        if self.max_iter == 0
            || self.record_every == 0
            || self.plateau_tol.is_nan()
            || self.plateau_tol < 0.0
        {
            return Err(Error::InvalidParameter(
                "EM settings need max_iter >= 1, record_every >= 1, plateau_tol >= 0".into(),
            ));
        }
        Ok(())
    }

    /// `key = value` pairs echoed into output headers.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or("-".to_owned(), |p| p.display().to_string())
        };
        vec![
            ("eta", self.eta.to_string()),
            ("x_min", self.x_min.to_string()),
            ("x_max", self.x_max.to_string()),
            ("bin_count", self.bin_count.to_string()),
            ("n_max", self.n_max.to_string()),
            (
                "localization_radius",
                self.localization_radius
                    .map_or("-".into(), |r| r.to_string()),
            ),
            ("max_column_deficit", self.max_column_deficit.to_string()),
            ("max_iter", self.max_iter.to_string()),
            ("plateau_tol", self.plateau_tol.to_string()),
            ("record_every", self.record_every.to_string()),
            ("q_min", self.q_min.to_string()),
            ("q_max", self.q_max.to_string()),
            ("q_steps", self.q_steps.to_string()),
            ("p_min", self.p_min.to_string()),
            ("p_max", self.p_max.to_string()),
            ("p_steps", self.p_steps.to_string()),
            ("seed", self.seed.to_string()),
            ("input", path(&self.input)),
            ("output", path(&self.output)),
        ]
    }
}

/// EM reconstruction of the photon distribution behind a histogram.
pub fn reconstruct_photon_distribution(
    hist: &Histogram,
    kernel: &KernelMatrix,
    params: &EmParams,
) -> Result<(PhotonDistribution, EmDiagnostics)> {
    if hist.grid() != kernel.grid() {
        return Err(Error::DimensionMismatch(
            "histogram and kernel use different bin grids".into(),
        ));
    }
    em::reconstruct(&hist.frequencies()?, kernel.model(), params)
}

/// Outcome at one phase-space point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointReconstruction {
    pub w: f64,
    pub rho: PhotonDistribution,
    pub em: EmDiagnostics,
    pub overflow_fraction: f64,
    /// Probability in the top photon number, a hint that the cutoff is tight.
    pub tail_mass: f64,
}

/// Reconstructs `W(q, p)` from a record with a prebuilt kernel.
pub fn reconstruct_wigner_point(
    record: &HomodyneRecord,
    q: f64,
    p: f64,
    kernel: &KernelMatrix,
    params: &EmParams,
) -> Result<PointReconstruction> {
    if record.eta != kernel.eta() {
        return Err(Error::EtaMismatch {
            record: record.eta,
            config: kernel.eta(),
        });
    }
    let hist = shift_and_histogram(record, q, p, kernel.grid())?;
    let overflow_fraction = hist.overflow_fraction();
    if overflow_fraction >= MAX_OVERFLOW_FRACTION {
        return Err(Error::Overflow {
            fraction: overflow_fraction,
            limit: MAX_OVERFLOW_FRACTION,
        });
    }
    let (rho, em) = reconstruct_photon_distribution(&hist, kernel, params)?;
    let w = rho.parity() / PI;
    let tail_mass = *rho.probs().last().unwrap();
    Ok(PointReconstruction {
        w,
        rho,
        em,
        overflow_fraction,
        tail_mass,
    })
}

/// One row of a Wigner grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub q: f64,
    pub p: f64,
    /// `NaN` when the point failed.
    pub w: f64,
    pub iterations: usize,
    pub final_loglik: f64,
    pub overflow_fraction: f64,
    pub tail_mass: f64,
    /// Error category and message for failed points.
    pub error: Option<String>,
    pub em: Option<EmDiagnostics>,
}

impl GridPoint {
    fn failed(q: f64, p: f64, err: &Error) -> Self {
        Self {
            q,
            p,
            w: f64::NAN,
            iterations: 0,
            final_loglik: f64::NAN,
            overflow_fraction: f64::NAN,
            tail_mass: f64::NAN,
            error: Some(format!("{}: {err}", err.category())),
            em: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Wigner values on a rectangular `(q, p)` grid; points are stored with `q`
/// as the slow index.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub points: Vec<GridPoint>,
    /// `key = value` header lines describing how the grid was made.
    pub header: Vec<(String, String)>,
}

const GRID_MAGIC: &str = "# wigner-grid v1";
const GRID_COLUMNS: &str = "# q p W iterations final_loglik overflow_fraction tail_mass status";

impl WignerGrid {
    pub fn at(&self, iq: usize, ip: usize) -> &GridPoint {
        &self.points[iq * self.p.len() + ip]
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|pt| pt.w)
    }

    pub fn failures(&self) -> usize {
        self.points.iter().filter(|pt| !pt.is_ok()).count()
    }

    /// Text table. `timestamp`, when given, goes on its own comment line so
    /// the rest of the file is reproducible byte for byte.
    pub fn write_text<W: Write>(&self, mut out: W, timestamp: Option<u64>) -> io::Result<()> {
        writeln!(out, "{GRID_MAGIC}")?;
        if let Some(t) = timestamp {
            writeln!(out, "# generated = {t}")?;
        }
        for (k, v) in &self.header {
            writeln!(out, "# {k} = {v}")?;
        }
        writeln!(out, "# grid_q_steps = {}", self.q.len())?;
        writeln!(out, "# grid_p_steps = {}", self.p.len())?;
        writeln!(out, "{GRID_COLUMNS}")?;
        for pt in &self.points {
            let status = pt.error.as_deref().map_or("ok".to_owned(), |e| {
                format!("failed[{}]", e.split(':').next().unwrap_or("error"))
            });
            writeln!(
                out,
                "{} {} {} {} {:e} {:e} {:e} {}",
                pt.q,
                pt.p,
                pt.w,
                pt.iterations,
                pt.final_loglik,
                pt.overflow_fraction,
                pt.tail_mass,
                status
            )?;
        }
        out.flush()
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        match lines.next() {
            Some(Ok(l)) if l.trim() == GRID_MAGIC => {}
            _ => return Err(Error::Format("missing wigner-grid header".into())),
        }
        let mut header = Vec::new();
        let (mut q_steps, mut p_steps) = (None, None);
        let mut points = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once('=') {
                    let (k, v) = (k.trim(), v.trim());
                    let parse = |v: &str| {
                        v.parse::<usize>()
                            .map_err(|_| Error::Format(format!("bad {k}")))
                    };
                    match k {
                        "grid_q_steps" => q_steps = Some(parse(v)?),
                        "grid_p_steps" => p_steps = Some(parse(v)?),
                        "generated" => {}
                        _ => header.push((k.to_owned(), v.to_owned())),
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 8 {
                return Err(Error::Format(format!(
                    "grid row {}: expected 8 columns, found {}",
                    i + 2,
                    fields.len()
                )));
            }
            let num = |j: usize| {
                fields[j].parse::<f64>().map_err(|_| {
                    Error::Format(format!("grid row {}: bad number `{}`", i + 2, fields[j]))
                })
            };
            let iterations = fields[3]
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("grid row {}: bad iteration count", i + 2)))?;
            let error = match fields[7] {
                "ok" => None,
                other => Some(other.to_owned()),
            };
            points.push(GridPoint {
                q: num(0)?,
                p: num(1)?,
                w: num(2)?,
                iterations,
                final_loglik: num(4)?,
                overflow_fraction: num(5)?,
                tail_mass: num(6)?,
                error,
                em: None,
            });
        }
        let (nq, np) = match (q_steps, p_steps) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Format("grid dimensions missing from header".into())),
        };
        if nq * np != points.len() || nq == 0 || np == 0 {
            return Err(Error::Format(format!(
                "{} rows for a {nq}x{np} grid",
                points.len()
            )));
        }
        let q = (0..nq).map(|i| points[i * np].q).collect();
        let p = (0..np).map(|j| points[j].p).collect();
        Ok(Self {
            q,
            p,
            points,
            header,
        })
    }
}

/// Reconstructs the Wigner function on the configured grid, building the kernel.
pub fn reconstruct_wigner_grid(
    record: &HomodyneRecord,
    config: &ReconstructionConfig,
) -> Result<WignerGrid> {
    config.validate()?;
    if record.eta != config.eta {
        return Err(Error::EtaMismatch {
            record: record.eta,
            config: config.eta,
        });
    }
    let kernel = KernelMatrix::build_with_limit(
        config.bin_grid()?,
        config.resolved_cutoff()?,
        config.eta,
        config.max_column_deficit,
    )?;
    reconstruct_wigner_grid_with_kernel(record, config, &kernel)
}

/// As [`reconstruct_wigner_grid`] with a prebuilt kernel shared by all points.
///
/// Failing points are recorded and the rest of the grid continues; the call
/// fails only when every point fails.
pub fn reconstruct_wigner_grid_with_kernel(
    record: &HomodyneRecord,
    config: &ReconstructionConfig,
    kernel: &KernelMatrix,
) -> Result<WignerGrid> {
    config.validate()?;
    if record.eta != config.eta {
        return Err(Error::EtaMismatch {
            record: record.eta,
            config: config.eta,
        });
    }
    if !kernel.matches(&config.bin_grid()?, config.resolved_cutoff()?, config.eta) {
        return Err(Error::DimensionMismatch(
            "kernel does not match the configuration".into(),
        ));
    }
    kernel.check_deficits(config.max_column_deficit)?;
    let (q_axis, p_axis) = (config.q_axis()?, config.p_axis()?);
    let params = config.em_params();
    let coords: Vec<(f64, f64)> = q_axis
        .iter()
        .flat_map(|&q| p_axis.iter().map(move |&p| (q, p)))
        .collect();
    let results: Vec<(GridPoint, Option<Error>)> = coords
        .par_iter()
        .map(
            |&(q, p)| match reconstruct_wigner_point(record, q, p, kernel, &params) {
                Ok(r) => {
                    let point = GridPoint {
                        q,
                        p,
                        w: r.w,
                        iterations: r.em.iterations_run,
                        final_loglik: r.em.final_loglik,
                        overflow_fraction: r.overflow_fraction,
                        tail_mass: r.tail_mass,
                        error: None,
                        em: Some(r.em),
                    };
                    (point, None)
                }
                Err(e) => {
                    log::warn!("grid point ({q}, {p}) failed: {e}");
                    (GridPoint::failed(q, p, &e), Some(e))
                }
            },
        )
        .collect();
    let mut first_error = None;
    let mut points = Vec::with_capacity(results.len());
    for (pt, e) in results {
        if first_error.is_none() {
            first_error = e;
        }
        points.push(pt);
    }
    if points.iter().all(|pt| !pt.is_ok()) {
        return Err(first_error.expect("grid has at least one point"));
    }
    let mut header: Vec<(String, String)> = config
        .echo()
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect();
    header.push(("source".into(), record.source_label.clone()));
    header.push(("kind".into(), "reconstruction".into()));
    Ok(WignerGrid {
        q: q_axis,
        p: p_axis,
        points,
        header,
    })
}

/// Exact Wigner function of `state` on the grid axes of `config`.
pub fn oracle_grid(
    state: &StateSpec,
    config: &ReconstructionConfig,
    label: &str,
) -> Result<WignerGrid> {
    let (q_axis, p_axis) = (config.q_axis()?, config.p_axis()?);
    let coords: Vec<(f64, f64)> = q_axis
        .iter()
        .flat_map(|&q| p_axis.iter().map(move |&p| (q, p)))
        .collect();
    let points = coords
        .par_iter()
        .map(|&(q, p)| {
            let d = displaced_photon_distribution(state, q, p, safe_cutoff(state, q.hypot(p)))?;
            Ok(GridPoint {
                q,
                p,
                w: d.wigner(),
                iterations: 0,
                final_loglik: f64::NAN,
                overflow_fraction: 0.0,
                tail_mass: d.tail_mass,
                error: None,
                em: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let header = vec![
        ("kind".to_owned(), "oracle".to_owned()),
        ("source".to_owned(), label.to_owned()),
        ("q_min".to_owned(), config.q_min.to_string()),
        ("q_max".to_owned(), config.q_max.to_string()),
        ("p_min".to_owned(), config.p_min.to_string()),
        ("p_max".to_owned(), config.p_max.to_string()),
    ];
    Ok(WignerGrid {
        q: q_axis,
        p: p_axis,
        points,
        header,
    })
}

/// Deviation statistics between two grids over points where both succeeded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub compared: usize,
    pub skipped: usize,
    pub max_abs: f64,
    pub rms: f64,
    pub mean_abs: f64,
    /// Points where `|reference| > sign_threshold` and the signs differ.
    pub sign_mismatches: usize,
    pub sign_checked: usize,
}

impl ErrorNorms {
    pub fn write_table<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# metric value")?;
        writeln!(out, "compared {}", self.compared)?;
        writeln!(out, "skipped {}", self.skipped)?;
        writeln!(out, "max_abs {}", self.max_abs)?;
        writeln!(out, "rms {}", self.rms)?;
        writeln!(out, "mean_abs {}", self.mean_abs)?;
        writeln!(out, "sign_checked {}", self.sign_checked)?;
        writeln!(out, "sign_mismatches {}", self.sign_mismatches)
    }
}

/// Compares `candidate` against `reference` on identical axes.
pub fn compare_grids(
    candidate: &WignerGrid,
    reference: &WignerGrid,
    sign_threshold: f64,
) -> Result<ErrorNorms> {
    let same_axis = |a: &[f64], b: &[f64]| {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9)
    };
    if !same_axis(&candidate.q, &reference.q) || !same_axis(&candidate.p, &reference.p) {
        return Err(Error::DimensionMismatch("grids have different axes".into()));
    }
    let mut norms = ErrorNorms {
        compared: 0,
        skipped: 0,
        max_abs: 0.0,
        rms: 0.0,
        mean_abs: 0.0,
        sign_mismatches: 0,
        sign_checked: 0,
    };
    let mut sq = 0.0;
    let mut abs = 0.0;
    for (c, r) in candidate.points.iter().zip(&reference.points) {
        if !(c.w.is_finite() && r.w.is_finite()) {
            norms.skipped += 1;
            continue;
        }
        let d = (c.w - r.w).abs();
        norms.compared += 1;
        norms.max_abs = norms.max_abs.max(d);
        sq += d * d;
        abs += d;
        if r.w.abs() > sign_threshold {
            norms.sign_checked += 1;
            if c.w.signum() != r.w.signum() {
                norms.sign_mismatches += 1;
            }
        }
    }
    if norms.compared > 0 {
        norms.rms = (sq / norms.compared as f64).sqrt();
        norms.mean_abs = abs / norms.compared as f64;
    }
    Ok(norms)
}
