use std::f64::consts::PI;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use homodyne_ml::pipeline::{Cutoff, ReconstructionConfig};
use homodyne_ml::StateKind;
use num_complex::Complex64;

#[derive(Debug, Parser)]
#[command(
    name = "tomo",
    version,
    about = "Maximum-likelihood Wigner function reconstruction from homodyne data"
)]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a homodyne record from a reference state.
    Simulate(SimulateArgs),
    /// Reconstruct the Wigner function on a grid from a record.
    Reconstruct(ReconstructArgs),
    /// Exact Wigner function of a reference state on a grid.
    Oracle(OracleArgs),
    /// Error norms between two grid files.
    Compare(CompareArgs),
    /// Write gnuplot data and script files for a grid.
    Plot(PlotArgs),
}

/// Parses `vacuum`, `fock:N`, `coherent:RE,IM` or `cat:RE,IM[,PHASE]`
/// (phase defaults to pi, the odd cat).
pub fn parse_state(text: &str) -> Result<StateKind, String> {
    let (kind, params) = text.split_once(':').unwrap_or((text, ""));
    let numbers = || -> Result<Vec<f64>, String> {
        params
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("bad number `{v}` in state `{text}`"))
            })
            .collect()
    };
    match kind.trim() {
        "vacuum" if params.is_empty() => Ok(StateKind::Vacuum),
        "fock" => params
            .trim()
            .parse()
            .map(StateKind::Fock)
            .map_err(|_| format!("bad photon number in `{text}`")),
        "coherent" => match numbers()?[..] {
            [re, im] => Ok(StateKind::Coherent(Complex64::new(re, im))),
            _ => Err(format!(
                "coherent state needs `coherent:RE,IM`, got `{text}`"
            )),
        },
        "cat" => match numbers()?[..] {
            [re, im] => Ok(StateKind::Cat {
                alpha: Complex64::new(re, im),
                relative_phase: PI,
            }),
            [re, im, phase] => Ok(StateKind::Cat {
                alpha: Complex64::new(re, im),
                relative_phase: phase,
            }),
            _ => Err(format!("cat state needs `cat:RE,IM[,PHASE]`, got `{text}`")),
        },
        _ => Err(format!(
            "unknown state `{text}`; expected vacuum, fock:N, coherent:RE,IM or cat:RE,IM[,PHASE]"
        )),
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Reference state: vacuum, fock:N, coherent:RE,IM or cat:RE,IM[,PHASE].
    #[arg(long, value_parser = parse_state, allow_hyphen_values = true)]
    pub state: StateKind,
    /// Fock space dimension; chosen from the state when omitted.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Number of equally spaced phases in [0, pi).
    #[arg(long)]
    pub phases: usize,
    /// Samples per phase.
    #[arg(long)]
    pub events: usize,
    /// Detection efficiency in (0, 1].
    #[arg(long)]
    pub eta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record file to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Write the binary record format instead of text.
    #[arg(long)]
    pub binary: bool,
}

/// Reconstruction settings; each flag overrides the same key of `--config`.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML file whose keys are the flag names in snake_case.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Detection efficiency in (0, 1]; defaults to the record's value.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Lower edge of the quadrature bin range.
    #[arg(long, allow_hyphen_values = true)]
    pub x_min: Option<f64>,
    /// Upper edge of the quadrature bin range.
    #[arg(long, allow_hyphen_values = true)]
    pub x_max: Option<f64>,
    /// Number of quadrature bins.
    #[arg(long)]
    pub bin_count: Option<usize>,
    /// Photon-number cutoff or `auto`.
    #[arg(long)]
    pub n_max: Option<Cutoff>,
    /// Phase-space radius used by `--n-max auto`.
    #[arg(long)]
    pub localization_radius: Option<f64>,
    /// Largest kernel column mass allowed outside the bin range.
    #[arg(long)]
    pub max_column_deficit: Option<f64>,
    /// EM iteration limit.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Stop when the log-likelihood gains less than this per 100 iterations; 0 runs all iterations.
    #[arg(long)]
    pub plateau_tol: Option<f64>,
    /// Log-likelihood trace interval.
    #[arg(long)]
    pub record_every: Option<usize>,
    /// Lower end of the q axis of the grid.
    #[arg(long, allow_hyphen_values = true)]
    pub q_min: Option<f64>,
    /// Upper end of the q axis of the grid.
    #[arg(long, allow_hyphen_values = true)]
    pub q_max: Option<f64>,
    /// Grid points along q.
    #[arg(long)]
    pub q_steps: Option<usize>,
    /// Lower end of the p axis of the grid.
    #[arg(long, allow_hyphen_values = true)]
    pub p_min: Option<f64>,
    /// Upper end of the p axis of the grid.
    #[arg(long, allow_hyphen_values = true)]
    pub p_max: Option<f64>,
    /// Grid points along p.
    #[arg(long)]
    pub p_steps: Option<usize>,
    /// Recorded in the output header.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Homodyne record (text or binary).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Grid file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl ConfigArgs {
    pub fn apply(&self, c: &mut ReconstructionConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { c.$field = v.clone(); })*
            };
        }
        set!(
            eta,
            x_min,
            x_max,
            bin_count,
            n_max,
            max_column_deficit,
            max_iter,
            plateau_tol,
            record_every,
            q_min,
            q_max,
            q_steps,
            p_min,
            p_max,
            p_steps,
            seed
        );
        if self.localization_radius.is_some() {
            c.localization_radius = self.localization_radius;
        }
        if self.input.is_some() {
            c.input.clone_from(&self.input);
        }
        if self.output.is_some() {
            c.output.clone_from(&self.output);
        }
    }
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Reuse or create a kernel cache file.
    #[arg(long)]
    pub kernel_cache: Option<PathBuf>,
    /// Write per-point EM log-likelihood traces here.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, value_parser = parse_state, allow_hyphen_values = true)]
    pub state: StateKind,
    #[arg(long)]
    pub dim: Option<usize>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub candidate: PathBuf,
    pub reference: PathBuf,
    /// Fail with a tolerance error when the max-abs deviation exceeds this.
    #[arg(long)]
    pub max_abs: Option<f64>,
    /// Reference magnitude above which signs are compared.
    #[arg(long, default_value_t = 0.05)]
    pub sign_threshold: f64,
    /// Write the norms table here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    pub grid: PathBuf,
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
    /// Base name of the generated files.
    #[arg(long, default_value = "wigner")]
    pub name: String,
}
