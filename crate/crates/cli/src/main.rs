//! `tomo`: simulate homodyne records, reconstruct Wigner grids, compare them
//! against exact values and emit gnuplot input.

mod args;
mod plot;

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::Parser;
use homodyne_ml::kernel::KernelMatrix;
use homodyne_ml::pipeline::{
    self, compare_grids, reconstruct_wigner_grid_with_kernel, ReconstructionConfig, WignerGrid,
};
use homodyne_ml::sampling::sample_homodyne;
use homodyne_ml::{make_state, HomodyneRecord};

use args::{
    Cli, Command, CompareArgs, ConfigArgs, OracleArgs, PlotArgs, ReconstructArgs, SimulateArgs,
};

/// An error with an explicit category, for failures that do not come from
/// the library.
#[derive(Debug)]
struct Tagged {
    category: &'static str,
    message: String,
}

impl fmt::Display for Tagged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Tagged {}

fn tagged(category: &'static str, message: impl Into<String>) -> anyhow::Error {
    Tagged {
        category,
        message: message.into(),
    }
    .into()
}

fn category(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(t) = cause.downcast_ref::<Tagged>() {
            return t.category;
        }
        if let Some(e) = cause.downcast_ref::<homodyne_ml::Error>() {
            return e.category();
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return "format";
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return "io";
        }
    }
    "internal"
}

fn exit_code(category: &str) -> u8 {
    match category {
        "usage" => 2,
        "io" => 3,
        "format" => 4,
        "range" => 5,
        "validation" => 6,
        "numeric" => 7,
        "state" => 8,
        "tolerance" => 9,
        _ => 1,
    }
}

fn fail(category: &'static str, message: &str) -> ExitCode {
    let line: Vec<&str> = message
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    eprintln!("error[{category}]: {}", line.join("; "));
    ExitCode::from(exit_code(category))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            return fail("usage", first);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_write_style("auto")
        .init();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Oracle(a) => oracle(a),
        Command::Compare(a) => compare(a),
        Command::Plot(a) => plot_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(category(&e), &format!("{e:#}")),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

fn load_config(args: &ConfigArgs) -> Result<(ReconstructionConfig, bool)> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            toml::from_str::<ReconstructionConfig>(&text)
                .with_context(|| format!("invalid config {}", path.display()))?
        }
        None => ReconstructionConfig::default(),
    };
    let eta_given = args.eta.is_some() || config_sets_eta(args)?;
    args.apply(&mut config);
    Ok((config, eta_given))
}

fn config_sets_eta(args: &ConfigArgs) -> Result<bool> {
    let Some(path) = &args.config else {
        return Ok(false);
    };
    let text = std::fs::read_to_string(path)?;
    let table: toml::Table = toml::from_str(&text)?;
    Ok(table.contains_key("eta"))
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn write_grid(grid: &WignerGrid, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => grid.write_text(create(path)?, Some(timestamp()))?,
        None => grid.write_text(io::stdout().lock(), Some(timestamp()))?,
    }
    Ok(())
}

fn read_grid(path: &Path) -> Result<WignerGrid> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    WignerGrid::read_text(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let dim = a.dim.unwrap_or_else(|| a.state.suggested_dim());
    let state = make_state(a.state, dim)?;
    let mut record = sample_homodyne(&state, a.phases, a.events, a.eta, a.seed)?;
    record.source_label = a.state.to_string();
    record.save(&a.output, a.binary)?;
    log::info!(
        "wrote {} samples of {} to {}",
        record.len(),
        record.source_label,
        a.output.display()
    );
    Ok(())
}

fn reconstruct(a: ReconstructArgs) -> Result<()> {
    let (mut config, eta_given) = load_config(&a.config)?;
    let input = config
        .input
        .clone()
        .ok_or_else(|| tagged("usage", "no input record given (--input)"))?;
    let record =
        HomodyneRecord::load(&input).with_context(|| format!("loading {}", input.display()))?;
    if !eta_given {
        config.eta = record.eta;
    }
    config.validate()?;
    if record.eta != config.eta {
        return Err(homodyne_ml::Error::EtaMismatch {
            record: record.eta,
            config: config.eta,
        }
        .into());
    }
    let grid = config.bin_grid()?;
    let n_max = config.resolved_cutoff()?;
    let kernel = match &a.kernel_cache {
        Some(path) => {
            KernelMatrix::load_or_build(path, grid, n_max, config.eta, config.max_column_deficit)?
        }
        None => KernelMatrix::build_with_limit(grid, n_max, config.eta, config.max_column_deficit)?,
    };
    log::info!(
        "kernel: {} bins x {} photon numbers",
        grid.bin_count(),
        n_max + 1
    );
    let wigner = reconstruct_wigner_grid_with_kernel(&record, &config, &kernel)?;
    let failures = wigner.failures();
    if failures > 0 {
        log::warn!("{failures} of {} grid points failed", wigner.points.len());
    }
    write_grid(&wigner, config.output.as_deref())?;
    if let Some(path) = &a.diagnostics {
        let mut out = create(path)?;
        for pt in &wigner.points {
            writeln!(out, "# point q = {} p = {}", pt.q, pt.p)?;
            match (&pt.em, &pt.error) {
                (Some(em), _) => em.write_table(&mut out)?,
                (None, Some(err)) => writeln!(out, "# failed: {err}")?,
                (None, None) => {}
            }
        }
        out.flush()?;
    }
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<()> {
    let (config, _) = load_config(&a.config)?;
    config.q_axis()?;
    config.p_axis()?;
    let dim = a.dim.unwrap_or_else(|| a.state.suggested_dim());
    let state = make_state(a.state, dim)?;
    let grid = pipeline::oracle_grid(&state, &config, &a.state.to_string())?;
    write_grid(&grid, config.output.as_deref())
}

fn compare(a: CompareArgs) -> Result<()> {
    let candidate = read_grid(&a.candidate)?;
    let reference = read_grid(&a.reference)?;
    let norms = compare_grids(&candidate, &reference, a.sign_threshold)?;
    match &a.output {
        Some(path) => norms.write_table(create(path)?)?,
        None => norms.write_table(io::stdout().lock())?,
    }
    if norms.compared == 0 {
        return Err(tagged("numeric", "no grid point could be compared"));
    }
    if let Some(bound) = a.max_abs {
        if norms.max_abs.is_nan() || norms.max_abs > bound {
            return Err(tagged(
                "tolerance",
                format!(
                    "max-abs error {:.6e} exceeds bound {bound:.6e}",
                    norms.max_abs
                ),
            ));
        }
    }
    Ok(())
}

fn plot_cmd(a: PlotArgs) -> Result<()> {
    let grid = read_grid(&a.grid)?;
    std::fs::create_dir_all(&a.output_dir)
        .with_context(|| format!("cannot create {}", a.output_dir.display()))?;
    let data = a.output_dir.join(format!("{}.dat", a.name));
    let script = a.output_dir.join(format!("{}.gp", a.name));
    plot::write_data(&grid, create(&data)?)?;
    plot::write_script(&grid, &a.name, create(&script)?)?;
    log::info!("wrote {} and {}", data.display(), script.display());
    Ok(())
}
