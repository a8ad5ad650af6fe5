//! Command-line front end: bound curves and maps, integration-time tables,
//! coronagraph images and spectra, and Monte-Carlo localization runs.

pub mod commands;
pub mod output;
pub mod tables;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    /// 2 for usage, config and I/O problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<exolimits::Error> for CliError {
    fn from(e: exolimits::Error) -> Self {
        use exolimits::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::NonConvergence(m) => CliError::Numerical(m),
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "exolimits", version, about = "Detection and localization limits for faint companions")]
pub struct Cli {
    /// Telescope prescription (key = value file).
    #[arg(long, global = true, env = "EXOLIMITS_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads; defaults to available parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Directory for CSV, raster and manifest outputs.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Quantum bounds and classical comparisons over a (separation, contrast) grid.
    Bounds(BoundsArgs),
    /// Integration-time tables for detection and localization.
    Tables(TablesArgs),
    /// Coronagraph images, eigenmode spectra and throughput curves.
    Coronagraph(CoronagraphArgs),
    /// Monte-Carlo localization with a mode sorter.
    Montecarlo(MontecarloArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsTarget {
    /// Chernoff exponents.
    Qce,
    /// Fisher matrices in (r_delta, phi_delta).
    Qfim,
    /// Photon and time requirement map.
    BudgetMap,
    /// Per-radial-order information of mode sorting.
    ModeInfo,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundsArgs {
    #[arg(long, value_enum, default_value = "qce")]
    pub target: BoundsTarget,
    /// Separations in Airy-sigma units: `a,b,c`, `start:stop:count` or `log:start:stop:count`.
    #[arg(long, default_value = "0.1:2:20")]
    pub r_delta_over_sigma: String,
    /// Relative brightness values, same syntax as the separations.
    #[arg(long, default_value = "1e-9")]
    pub contrast_b: String,
    /// Systems to evaluate: quantum_bound, spade, perfect, piaacmc, vortex.
    #[arg(long, value_delimiter = ',', default_value = "quantum_bound")]
    pub systems: Vec<String>,
    /// Truncation for SPADE and modal coronagraph operators (0 picks per separation).
    #[arg(long, default_value_t = 0)]
    pub n_max: u32,
    /// Detection error target for budget maps.
    #[arg(long, default_value_t = 1e-3)]
    pub pe_target: f64,
    /// Relative localization error target; switches budget maps to localization.
    #[arg(long)]
    pub rel_loc_error: Option<f64>,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    pub phi_delta: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct TablesArgs {
    /// 2 (detection) or 3 (localization); both when omitted.
    #[arg(long)]
    pub table: Option<u32>,
    /// Coronagraph operator truncation (default 20 for detection, per
    /// separation for localization).
    #[arg(long)]
    pub n_max: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoronagraphOutput {
    Image,
    Eigenmodes,
    Throughput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Operator in the Fourier-Zernike basis.
    Modal,
    /// Sampled Fourier-optics propagation.
    Grid,
}

#[derive(Debug, Args, Serialize)]
pub struct CoronagraphArgs {
    /// perfect, piaacmc or vortex.
    #[arg(long)]
    pub design: String,
    #[arg(long, value_enum, default_value = "image")]
    pub output: CoronagraphOutput,
    #[arg(long, value_enum, default_value = "modal")]
    pub route: Route,
    /// Separation in Airy-sigma units; 0 leaves only the on-axis star.
    #[arg(long, default_value_t = 1.0)]
    pub r_delta_over_sigma: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub contrast_b: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    pub phi_delta: f64,
    #[arg(long, default_value_t = 20)]
    pub n_max: u32,
    #[arg(long, default_value_t = 2)]
    pub vortex_charge: i32,
    /// Raster side in pixels.
    #[arg(long, default_value_t = 128)]
    pub pixels: usize,
    /// Raster half width in focal units (modal route).
    #[arg(long, default_value_t = 3.0)]
    pub half_width: f64,
    /// Number of eigenmodes to render.
    #[arg(long, default_value_t = 28)]
    pub modes: usize,
    /// Separations for throughput curves, same syntax as `bounds`.
    #[arg(long, default_value = "0:3:61")]
    pub separations: String,
}

#[derive(Debug, Args, Serialize)]
pub struct MontecarloArgs {
    #[arg(long, default_value_t = 0.3)]
    pub r_delta_over_sigma: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub contrast_b: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    pub phi_delta: f64,
    /// Replace the single truth position by this many points on a spiral.
    #[arg(long)]
    pub spiral: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub spiral_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub spiral_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub spiral_turns: f64,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    /// Mean photon count per measurement.
    #[arg(long, default_value_t = 3e11)]
    pub photons: f64,
    #[arg(long, default_value_t = 10)]
    pub n_max: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative error in the b assumed by the estimator.
    #[arg(long, default_value_t = 0.0)]
    pub b_mismatch: f64,
}

/// Parses `a,b,c`, `start:stop:count` or `log:start:stop:count`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("cannot parse grid `{spec}`"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let (log, body) = match spec.strip_prefix("log:") {
        Some(rest) => (true, rest),
        None => (false, spec),
    };
    let parts: Vec<&str> = body.split(':').collect();
    let v = match parts.as_slice() {
        [list] if !log => list.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        [a, b, n] => {
            let (a, b) = (num(a)?, num(b)?);
            let n: usize = n.trim().parse().map_err(|_| bad())?;
            if n == 0 || (log && !(a > 0.0 && b > 0.0)) {
                return Err(bad());
            }
            (0..n)
                .map(|i| {
                    let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                    if log {
                        (a.ln() + t * (b.ln() - a.ln())).exp()
                    } else {
                        a + t * (b - a)
                    }
                })
                .collect()
        }
        _ => return Err(bad()),
    };
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(bad());
    }
    Ok(v)
}

/// Runs a parsed command line and returns the manifest it wrote.
pub fn run(cli: Cli) -> Result<output::RunManifest, CliError> {
    if let Some(j) = cli.jobs {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| CliError::io(&cli.out_dir, e))?;
    let presc = match &cli.config {
        Some(p) => exolimits::optics::TelescopePrescription::load(p)?,
        None => Default::default(),
    };
    let ctx = commands::Context { out_dir: cli.out_dir.clone(), config: cli.config.clone(), presc };
    let start = std::time::Instant::now();
    let mut manifest = match &cli.command {
        Command::Bounds(a) => commands::bounds(&ctx, a)?,
        Command::Tables(a) => commands::tables(&ctx, a)?,
        Command::Coronagraph(a) => commands::coronagraph(&ctx, a)?,
        Command::Montecarlo(a) => commands::montecarlo(&ctx, a)?,
    };
    manifest.duration_seconds = start.elapsed().as_secs_f64();
    let path = manifest.path_in(&cli.out_dir);
    manifest.outputs.push(path);
    manifest.write(&cli.out_dir)?;
    Ok(manifest)
}
