//! Run configuration: built-in defaults, an optional TOML file, then CLI
//! flags, each layer overriding the previous one.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::{InitialCondition, ProfileTable, RadialGrid};
use crate::integrator::{StepControl, DEFAULT_SIGMA};
use crate::observables::EnergyConvention;
use crate::operator::EvolutionMode;
use crate::spectral::BesovMeasure;

pub const DEFAULT_DIM: u32 = 5;
pub const DEFAULT_POWER: u32 = 5;
pub const DEFAULT_SNAPSHOTS: usize = 11;
/// Records per run when no interval is given.
pub const DEFAULT_RECORDS: f64 = 400.0;

/// Which files a run writes.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputOptions {
    pub dir: PathBuf,
    pub timeseries: bool,
    pub profiles: bool,
    pub spectra: bool,
    /// Fill the `besov` column at snapshot times.
    pub besov: bool,
}

impl OutputOptions {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            timeseries: true,
            profiles: true,
            spectra: true,
            besov: true,
        }
    }

    /// Whether snapshots need the radial transform at all.
    pub fn needs_transform(&self) -> bool {
        self.spectra || self.besov
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ic: InitialCondition,
    pub grid: RadialGrid,
    pub mode: EvolutionMode,
    pub control: StepControl,
    pub outputs: OutputOptions,
    pub label: String,
    pub energy_convention: EnergyConvention,
    pub besov_measure: BesovMeasure,
}

impl RunConfig {
    /// Nonlinear `p = 5` run with the default record cadence and snapshot
    /// count, writing everything to `out/`.
    pub fn new(ic: InitialCondition, grid: RadialGrid, t_end: f64) -> Self {
        Self {
            ic,
            grid,
            mode: EvolutionMode::default(),
            control: StepControl::new(t_end).with_even_snapshots(DEFAULT_SNAPSHOTS),
            outputs: OutputOptions::new("out"),
            label: String::new(),
            energy_convention: EnergyConvention::default(),
            besov_measure: BesovMeasure::default(),
        }
    }

    /// Checks every sub-configuration; does not touch the filesystem.
    pub fn validate(&self) -> Result<()> {
        self.ic.validate()?;
        self.control.validate()?;
        if let EvolutionMode::Nonlinear { p } = self.mode {
            EvolutionMode::nonlinear(p)?;
        }
        Ok(())
    }

    /// `parse_config` from the process arguments.
    pub fn from_cli(args: CliArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let config = merge(file, args)?;
        ensure_writable(&config.outputs.dir)?;
        Ok(config)
    }
}

/// Command-line flags. Every value flag is optional so that a `--config`
/// file can supply it.
#[derive(Debug, Clone, Default, Parser)]
#[command(
    name = "radial-nls",
    version,
    about = "Radial NLS simulator with norm, spectrum and Besov diagnostics",
    allow_negative_numbers = true
)]
pub struct CliArgs {
    /// Initial condition family: gaussian, ring, osc-gaussian or table.
    #[arg(long, value_name = "FAMILY")]
    pub ic: Option<String>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Chirp rate of the oscillatory Gaussian.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// CSV profile (columns r,re,im) for `--ic table`.
    #[arg(long, value_name = "FILE")]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub rmax: Option<f64>,
    /// Number of grid intervals.
    #[arg(long)]
    pub n: Option<i64>,
    /// Spatial dimension (odd).
    #[arg(long)]
    pub dim: Option<i64>,
    /// Nonlinearity power (odd).
    #[arg(long)]
    pub p: Option<i64>,
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Time step is sigma * h^2.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Drop the nonlinearity.
    #[arg(long)]
    pub linear: bool,
    /// Evenly spaced snapshot count, endpoints included.
    #[arg(long)]
    pub snapshots: Option<i64>,
    #[arg(long = "record-interval")]
    pub record_interval: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// TOML file with the same keys as the long flags (underscores for dashes).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long = "energy-convention", value_parser = ["discrete", "continuum"])]
    pub energy_convention: Option<String>,
    #[arg(long = "besov-measure", value_parser = ["linear", "radial"])]
    pub besov_measure: Option<String>,
    #[arg(long = "no-timeseries")]
    pub no_timeseries: bool,
    #[arg(long = "no-profiles")]
    pub no_profiles: bool,
    #[arg(long = "no-spectra")]
    pub no_spectra: bool,
    #[arg(long = "no-besov")]
    pub no_besov: bool,
}

/// `--config` file contents.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub ic: Option<String>,
    pub amplitude: Option<f64>,
    pub alpha: Option<f64>,
    pub table: Option<PathBuf>,
    pub rmax: Option<f64>,
    pub n: Option<i64>,
    pub dim: Option<i64>,
    pub p: Option<i64>,
    pub tmax: Option<f64>,
    pub sigma: Option<f64>,
    pub linear: Option<bool>,
    pub snapshots: Option<i64>,
    pub record_interval: Option<f64>,
    pub out: Option<PathBuf>,
    pub label: Option<String>,
    pub energy_convention: Option<EnergyConvention>,
    pub besov_measure: Option<BesovMeasure>,
    pub timeseries: Option<bool>,
    pub profiles: Option<bool>,
    pub spectra: Option<bool>,
    pub besov: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }
}

/// Parses CLI-style arguments (first item is the program name) into a
/// validated configuration. The output directory is created and probed.
pub fn parse_config<I, T>(args: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = CliArgs::try_parse_from(args).map_err(|e| Error::Usage(e.to_string()))?;
    RunConfig::from_cli(cli)
}

fn positive(field: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::config(field, format!("must be positive, got {value}")))
    }
}

fn positive_int(field: &'static str, value: i64) -> Result<usize> {
    if value > 0 {
        Ok(value as usize)
    } else {
        Err(Error::config(field, format!("must be positive, got {value}")))
    }
}

fn odd_int(field: &'static str, value: i64) -> Result<u32> {
    if value >= 3 && value % 2 == 1 && value <= u32::MAX as i64 {
        Ok(value as u32)
    } else {
        Err(Error::config(
            field,
            format!("must be an odd integer >= 3, got {value}"),
        ))
    }
}

fn initial_condition(name: &str, amplitude: f64, alpha: f64, table: Option<&Path>) -> Result<InitialCondition> {
    let ic = match name {
        "gaussian" => InitialCondition::gaussian(amplitude),
        "ring" => InitialCondition::ring(amplitude),
        "osc-gaussian" => InitialCondition::oscillatory_gaussian(amplitude, alpha),
        "table" => {
            let path = table.ok_or_else(|| Error::config("table", "is required with --ic table"))?;
            InitialCondition::table(ProfileTable::from_csv(path)?, amplitude)
        }
        other => return Err(Error::UnknownFamily(other.to_string())),
    };
    ic.validate()?;
    Ok(ic)
}

fn merge(file: FileConfig, cli: CliArgs) -> Result<RunConfig> {
    let family = cli.ic.or(file.ic).unwrap_or_else(|| "gaussian".to_string());
    let amplitude = cli.amplitude.or(file.amplitude).unwrap_or(10.0);
    let alpha = cli.alpha.or(file.alpha).unwrap_or(10.0);
    let table = cli.table.or(file.table);
    let ic = initial_condition(&family, amplitude, alpha, table.as_deref())?;

    let r_max = positive("rmax", cli.rmax.or(file.rmax).unwrap_or(100.0))?;
    let n = positive_int("n", cli.n.or(file.n).unwrap_or(10_000))?;
    let dim = odd_int("dim", cli.dim.or(file.dim).unwrap_or(DEFAULT_DIM as i64))?;
    let grid = RadialGrid::new(r_max, n, dim)?;

    let linear = cli.linear || file.linear.unwrap_or(false);
    let p = odd_int("p", cli.p.or(file.p).unwrap_or(DEFAULT_POWER as i64))?;
    let mode = if linear {
        EvolutionMode::Linear
    } else {
        EvolutionMode::nonlinear(p)?
    };

    let t_end = positive("tmax", cli.tmax.or(file.tmax).unwrap_or(0.04))?;
    let sigma = positive("sigma", cli.sigma.or(file.sigma).unwrap_or(DEFAULT_SIGMA))?;
    let record_interval = match cli.record_interval.or(file.record_interval) {
        Some(v) => positive("record_interval", v)?,
        None => t_end / DEFAULT_RECORDS,
    };
    let snapshots = cli.snapshots.or(file.snapshots).unwrap_or(DEFAULT_SNAPSHOTS as i64);
    if snapshots < 0 {
        return Err(Error::config(
            "snapshots",
            format!("must be non-negative, got {snapshots}"),
        ));
    }
    let control = StepControl {
        sigma,
        t_end,
        record_interval,
        snapshot_times: Vec::new(),
    }
    .with_even_snapshots(snapshots as usize);

    let energy_convention = match cli.energy_convention.as_deref() {
        Some("continuum") => EnergyConvention::Continuum,
        Some(_) => EnergyConvention::Discrete,
        None => file.energy_convention.unwrap_or_default(),
    };
    let besov_measure = match cli.besov_measure.as_deref() {
        Some("radial") => BesovMeasure::Radial,
        Some(_) => BesovMeasure::Linear,
        None => file.besov_measure.unwrap_or_default(),
    };

    let outputs = OutputOptions {
        dir: cli.out.or(file.out).unwrap_or_else(|| PathBuf::from("out")),
        timeseries: !cli.no_timeseries && file.timeseries.unwrap_or(true),
        profiles: !cli.no_profiles && file.profiles.unwrap_or(true),
        spectra: !cli.no_spectra && file.spectra.unwrap_or(true),
        besov: !cli.no_besov && file.besov.unwrap_or(true),
    };

    let config = RunConfig {
        ic,
        grid,
        mode,
        control,
        outputs,
        label: cli.label.or(file.label).unwrap_or_default(),
        energy_convention,
        besov_measure,
    };
    config.validate()?;
    Ok(config)
}

/// Creates `dir` if needed and checks that a file can be created in it.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    let wrap = |source| Error::OutputDir {
        path: dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(wrap)?;
    let probe = dir.join(format!(".write-probe-{}", std::process::id()));
    OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&probe)
        .map_err(wrap)?;
    fs::remove_file(&probe).map_err(wrap)?;
    Ok(())
}
