//! Single runs with file output.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

use super::config::{ensure_writable, RunConfig};
use crate::error::{Error, Result};
use crate::grid::{init_field, InitialCondition, RadialGrid};
use crate::integrator::{choose_dt, evolve, EvolutionSink, EvolveOptions, Snapshot};
use crate::observables::{DiagnosticsRecord, EnergyConvention};
use crate::operator::EvolutionMode;
use crate::spectral::BesovMeasure;

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// The three nonlinear runs studied in depth, on their conservation-table
/// grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Headline {
    /// `10 e^{-r^2}`, `n = 10000`, `R = 100`, `T = 0.04`
    Gaussian,
    /// `8 r^2 e^{-r^2}`, `n = 32000`, `R = 100`, `T = 0.2`
    Ring,
    /// `4 e^{-10 i r^2} e^{-r^2}`, `n = 40000`, `R = 100`, `T = 0.1`
    OscillatoryGaussian,
}

impl Headline {
    pub const ALL: [Headline; 3] = [Headline::Gaussian, Headline::Ring, Headline::OscillatoryGaussian];

    pub fn name(self) -> &'static str {
        match self {
            Headline::Gaussian => "gaussian",
            Headline::Ring => "ring",
            Headline::OscillatoryGaussian => "osc-gaussian",
        }
    }

    pub fn config(self, out: impl Into<PathBuf>) -> RunConfig {
        let (ic, n, t_end) = match self {
            Headline::Gaussian => (InitialCondition::gaussian(10.0), 10_000, 0.04),
            Headline::Ring => (InitialCondition::ring(8.0), 32_000, 0.2),
            Headline::OscillatoryGaussian => (InitialCondition::oscillatory_gaussian(4.0, 10.0), 40_000, 0.1),
        };
        let grid = RadialGrid::new(100.0, n, 5).expect("headline grids are valid");
        let mut config = RunConfig::new(ic, grid, t_end);
        config.outputs.dir = out.into();
        config.label = self.name().to_string();
        config
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Unstable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub status: RunStatus,
    pub final_record: Option<DiagnosticsRecord>,
    pub max_mass_rel_err: f64,
    pub max_energy_rel_err: f64,
    /// Largest `max |u|` over all records.
    pub peak_linf: f64,
    pub records: usize,
    pub snapshots: usize,
    /// Start time of the failing step.
    pub failure_time: Option<f64>,
    pub wall_time: Duration,
}

#[derive(Serialize)]
struct ProfileRow {
    r: f64,
    re: f64,
    im: f64,
    abs: f64,
}

#[derive(Serialize)]
struct SpectrumRow {
    k: f64,
    abs_uhat: f64,
}

struct FileSink<'a> {
    config: &'a RunConfig,
    timeseries: Option<csv::Writer<File>>,
    records: usize,
    snapshots: usize,
    max_mass: f64,
    max_energy: f64,
    peak_linf: f64,
    last: Option<DiagnosticsRecord>,
}

impl<'a> FileSink<'a> {
    fn new(config: &'a RunConfig) -> Result<Self> {
        let timeseries = if config.outputs.timeseries {
            Some(csv::Writer::from_path(config.outputs.dir.join(TIMESERIES_FILE))?)
        } else {
            None
        };
        Ok(Self {
            config,
            timeseries,
            records: 0,
            snapshots: 0,
            max_mass: 0.0,
            max_energy: 0.0,
            peak_linf: 0.0,
            last: None,
        })
    }

    fn snapshot_path(&self, kind: &str, t: f64) -> PathBuf {
        self.config
            .outputs
            .dir
            .join(format!("{kind}_{:03}_t{t:.6}.csv", self.snapshots))
    }
}

impl EvolutionSink for FileSink<'_> {
    fn on_record(&mut self, record: &DiagnosticsRecord) -> Result<()> {
        let mut row = record.clone();
        if !self.config.outputs.besov {
            row.besov = None;
        }
        if let Some(w) = &mut self.timeseries {
            w.serialize(&row)?;
            w.flush()?;
        }
        self.records += 1;
        self.max_mass = self.max_mass.max(row.mass_rel_err);
        self.max_energy = self.max_energy.max(row.energy_rel_err);
        self.peak_linf = self.peak_linf.max(row.linf);
        self.last = Some(row);
        Ok(())
    }

    fn on_snapshot(&mut self, snapshot: &Snapshot<'_>) -> Result<()> {
        let t = snapshot.field.t();
        if self.config.outputs.profiles {
            let mut w = csv::Writer::from_path(self.snapshot_path("profile", t))?;
            for (r, z) in snapshot.field.grid().nodes().zip(snapshot.field.u()) {
                w.serialize(ProfileRow {
                    r,
                    re: z.re,
                    im: z.im,
                    abs: z.norm(),
                })?;
            }
            w.flush()?;
        }
        if let (true, Some(spectrum)) = (self.config.outputs.spectra, snapshot.spectrum) {
            let mut w = csv::Writer::from_path(self.snapshot_path("spectrum", t))?;
            for (j, z) in spectrum.uhat.iter().enumerate() {
                w.serialize(SpectrumRow {
                    k: spectrum.k(j),
                    abs_uhat: z.norm(),
                })?;
            }
            w.flush()?;
        }
        self.snapshots += 1;
        Ok(())
    }
}

fn mode_name(mode: EvolutionMode) -> &'static str {
    match mode {
        EvolutionMode::Linear => "linear",
        EvolutionMode::Nonlinear { .. } => "nonlinear",
    }
}

fn convention_name(c: EnergyConvention) -> &'static str {
    match c {
        EnergyConvention::Discrete => "discrete",
        EnergyConvention::Continuum => "continuum",
    }
}

fn measure_name(m: BesovMeasure) -> &'static str {
    match m {
        BesovMeasure::Linear => "linear",
        BesovMeasure::Radial => "radial",
    }
}

/// `key = value` lines: config echo, outcome, final norms, drifts, timing.
fn summary_text(config: &RunConfig, summary: &RunSummary) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(s, "{k} = {v}");
    };
    // Debug formatting round-trips and switches to exponent notation.
    let num = |x: f64| format!("{x:?}");
    kv("label", &config.label);
    kv("ic", &config.ic.family.name());
    kv("amplitude", &num(config.ic.amplitude));
    kv("alpha", &num(config.ic.alpha));
    kv("rmax", &num(config.grid.r_max()));
    kv("n", &config.grid.n());
    kv("dim", &config.grid.dim());
    kv("h", &num(config.grid.h()));
    kv("mode", &mode_name(config.mode));
    if let EvolutionMode::Nonlinear { p } = config.mode {
        kv("p", &p);
    }
    kv("sigma", &num(config.control.sigma));
    kv("dt", &num(choose_dt(&config.grid, &config.control)));
    kv("tmax", &num(config.control.t_end));
    kv("record_interval", &num(config.control.record_interval));
    kv("snapshot_count", &config.control.snapshot_times.len());
    kv("energy_convention", &convention_name(config.energy_convention));
    kv("besov_measure", &measure_name(config.besov_measure));

    let status = match summary.status {
        RunStatus::Completed => "completed",
        RunStatus::Unstable => "unstable",
    };
    kv("status", &status);
    if let Some(t) = summary.failure_time {
        kv("failure_time", &num(t));
    }
    kv("records", &summary.records);
    kv("snapshots", &summary.snapshots);
    if let Some(r) = &summary.final_record {
        kv("final_t", &num(r.t));
        kv("final_linf", &num(r.linf));
        kv("final_l6", &num(r.l6));
        kv("final_l14", &num(r.l14));
        kv("final_h2", &num(r.h2));
        kv("final_mass", &num(r.mass));
        kv("final_energy", &num(r.energy));
        if let Some(b) = r.besov {
            kv("final_besov", &num(b));
        }
    }
    kv("max_mass_rel_err", &num(summary.max_mass_rel_err));
    kv("max_energy_rel_err", &num(summary.max_energy_rel_err));
    kv("peak_linf", &num(summary.peak_linf));
    kv("wall_time_s", &num(summary.wall_time.as_secs_f64()));
    s
}

fn write_summary(dir: &Path, text: &str) -> Result<()> {
    let mut f = File::create(dir.join(SUMMARY_FILE))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Evolves `config` and writes the timeseries, snapshot CSVs and summary
/// into `config.outputs.dir`. On instability the files written so far are
/// kept, the summary records the failure time, and the error is returned.
pub fn run_experiment(config: &RunConfig) -> Result<RunSummary> {
    let start = Instant::now();
    config.validate()?;
    ensure_writable(&config.outputs.dir)?;
    fs::create_dir_all(&config.outputs.dir)?;

    let field = init_field(&config.grid, &config.ic)?;
    let options = EvolveOptions {
        energy_convention: config.energy_convention,
        besov_measure: config.besov_measure,
        spectra: config.outputs.needs_transform(),
    };
    let mut sink = FileSink::new(config)?;
    let outcome = evolve(field, &config.control, config.mode, &options, &mut sink);

    let (status, failure_time) = match &outcome {
        Ok(_) => (RunStatus::Completed, None),
        Err(Error::Instability { t, .. }) => (RunStatus::Unstable, Some(*t)),
        Err(_) => (RunStatus::Completed, None),
    };
    let summary = RunSummary {
        status,
        final_record: sink.last.clone(),
        max_mass_rel_err: sink.max_mass,
        max_energy_rel_err: sink.max_energy,
        peak_linf: sink.peak_linf,
        records: sink.records,
        snapshots: sink.snapshots,
        failure_time,
        wall_time: start.elapsed(),
    };
    match outcome {
        Ok(_) => {
            write_summary(&config.outputs.dir, &summary_text(config, &summary))?;
            Ok(summary)
        }
        Err(err @ Error::Instability { .. }) => {
            write_summary(&config.outputs.dir, &summary_text(config, &summary))?;
            Err(err)
        }
        Err(err) => Err(err),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::StepControl;

    fn small(ic: InitialCondition, dir: &Path) -> RunConfig {
        let grid = RadialGrid::new(8.0, 160, 5).unwrap();
        let mut c = RunConfig::new(ic, grid, 2e-3);
        c.control.record_interval = 2e-4;
        c.control = c.control.clone().with_even_snapshots(3);
        c.outputs.dir = dir.to_path_buf();
        c
    }

    fn read_rows(dir: &Path) -> Vec<csv::StringRecord> {
        let mut r = csv::Reader::from_path(dir.join(TIMESERIES_FILE)).unwrap();
        r.records().map(|x| x.unwrap()).collect()
    }

    #[test]
    fn timeseries_header_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = small(InitialCondition::gaussian(2.0), dir.path());
        let summary = run_experiment(&c).unwrap();
        assert_eq!(summary.status, RunStatus::Completed);
        assert_eq!(summary.records, 11);
        assert_eq!(summary.snapshots, 3);

        let text = fs::read_to_string(dir.path().join(TIMESERIES_FILE)).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "t,linf,l6,l14,h2,mass,energy,mass_rel_err,energy_rel_err,besov"
        );
        let rows = read_rows(dir.path());
        assert_eq!(rows.len(), 11);
        // Besov only at the three snapshot times.
        let filled: Vec<bool> = rows.iter().map(|r| !r[9].is_empty()).collect();
        assert_eq!(filled.iter().filter(|b| **b).count(), 3);
        assert!(filled[0] && filled[5] && filled[10]);

        let mut profiles = 0;
        let mut spectra = 0;
        for entry in fs::read_dir(dir.path()).unwrap() {
            let name = entry.unwrap().file_name().into_string().unwrap();
            let path = dir.path().join(&name);
            let header = fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
            if name.starts_with("profile_") {
                profiles += 1;
                assert_eq!(header, "r,re,im,abs");
            } else if name.starts_with("spectrum_") {
                spectra += 1;
                assert_eq!(header, "k,abs_uhat");
            }
        }
        assert_eq!((profiles, spectra), (3, 3));

        let summary_text = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        for key in [
            "ic = gaussian",
            "n = 160",
            "status = completed",
            "sigma = 0.1",
            "wall_time_s = ",
        ] {
            assert!(summary_text.contains(key), "missing {key}");
        }
    }

    #[test]
    fn zero_amplitude_gives_zero_columns() {
        let dir = tempfile::tempdir().unwrap();
        let c = small(InitialCondition::gaussian(0.0), dir.path());
        run_experiment(&c).unwrap();
        for row in read_rows(dir.path()) {
            for col in 1..9 {
                assert_eq!(row[col].parse::<f64>().unwrap(), 0.0, "column {col}");
            }
            if !row[9].is_empty() {
                assert_eq!(row[9].parse::<f64>().unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn rerun_reproduces_outputs() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_experiment(&small(InitialCondition::ring(3.0), a.path())).unwrap();
        run_experiment(&small(InitialCondition::ring(3.0), b.path())).unwrap();
        let mut names: Vec<_> = fs::read_dir(a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        assert!(names.len() >= 8);
        for name in names {
            let x = fs::read_to_string(a.path().join(&name)).unwrap();
            let y = fs::read_to_string(b.path().join(&name)).unwrap();
            if name == SUMMARY_FILE {
                let strip = |s: &str| {
                    s.lines()
                        .filter(|l| !l.starts_with("wall_time_s"))
                        .collect::<Vec<_>>()
                        .join("\n")
                };
                assert_eq!(strip(&x), strip(&y));
            } else {
                assert_eq!(x, y, "{name:?}");
            }
        }
    }

    #[test]
    fn toggles_suppress_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small(InitialCondition::gaussian(1.0), dir.path());
        c.outputs.profiles = false;
        c.outputs.spectra = false;
        c.outputs.besov = false;
        run_experiment(&c).unwrap();
        let names: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names.len(), 2, "{names:?}");
        assert!(read_rows(dir.path()).iter().all(|r| r[9].is_empty()));
    }

    #[test]
    fn instability_keeps_partial_output() {
        let dir = tempfile::tempdir().unwrap();
        // Nonlinear stiffness |u|^4 dt far outside the RK4 stability region.
        let mut c = small(InitialCondition::gaussian(10.0), dir.path());
        c.control = StepControl {
            sigma: 1.0,
            t_end: 0.5,
            record_interval: 1e-3,
            snapshot_times: vec![],
        };
        let err = run_experiment(&c).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let text = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        assert!(text.contains("status = unstable"));
        assert!(text.contains("failure_time = "));
        assert!(!read_rows(dir.path()).is_empty());
    }
}
