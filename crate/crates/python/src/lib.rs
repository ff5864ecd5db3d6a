//! Python bindings for the radial NLS simulator.
//!
//! Long-running calls (`Field.evolve`, `Field.transform`, `run_experiment`,
//! `convergence_study`, `linear_constancy_check`) release the GIL.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use radial_nls::grid::ProfileTable;
use radial_nls::harness::{self, Headline, RunStatus, RunSummary};
use radial_nls::integrator::MemorySink;
use radial_nls::spectral::besov_norm_with;
use radial_nls::{
    energy, evolve, h2_seminorm, init_field, linf_norm, lp_norm, mass, rk4_step, transform, BesovMeasure,
    DiagnosticsRecord, EnergyConvention, Error, EvolutionMode, EvolveOptions, FieldState, InitialCondition, RadialGrid,
    Spectrum, StepControl,
};

create_exception!(
    radial_nls_py,
    ConfigError,
    PyValueError,
    "Invalid configuration or input."
);
create_exception!(
    radial_nls_py,
    InstabilityError,
    PyRuntimeError,
    "The field went non-finite."
);
create_exception!(
    radial_nls_py,
    SimulationError,
    PyRuntimeError,
    "Any other simulator failure."
);

fn to_py(err: Error) -> PyErr {
    match err.exit_code() {
        2 => ConfigError::new_err(err.to_string()),
        3 => InstabilityError::new_err(err.to_string()),
        _ => SimulationError::new_err(err.to_string()),
    }
}

fn mode_of(p: u32, linear: bool) -> PyResult<EvolutionMode> {
    if linear {
        Ok(EvolutionMode::Linear)
    } else {
        EvolutionMode::nonlinear(p).map_err(to_py)
    }
}

fn measure_of(name: &str) -> PyResult<BesovMeasure> {
    match name {
        "linear" => Ok(BesovMeasure::Linear),
        "radial" => Ok(BesovMeasure::Radial),
        other => Err(ConfigError::new_err(format!(
            "unknown Besov measure `{other}` (expected linear or radial)"
        ))),
    }
}

fn record_dict<'py>(py: Python<'py>, r: &DiagnosticsRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", r.t)?;
    d.set_item("linf", r.linf)?;
    d.set_item("l6", r.l6)?;
    d.set_item("l14", r.l14)?;
    d.set_item("h2", r.h2)?;
    d.set_item("mass", r.mass)?;
    d.set_item("energy", r.energy)?;
    d.set_item("mass_rel_err", r.mass_rel_err)?;
    d.set_item("energy_rel_err", r.energy_rel_err)?;
    d.set_item("besov", r.besov)?;
    Ok(d)
}

/// Uniform radial grid `r_j = j h`, `h = r_max / n`.
#[pyclass(name = "Grid", module = "radial_nls_py", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyGrid(RadialGrid);

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (r_max, n, dim = 5))]
    fn new(r_max: f64, n: usize, dim: u32) -> PyResult<Self> {
        RadialGrid::new(r_max, n, dim).map(Self).map_err(to_py)
    }

    #[getter]
    fn r_max(&self) -> f64 {
        self.0.r_max()
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h()
    }

    #[getter]
    fn dim(&self) -> u32 {
        self.0.dim()
    }

    fn nodes(&self) -> Vec<f64> {
        self.0.nodes().collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Grid(r_max={}, n={}, dim={})", self.0.r_max(), self.0.n(), self.0.dim())
    }
}

/// Complex radial field on a grid at time `t`.
#[pyclass(name = "Field", module = "radial_nls_py", from_py_object)]
#[derive(Clone)]
struct PyField(FieldState);

#[pymethods]
impl PyField {
    /// Field from samples at every node; the last sample must be zero.
    #[new]
    #[pyo3(signature = (grid, values, t = 0.0))]
    fn new(grid: &PyGrid, values: Vec<Complex64>, t: f64) -> PyResult<Self> {
        FieldState::new(grid.0, t, values).map(Self).map_err(to_py)
    }

    /// Samples a named initial condition: `gaussian`, `ring`,
    /// `osc-gaussian`, or `table` (with `table` a CSV path).
    #[staticmethod]
    #[pyo3(signature = (grid, family, amplitude, alpha = 10.0, table = None))]
    fn initial(grid: &PyGrid, family: &str, amplitude: f64, alpha: f64, table: Option<PathBuf>) -> PyResult<Self> {
        let ic = match family {
            "gaussian" => InitialCondition::gaussian(amplitude),
            "ring" => InitialCondition::ring(amplitude),
            "osc-gaussian" => InitialCondition::oscillatory_gaussian(amplitude, alpha),
            "table" => {
                let path = table.ok_or_else(|| ConfigError::new_err("family `table` needs a table path"))?;
                InitialCondition::table(ProfileTable::from_csv(&path).map_err(to_py)?, amplitude)
            }
            other => return Err(to_py(Error::UnknownFamily(other.to_string()))),
        };
        init_field(&grid.0, &ic).map(Self).map_err(to_py)
    }

    #[getter]
    fn t(&self) -> f64 {
        self.0.t()
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(*self.0.grid())
    }

    fn values(&self) -> Vec<Complex64> {
        self.0.u().to_vec()
    }

    fn abs(&self) -> Vec<f64> {
        self.0.u().iter().map(|z| z.norm()).collect()
    }

    fn mass(&self) -> f64 {
        mass(&self.0)
    }

    /// Conserved energy; `continuum=True` selects the non-conserved
    /// `1/(p+1)` potential coefficient.
    #[pyo3(signature = (p = 5, linear = false, continuum = false))]
    fn energy(&self, p: u32, linear: bool, continuum: bool) -> PyResult<f64> {
        let convention = if continuum {
            EnergyConvention::Continuum
        } else {
            EnergyConvention::Discrete
        };
        Ok(energy(&self.0, mode_of(p, linear)?, convention))
    }

    fn lp_norm(&self, p: f64) -> f64 {
        lp_norm(&self.0, p)
    }

    /// `(max |u|, r at the maximum)`
    fn linf(&self) -> (f64, f64) {
        linf_norm(&self.0)
    }

    fn h2(&self) -> f64 {
        h2_seminorm(&self.0)
    }

    /// One RK4 step of size `dt`, returning the new field.
    #[pyo3(signature = (dt, p = 5, linear = false))]
    fn step(&self, dt: f64, p: u32, linear: bool) -> PyResult<Self> {
        rk4_step(&self.0, dt, mode_of(p, linear)?).map(Self).map_err(to_py)
    }

    /// Evolves to `t_end` and returns `(final_field, records)`, one dict per
    /// record time.
    #[pyo3(signature = (t_end, p = 5, linear = false, sigma = 0.1, record_interval = None))]
    fn evolve<'py>(
        &self,
        py: Python<'py>,
        t_end: f64,
        p: u32,
        linear: bool,
        sigma: f64,
        record_interval: Option<f64>,
    ) -> PyResult<(Self, Vec<Bound<'py, PyDict>>)> {
        let mode = mode_of(p, linear)?;
        let control = StepControl {
            sigma,
            record_interval: record_interval.unwrap_or(t_end / 400.0),
            ..StepControl::new(t_end)
        };
        let options = EvolveOptions {
            spectra: false,
            ..EvolveOptions::default()
        };
        let field = self.0.clone();
        let (last, sink) = py
            .detach(move || {
                let mut sink = MemorySink::default();
                evolve(field, &control, mode, &options, &mut sink).map(|last| (last, sink))
            })
            .map_err(to_py)?;
        let records = sink
            .records
            .iter()
            .map(|r| record_dict(py, r))
            .collect::<PyResult<_>>()?;
        Ok((Self(last), records))
    }

    /// Radial Fourier transform on the conjugate grid.
    fn transform(&self, py: Python<'_>) -> PyResult<PySpectrum> {
        let field = self.0.clone();
        py.detach(move || transform(&field)).map(PySpectrum).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let g = self.0.grid();
        format!("Field(t={}, n={}, r_max={})", self.0.t(), g.n(), g.r_max())
    }
}

/// `û(k)` sampled at `k_j = j dk`.
#[pyclass(name = "Spectrum", module = "radial_nls_py", frozen)]
struct PySpectrum(Spectrum);

#[pymethods]
impl PySpectrum {
    #[getter]
    fn t(&self) -> f64 {
        self.0.t
    }

    #[getter]
    fn dk(&self) -> f64 {
        self.0.dk
    }

    #[getter]
    fn k_max(&self) -> f64 {
        self.0.k_max
    }

    fn k(&self) -> Vec<f64> {
        (0..self.0.n()).map(|j| self.0.k(j)).collect()
    }

    fn values(&self) -> Vec<Complex64> {
        self.0.uhat.clone()
    }

    fn abs(&self) -> Vec<f64> {
        self.0.abs()
    }

    /// Dyadic Besov estimate; returns `(value, index of the largest bin)`.
    #[pyo3(signature = (measure = "linear"))]
    fn besov(&self, measure: &str) -> PyResult<(f64, Option<i32>)> {
        let est = besov_norm_with(&self.0, measure_of(measure)?);
        Ok((est.value, est.argmax))
    }

    fn __len__(&self) -> usize {
        self.0.n()
    }
}

/// Full run configuration, built from the same flags as the command line.
#[pyclass(name = "RunConfig", module = "radial_nls_py", from_py_object)]
#[derive(Clone)]
struct PyRunConfig(harness::RunConfig);

#[pymethods]
impl PyRunConfig {
    /// `RunConfig(["--ic", "ring", "--amplitude", "8", ...])`; the output
    /// directory is created and probed for writability.
    #[new]
    fn new(args: Vec<String>) -> PyResult<Self> {
        let argv = std::iter::once("radial-nls".to_string()).chain(args);
        harness::parse_config(argv).map(Self).map_err(to_py)
    }

    /// One of the three reference runs: `gaussian`, `ring`, `osc-gaussian`.
    #[staticmethod]
    fn headline(name: &str, out: PathBuf) -> PyResult<Self> {
        let which = Headline::ALL
            .into_iter()
            .find(|h| h.name() == name)
            .ok_or_else(|| to_py(Error::UnknownFamily(name.to_string())))?;
        Ok(Self(which.config(out)))
    }

    #[getter]
    fn label(&self) -> String {
        self.0.label.clone()
    }

    #[getter]
    fn out(&self) -> PathBuf {
        self.0.outputs.dir.clone()
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.0.control.t_end
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid)
    }

    #[getter]
    fn linear(&self) -> bool {
        self.0.mode.is_linear()
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(label={:?}, ic={}, n={}, r_max={}, t_end={})",
            self.0.label,
            self.0.ic.family.name(),
            self.0.grid.n(),
            self.0.grid.r_max(),
            self.0.control.t_end
        )
    }
}

fn summary_dict<'py>(py: Python<'py>, s: &RunSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let status = match s.status {
        RunStatus::Completed => "completed",
        RunStatus::Unstable => "unstable",
    };
    d.set_item("status", status)?;
    d.set_item("records", s.records)?;
    d.set_item("snapshots", s.snapshots)?;
    d.set_item("max_mass_rel_err", s.max_mass_rel_err)?;
    d.set_item("max_energy_rel_err", s.max_energy_rel_err)?;
    d.set_item("peak_linf", s.peak_linf)?;
    d.set_item("failure_time", s.failure_time)?;
    d.set_item("wall_time", s.wall_time.as_secs_f64())?;
    match &s.final_record {
        Some(r) => d.set_item("final", record_dict(py, r)?)?,
        None => d.set_item("final", py.None())?,
    }
    Ok(d)
}

/// Runs a configuration, writing its CSV and summary files; returns the
/// summary as a dict.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &PyRunConfig) -> PyResult<Bound<'py, PyDict>> {
    let config = config.0.clone();
    let summary = py.detach(move || harness::run_experiment(&config)).map_err(to_py)?;
    summary_dict(py, &summary)
}

/// Runs `config` on each `(n, r_max)` grid and compares `u(0)` and
/// `max |u|` at `t_end` with the finest grid. Returns one dict per row.
#[pyfunction]
fn convergence_study<'py>(
    py: Python<'py>,
    config: &PyRunConfig,
    grids: Vec<(usize, f64)>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let config = config.0.clone();
    let report = py
        .detach(move || harness::convergence_study(&config, &grids))
        .map_err(to_py)?;
    report
        .rows
        .iter()
        .map(|row| {
            let d = PyDict::new(py);
            d.set_item("n", row.n)?;
            d.set_item("r_max", row.r_max)?;
            d.set_item("h", row.h)?;
            d.set_item("value_at_origin", row.value_at_origin)?;
            d.set_item("max_value", row.max_value)?;
            d.set_item("origin_deviation", row.origin_deviation)?;
            d.set_item("max_deviation", row.max_deviation)?;
            Ok(d)
        })
        .collect()
}

/// Least-squares slope of `log y` against `log t` over `t_lo <= t <= t_hi`.
/// Returns `(slope, intercept, residual, points)`.
#[pyfunction]
fn fit_decay_rate(series: Vec<(f64, f64)>, t_lo: f64, t_hi: f64) -> PyResult<(f64, f64, f64, usize)> {
    let fit = harness::fit_decay_rate(&series, (t_lo, t_hi)).map_err(to_py)?;
    Ok((fit.slope, fit.intercept, fit.residual, fit.points))
}

/// Largest change of `|û|` across the snapshots of a linear run, relative
/// to `max |û(0)|`.
#[pyfunction]
fn linear_constancy_check(py: Python<'_>, config: &PyRunConfig) -> PyResult<f64> {
    let config = config.0.clone();
    py.detach(move || harness::linear_constancy_check(&config))
        .map_err(to_py)
}

#[pymodule]
fn radial_nls_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("InstabilityError", py.get_type::<InstabilityError>())?;
    m.add("SimulationError", py.get_type::<SimulationError>())?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_study, m)?)?;
    m.add_function(wrap_pyfunction!(fit_decay_rate, m)?)?;
    m.add_function(wrap_pyfunction!(linear_constancy_check, m)?)?;
    Ok(())
}
