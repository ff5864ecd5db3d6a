//! Multi-run and post-processing studies.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{init_field, RadialGrid};
use crate::integrator::{even_times, evolve, EvolutionSink, EvolveOptions, Snapshot, StepControl};
use crate::observables::DiagnosticsRecord;
use crate::operator::EvolutionMode;
use crate::spectral::transform;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub r_max: f64,
    pub h: f64,
    /// `|u(0, t_end)|`
    pub value_at_origin: f64,
    /// `max_r |u(r, t_end)|`
    pub max_value: f64,
    /// Relative deviations from the reference row.
    pub origin_deviation: f64,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub t_end: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Index of the finest-grid row (smallest `h`, first on ties).
    pub reference: usize,
}

impl ConvergenceReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn relative_deviation(value: f64, reference: f64) -> f64 {
    if value == reference {
        0.0
    } else {
        (value - reference).abs() / reference.abs()
    }
}

/// Evolves `base` on every `(n, r_max)` grid of `matrix` to
/// `base.control.t_end`, concurrently, and compares the origin and peak
/// amplitudes with the finest grid.
pub fn convergence_study(base: &RunConfig, matrix: &[(usize, f64)]) -> Result<ConvergenceReport> {
    if matrix.is_empty() {
        return Err(Error::config("matrix", "must contain at least one (n, r_max) entry"));
    }
    base.validate()?;
    let grids = matrix
        .iter()
        .map(|&(n, r_max)| RadialGrid::new(r_max, n, base.grid.dim()))
        .collect::<Result<Vec<_>>>()?;
    let control = StepControl {
        snapshot_times: Vec::new(),
        record_interval: base.control.t_end,
        ..base.control.clone()
    };
    let options = EvolveOptions {
        spectra: false,
        ..EvolveOptions::default()
    };

    let finals = grids
        .par_iter()
        .map(|grid| {
            let field = init_field(grid, &base.ic)?;
            let last = evolve(field, &control, base.mode, &options, &mut ())?;
            Ok((last.u()[0].norm(), last.max_abs()))
        })
        .collect::<Result<Vec<_>>>()?;

    let reference = (0..grids.len())
        .min_by(|&a, &b| grids[a].h().total_cmp(&grids[b].h()))
        .expect("non-empty");
    let (ref_origin, ref_max) = finals[reference];
    let rows = grids
        .iter()
        .zip(&finals)
        .map(|(g, &(origin, max))| ConvergenceRow {
            n: g.n(),
            r_max: g.r_max(),
            h: g.h(),
            value_at_origin: origin,
            max_value: max,
            origin_deviation: relative_deviation(origin, ref_origin),
            max_deviation: relative_deviation(max, ref_max),
        })
        .collect();
    Ok(ConvergenceReport {
        t_end: control.t_end,
        rows,
        reference,
    })
}

/// Least-squares fit of `log v = slope * log t + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in `log v`.
    pub residual: f64,
    pub points: usize,
}

pub const MIN_FIT_POINTS: usize = 5;

/// Fits a power law to the `(t, value)` pairs with `t_lo <= t <= t_hi`.
pub fn fit_decay_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let (t_lo, t_hi) = window;
    if !(t_lo > 0.0 && t_lo < t_hi) {
        return Err(Error::Fit(format!(
            "window [{t_lo}, {t_hi}] must satisfy 0 < t_lo < t_hi"
        )));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| t >= t_lo && t <= t_hi)
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} points in window, need at least {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    if let Some(&(t, v)) = pts.iter().find(|&&(_, v)| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Fit(format!("value {v} at t = {t} is not positive")));
    }

    let logs: Vec<(f64, f64)> = pts.iter().map(|&(t, v)| (t.ln(), v.ln())).collect();
    let m = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all sample times coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residual = (logs
        .iter()
        .map(|&(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(DecayFit {
        slope,
        intercept,
        residual,
        points: pts.len(),
    })
}

/// Tracks `max_k ||û(t)| - |û(0)||` across snapshots and the peak `|u|`
/// across records.
struct ConstancySink {
    reference: Vec<f64>,
    deviation: f64,
    compared: usize,
    peak_linf: f64,
}

impl EvolutionSink for ConstancySink {
    fn on_record(&mut self, record: &DiagnosticsRecord) -> Result<()> {
        self.peak_linf = self.peak_linf.max(record.linf);
        Ok(())
    }

    fn on_snapshot(&mut self, snapshot: &Snapshot<'_>) -> Result<()> {
        if let Some(s) = snapshot.spectrum {
            for (z, r) in s.uhat.iter().zip(&self.reference) {
                self.deviation = self.deviation.max((z.norm() - r).abs());
            }
            self.compared += 1;
        }
        Ok(())
    }
}

/// Minimum number of transform times in [`linear_constancy_check`].
pub const MIN_CONSTANCY_TIMES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstancyReport {
    /// `max_{t,k} ||û(t,k)| - |û(0,k)|| / max_k |û(0,k)|`
    pub deviation: f64,
    /// Number of transformed snapshots compared with `t = 0`.
    pub transforms: usize,
    /// Largest `max |u|` over the recorded times.
    pub peak_linf: f64,
}

/// Evolves a linear-mode configuration and returns the largest change of
/// `|û|` relative to `max_k |û(0,k)|` over its snapshot times (at least
/// three, evenly spaced if the config has fewer).
pub fn linear_constancy_check(config: &RunConfig) -> Result<f64> {
    Ok(linear_constancy_report(config)?.deviation)
}

/// [`linear_constancy_check`] with the comparison count and peak amplitude.
pub fn linear_constancy_report(config: &RunConfig) -> Result<ConstancyReport> {
    if config.mode != EvolutionMode::Linear {
        return Err(Error::config("mode", "linear_constancy_check needs linear mode"));
    }
    config.validate()?;
    let field = init_field(&config.grid, &config.ic)?;
    let reference: Vec<f64> = transform(&field)?.uhat.iter().map(|z| z.norm()).collect();
    let scale = reference.iter().copied().fold(0.0, f64::max);

    let mut control = config.control.clone();
    if control.snapshot_times.len() < MIN_CONSTANCY_TIMES {
        control.snapshot_times = even_times(control.t_end, MIN_CONSTANCY_TIMES);
    }
    let options = EvolveOptions {
        energy_convention: config.energy_convention,
        besov_measure: config.besov_measure,
        spectra: true,
    };
    let mut sink = ConstancySink {
        reference,
        deviation: 0.0,
        compared: 0,
        peak_linf: 0.0,
    };
    evolve(field, &control, config.mode, &options, &mut sink)?;
    Ok(ConstancyReport {
        deviation: if scale == 0.0 { 0.0 } else { sink.deviation / scale },
        transforms: sink.compared,
        peak_linf: sink.peak_linf,
    })
}
