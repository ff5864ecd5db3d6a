//! Classical RK4 time stepping with `Δt = σ h²` and an output schedule.

use multiversion::multiversion;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldState, RadialGrid};
use crate::observables::{DiagnosticsRecord, DiagnosticsTracker, EnergyConvention};
use crate::operator::{int_pow, EvolutionMode, RadialLaplacian};
use crate::spectral::{besov_norm_with, transform, BesovEstimate, BesovMeasure, Spectrum};

/// Default step factor; RK4 with the five-point stencil is stable up to
/// roughly `σ = 0.5`.
pub const DEFAULT_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    /// `Δt = sigma * h^2`
    pub sigma: f64,
    pub t_end: f64,
    pub record_interval: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

impl StepControl {
    /// Record every `t_end / 400`, no snapshots.
    pub fn new(t_end: f64) -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            t_end,
            record_interval: t_end / 400.0,
            snapshot_times: Vec::new(),
        }
    }

    /// `count` evenly spaced snapshot times on `[0, t_end]`, endpoints included.
    pub fn with_even_snapshots(mut self, count: usize) -> Self {
        self.snapshot_times = even_times(self.t_end, count);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(Error::config(
                "sigma",
                format!("must lie in (0, 1], got {}", self.sigma),
            ));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::config("t_end", format!("must be positive, got {}", self.t_end)));
        }
        if !(self.record_interval.is_finite() && self.record_interval > 0.0) {
            return Err(Error::config(
                "record_interval",
                format!("must be positive, got {}", self.record_interval),
            ));
        }
        if let Some(bad) = self.snapshot_times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::config("snapshot_times", format!("invalid snapshot time {bad}")));
        }
        Ok(())
    }
}

pub fn even_times(t_end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![t_end],
        _ => (0..count).map(|i| t_end * i as f64 / (count - 1) as f64).collect(),
    }
}

pub fn choose_dt(grid: &RadialGrid, control: &StepControl) -> f64 {
    control.sigma * grid.h() * grid.h()
}

/// Real and imaginary parts stored as separate planes.
#[derive(Debug, Clone)]
struct Planes {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Planes {
    fn zeros(len: usize) -> Self {
        Self {
            re: vec![0.0; len],
            im: vec![0.0; len],
        }
    }
}

/// RK4 stepper with reusable stage buffers for one grid and mode.
///
/// The state lives in split real/imaginary planes between
/// [`load`](Self::load) and [`store`](Self::store) so the stencil loops
/// vectorize.
#[derive(Debug, Clone)]
pub struct Rk4Stepper {
    laplacian: RadialLaplacian,
    mode: EvolutionMode,
    t: f64,
    u: Planes,
    acc: Planes,
    stage_a: Planes,
    stage_b: Planes,
}

impl Rk4Stepper {
    pub fn new(grid: &RadialGrid, mode: EvolutionMode) -> Self {
        let len = grid.len();
        Self {
            laplacian: RadialLaplacian::new(grid),
            mode,
            t: 0.0,
            u: Planes::zeros(len),
            acc: Planes::zeros(len),
            stage_a: Planes::zeros(len),
            stage_b: Planes::zeros(len),
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn load(&mut self, field: &FieldState) {
        for ((r, i), z) in self.u.re.iter_mut().zip(self.u.im.iter_mut()).zip(field.u()) {
            *r = z.re;
            *i = z.im;
        }
        self.t = field.t();
    }

    /// Copies the current state into `field`, including its time.
    pub fn store(&self, field: &mut FieldState) {
        for (z, (&r, &i)) in field.samples_mut().iter_mut().zip(self.u.re.iter().zip(&self.u.im)) {
            *z = Complex64::new(r, i);
        }
        field.set_time(self.t);
    }

    /// Overrides the clock, used to land exactly on event times.
    pub fn set_time(&mut self, t: f64) {
        self.t = t;
    }

    fn max_abs(&self) -> f64 {
        self.u
            .re
            .iter()
            .zip(&self.u.im)
            .map(|(r, i)| r.hypot(*i))
            .fold(0.0, f64::max)
    }

    /// Advances the loaded state by `dt`. On a non-finite result the state
    /// is left at its pre-step value.
    pub fn advance(&mut self, dt: f64) -> Result<()> {
        let finite = rk4_planes(
            &self.laplacian,
            self.mode,
            dt,
            &self.u,
            &mut self.acc,
            &mut self.stage_a,
            &mut self.stage_b,
        );
        if !finite {
            return Err(Error::Instability {
                t: self.t,
                max_abs: self.max_abs(),
                last_record: None,
            });
        }
        std::mem::swap(&mut self.u, &mut self.stage_b);
        self.t += dt;
        Ok(())
    }

    /// Advances `field` by `dt` in place.
    pub fn step(&mut self, field: &mut FieldState, dt: f64) -> Result<()> {
        self.load(field);
        self.advance(dt)?;
        self.store(field);
        Ok(())
    }
}

/// RK4 stage kinds: how the slope `k` at a node updates the accumulator and
/// the next stage input.
const STAGE_FIRST: u8 = 0;
const STAGE_HALF: u8 = 1;
const STAGE_FULL: u8 = 2;
const STAGE_FINAL: u8 = 3;

/// Nonlinearity exponent `(p-1)/2` as a const parameter: `0` is linear
/// mode, `RUNTIME_POWER` defers to the runtime value `e`.
const RUNTIME_POWER: u32 = u32::MAX;

/// Slope `f(U)_j` from the Laplacian of both planes at node `j`.
#[inline(always)]
fn slope<const E: u32>(e: u32, lap_re: f64, lap_im: f64, re: f64, im: f64) -> (f64, f64) {
    let g = match E {
        0 => return (-lap_im, lap_re),
        RUNTIME_POWER => int_pow(re * re + im * im, e),
        _ => int_pow(re * re + im * im, E),
    };
    (-(lap_im - g * im), lap_re - g * re)
}

/// Stage update at one node. Returns `false` for a non-finite final value.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn update<const S: u8>(
    dt: f64,
    k: (f64, f64),
    u: (f64, f64),
    acc_re: &mut f64,
    acc_im: &mut f64,
    dst_re: &mut f64,
    dst_im: &mut f64,
) -> bool {
    let (kr, ki) = k;
    match S {
        STAGE_FIRST => {
            *acc_re = kr;
            *acc_im = ki;
            *dst_re = u.0 + 0.5 * dt * kr;
            *dst_im = u.1 + 0.5 * dt * ki;
        }
        STAGE_HALF => {
            *acc_re += 2.0 * kr;
            *acc_im += 2.0 * ki;
            *dst_re = u.0 + 0.5 * dt * kr;
            *dst_im = u.1 + 0.5 * dt * ki;
        }
        STAGE_FULL => {
            *acc_re += 2.0 * kr;
            *acc_im += 2.0 * ki;
            *dst_re = u.0 + dt * kr;
            *dst_im = u.1 + dt * ki;
        }
        _ => {
            *dst_re = u.0 + dt / 6.0 * (*acc_re + kr);
            *dst_im = u.1 + dt / 6.0 * (*acc_im + ki);
            return dst_re.is_finite() & dst_im.is_finite();
        }
    }
    true
}

/// One fused pass: evaluates `k = f(src)` node by node and applies stage `S`.
#[inline(always)]
fn stage<const S: u8, const E: u32>(
    laplacian: &RadialLaplacian,
    e: u32,
    dt: f64,
    src: &Planes,
    u: &Planes,
    acc: &mut Planes,
    dst: &mut Planes,
) -> bool {
    let (c2, c0, c1) = laplacian.coefficients();
    let n = src.re.len() - 1;
    let (sr, si) = (&src.re[..], &src.im[..]);
    // Differences against the centre value first: they are nearly exact,
    // which trims the rounding noise that focuses towards r = 0.
    let stencil = |v: [f64; 5], c1j: f64| {
        let second = 16.0 * ((v[1] - v[2]) + (v[3] - v[2])) - ((v[0] - v[2]) + (v[4] - v[2]));
        let first = (v[0] - v[4]) + 8.0 * (v[3] - v[1]);
        second * c2 + first * c1j
    };
    let mut finite = true;
    let edge = |j: usize, lap_re: f64, lap_im: f64, acc: &mut Planes, dst: &mut Planes| {
        let k = slope::<E>(e, lap_re, lap_im, sr[j], si[j]);
        let (mut ar, mut ai) = (acc.re[j], acc.im[j]);
        let (mut dr, mut di) = (0.0, 0.0);
        let ok = update::<S>(dt, k, (u.re[j], u.im[j]), &mut ar, &mut ai, &mut dr, &mut di);
        (acc.re[j], acc.im[j], dst.re[j], dst.im[j]) = (ar, ai, dr, di);
        ok
    };

    // Origin, first node and last interior node use ghost values.
    finite &= edge(
        0,
        (32.0 * (sr[1] - sr[0]) - 2.0 * (sr[2] - sr[0])) * c0,
        (32.0 * (si[1] - si[0]) - 2.0 * (si[2] - si[0])) * c0,
        acc,
        dst,
    );
    finite &= edge(
        1,
        stencil([sr[1], sr[0], sr[1], sr[2], sr[3]], c1[1]),
        stencil([si[1], si[0], si[1], si[2], si[3]], c1[1]),
        acc,
        dst,
    );
    finite &= edge(
        n - 1,
        stencil([sr[n - 3], sr[n - 2], sr[n - 1], sr[n], 0.0], c1[n - 1]),
        stencil([si[n - 3], si[n - 2], si[n - 1], si[n], 0.0], c1[n - 1]),
        acc,
        dst,
    );
    // The wall value stays pinned at zero.
    dst.re[n] = 0.0;
    dst.im[n] = 0.0;

    let m = n - 3;
    let (ra, rb, rc, rd, re) = (&sr[0..m], &sr[1..m + 1], &sr[2..m + 2], &sr[3..m + 3], &sr[4..m + 4]);
    let (ia, ib, ic, id, ie) = (&si[0..m], &si[1..m + 1], &si[2..m + 2], &si[3..m + 3], &si[4..m + 4]);
    let c1 = &c1[2..m + 2];
    let (ur, ui) = (&u.re[2..m + 2], &u.im[2..m + 2]);
    let (ar, ai) = (&mut acc.re[2..m + 2], &mut acc.im[2..m + 2]);
    let (dr, di) = (&mut dst.re[2..m + 2], &mut dst.im[2..m + 2]);
    for i in 0..m {
        let lap_re = stencil([ra[i], rb[i], rc[i], rd[i], re[i]], c1[i]);
        let lap_im = stencil([ia[i], ib[i], ic[i], id[i], ie[i]], c1[i]);
        let k = slope::<E>(e, lap_re, lap_im, rc[i], ic[i]);
        finite &= update::<S>(dt, k, (ur[i], ui[i]), &mut ar[i], &mut ai[i], &mut dr[i], &mut di[i]);
    }
    finite
}

/// One RK4 step from `u` into `stage_b`, using `stage_a` as scratch.
/// Returns whether the result is finite.
#[multiversion(targets("x86_64+avx2+fma"))]
fn rk4_planes(
    laplacian: &RadialLaplacian,
    mode: EvolutionMode,
    dt: f64,
    u: &Planes,
    acc: &mut Planes,
    stage_a: &mut Planes,
    stage_b: &mut Planes,
) -> bool {
    #[inline(always)]
    fn run<const E: u32>(
        laplacian: &RadialLaplacian,
        e: u32,
        dt: f64,
        u: &Planes,
        acc: &mut Planes,
        stage_a: &mut Planes,
        stage_b: &mut Planes,
    ) -> bool {
        stage::<STAGE_FIRST, E>(laplacian, e, dt, u, u, acc, stage_a);
        stage::<STAGE_HALF, E>(laplacian, e, dt, stage_a, u, acc, stage_b);
        stage::<STAGE_FULL, E>(laplacian, e, dt, stage_b, u, acc, stage_a);
        stage::<STAGE_FINAL, E>(laplacian, e, dt, stage_a, u, acc, stage_b)
    }
    let e = match mode {
        EvolutionMode::Linear => 0,
        EvolutionMode::Nonlinear { p } => (p - 1) / 2,
    };
    match e {
        0 => run::<0>(laplacian, e, dt, u, acc, stage_a, stage_b),
        1 => run::<1>(laplacian, e, dt, u, acc, stage_a, stage_b),
        2 => run::<2>(laplacian, e, dt, u, acc, stage_a, stage_b),
        3 => run::<3>(laplacian, e, dt, u, acc, stage_a, stage_b),
        _ => run::<RUNTIME_POWER>(laplacian, e, dt, u, acc, stage_a, stage_b),
    }
}

/// One RK4 step returning a new state.
pub fn rk4_step(field: &FieldState, dt: f64, mode: EvolutionMode) -> Result<FieldState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::config("dt", format!("must be positive, got {dt}")));
    }
    let mut next = field.clone();
    Rk4Stepper::new(field.grid(), mode).step(&mut next, dt)?;
    Ok(next)
}

/// Field plus its transform at a snapshot time.
#[derive(Debug)]
pub struct Snapshot<'a> {
    pub field: &'a FieldState,
    pub spectrum: Option<&'a Spectrum>,
    pub besov: Option<&'a BesovEstimate>,
}

/// Output hooks driven by [`evolve`].
pub trait EvolutionSink {
    fn on_record(&mut self, _record: &DiagnosticsRecord) -> Result<()> {
        Ok(())
    }

    fn on_snapshot(&mut self, _snapshot: &Snapshot<'_>) -> Result<()> {
        Ok(())
    }
}

/// Sink that keeps everything in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub records: Vec<DiagnosticsRecord>,
    pub fields: Vec<FieldState>,
    pub spectra: Vec<Spectrum>,
}

impl EvolutionSink for MemorySink {
    fn on_record(&mut self, record: &DiagnosticsRecord) -> Result<()> {
        self.records.push(record.clone());
        Ok(())
    }

    fn on_snapshot(&mut self, snapshot: &Snapshot<'_>) -> Result<()> {
        self.fields.push(snapshot.field.clone());
        if let Some(s) = snapshot.spectrum {
            self.spectra.push(s.clone());
        }
        Ok(())
    }
}

impl EvolutionSink for () {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub energy_convention: EnergyConvention,
    pub besov_measure: BesovMeasure,
    /// Transform the field at snapshot times.
    pub spectra: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            energy_convention: EnergyConvention::Discrete,
            besov_measure: BesovMeasure::Linear,
            spectra: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    t: f64,
    record: bool,
    snapshot: bool,
}

/// Merged record/snapshot schedule on `[0, t_end]`; `t_end` always records.
fn schedule(control: &StepControl, tol: f64) -> Vec<Event> {
    let mut events: Vec<Event> = Vec::new();
    let mut m = 0u64;
    loop {
        let t = m as f64 * control.record_interval;
        if t > control.t_end + tol {
            break;
        }
        events.push(Event {
            t: t.min(control.t_end),
            record: true,
            snapshot: false,
        });
        m += 1;
    }
    let mut push = |t: f64, record: bool, snapshot: bool| {
        if let Some(e) = events.iter_mut().find(|e| (e.t - t).abs() <= tol) {
            e.record |= record;
            e.snapshot |= snapshot;
        } else {
            events.push(Event { t, record, snapshot });
        }
    };
    push(control.t_end, true, false);
    for &s in &control.snapshot_times {
        if s <= control.t_end + tol {
            push(s.min(control.t_end), false, true);
        }
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    events
}

/// Advances `field` to `control.t_end`, emitting a diagnostics row at every
/// record time and a snapshot (with spectrum and Besov estimate) at every
/// snapshot time. Steps are shortened to land exactly on event times.
pub fn evolve(
    field: FieldState,
    control: &StepControl,
    mode: EvolutionMode,
    options: &EvolveOptions,
    sink: &mut dyn EvolutionSink,
) -> Result<FieldState> {
    control.validate()?;
    let grid = *field.grid();
    let dt = choose_dt(&grid, control);
    let tol = 1e-9 * dt;
    let t0 = field.t();
    let mut field = field;
    let mut stepper = Rk4Stepper::new(&grid, mode);
    let mut tracker = DiagnosticsTracker::new(&grid, mode, options.energy_convention);
    let mut last: Option<DiagnosticsRecord> = None;

    stepper.load(&field);
    for event in schedule(control, tol) {
        let target = t0 + event.t;
        loop {
            let remaining = target - stepper.t();
            if remaining <= tol {
                break;
            }
            let lands = remaining <= dt * (1.0 + 1e-9);
            let h = if lands { remaining } else { dt };
            if let Err(mut err) = stepper.advance(h) {
                if let Error::Instability { last_record, .. } = &mut err {
                    *last_record = last.take().map(Box::new);
                }
                return Err(err);
            }
            if lands {
                stepper.set_time(target);
            }
        }
        if !(event.record || event.snapshot) {
            continue;
        }
        stepper.store(&mut field);

        let (spectrum, besov) = if event.snapshot && options.spectra {
            let s = transform(&field)?;
            let b = besov_norm_with(&s, options.besov_measure);
            (Some(s), Some(b))
        } else {
            (None, None)
        };
        if event.record || event.snapshot {
            let mut rec = tracker.record(&field);
            rec.besov = besov.as_ref().map(|b| b.value);
            sink.on_record(&rec)?;
            last = Some(rec);
        }
        if event.snapshot {
            sink.on_snapshot(&Snapshot {
                field: &field,
                spectrum: spectrum.as_ref(),
                besov: besov.as_ref(),
            })?;
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, init_field, InitialCondition};
    use approx::assert_relative_eq;

    #[test]
    fn dt_is_sigma_h_squared() {
        let g = build_grid(100.0, 10_000, 5).unwrap();
        let mut c = StepControl::new(1.0);
        assert_relative_eq!(choose_dt(&g, &c), 1e-5, max_relative = 1e-12);
        c.sigma = 1.0;
        assert_relative_eq!(choose_dt(&g, &c), 1e-4, max_relative = 1e-12);
        let g = build_grid(100.0, 32_000, 5).unwrap();
        c.sigma = 0.1;
        assert_relative_eq!(choose_dt(&g, &c), 9.765625e-7, max_relative = 1e-12);
    }

    /// Textbook RK4 on complex samples using the unfused right-hand side.
    fn reference_step(field: &FieldState, dt: f64, mode: EvolutionMode) -> Vec<Complex64> {
        let op = crate::operator::NlsOperator::new(field.grid(), mode);
        let u = field.u();
        let axpy = |a: f64, k: &[Complex64]| -> Vec<Complex64> { u.iter().zip(k).map(|(x, y)| x + y * a).collect() };
        let f = |v: &[Complex64]| {
            let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
            op.rhs_into(v, &mut out);
            out
        };
        let k1 = f(u);
        let k2 = f(&axpy(0.5 * dt, &k1));
        let k3 = f(&axpy(0.5 * dt, &k2));
        let k4 = f(&axpy(dt, &k3));
        (0..u.len())
            .map(|j| u[j] + (k1[j] + k2[j] * 2.0 + k3[j] * 2.0 + k4[j]) * (dt / 6.0))
            .collect()
    }

    #[test]
    fn fused_step_matches_reference_rk4() {
        let grid = build_grid(6.0, 120, 5).unwrap();
        let ic = InitialCondition::oscillatory_gaussian(1.5, 2.0);
        let field = init_field(&grid, &ic).unwrap();
        for mode in [
            EvolutionMode::Linear,
            EvolutionMode::default(),
            EvolutionMode::nonlinear(3).unwrap(),
            EvolutionMode::nonlinear(11).unwrap(),
        ] {
            let next = rk4_step(&field, 1e-4, mode).unwrap();
            let expected = reference_step(&field, 1e-4, mode);
            for (a, b) in next.u().iter().zip(&expected) {
                assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()), "{mode:?}");
            }
        }
    }

    #[test]
    fn zero_field_is_fixed_point() {
        let g = build_grid(1.0, 16, 5).unwrap();
        let z = FieldState::zeros(g);
        let next = rk4_step(&z, 1e-3, EvolutionMode::default()).unwrap();
        assert_eq!(next.t(), 1e-3);
        assert!(next.u().iter().all(|v| v.norm() == 0.0));
        assert!(rk4_step(&z, 0.0, EvolutionMode::default()).is_err());
    }

    #[test]
    fn control_validation() {
        let mut c = StepControl::new(1.0);
        assert!(c.validate().is_ok());
        c.sigma = 1.5;
        assert!(matches!(c.validate(), Err(Error::Config { field: "sigma", .. })));
        c.sigma = 0.1;
        c.record_interval = 0.0;
        assert!(matches!(
            c.validate(),
            Err(Error::Config {
                field: "record_interval",
                ..
            })
        ));
        let c = StepControl::new(-1.0);
        assert!(matches!(c.validate(), Err(Error::Config { field: "t_end", .. })));
    }

    #[test]
    fn schedule_emits_three_rows() {
        let g = build_grid(10.0, 100, 5).unwrap();
        let f = init_field(&g, &InitialCondition::gaussian(1.0)).unwrap();
        let mut c = StepControl::new(1.0);
        let dt = choose_dt(&g, &c);
        c.t_end = 10.0 * dt;
        c.record_interval = 5.0 * dt;
        let mut sink = MemorySink::default();
        let out = evolve(f, &c, EvolutionMode::default(), &EvolveOptions::default(), &mut sink).unwrap();
        assert_eq!(sink.records.len(), 3);
        assert_eq!(sink.records[0].t, 0.0);
        assert_relative_eq!(sink.records[1].t, 5.0 * dt, max_relative = 1e-12);
        assert_eq!(out.t(), c.t_end);
    }

    #[test]
    fn final_step_lands_on_horizon_and_snapshots() {
        let g = build_grid(10.0, 100, 5).unwrap();
        let f = init_field(&g, &InitialCondition::gaussian(1.0)).unwrap();
        let mut c = StepControl::new(0.0123);
        c.record_interval = 0.005;
        c.snapshot_times = vec![0.0, 0.0071, 0.0123];
        let mut sink = MemorySink::default();
        let out = evolve(f, &c, EvolutionMode::default(), &EvolveOptions::default(), &mut sink).unwrap();
        assert_eq!(out.t(), 0.0123);
        let times: Vec<f64> = sink.records.iter().map(|r| r.t).collect();
        assert_eq!(times.len(), 5); // 0, .005, .0071, .01, .0123
        assert_eq!(times[2], 0.0071);
        assert_eq!(times[4], 0.0123);
        assert_eq!(sink.fields.len(), 3);
        assert_eq!(sink.spectra.len(), 3);
        assert_eq!(sink.fields[1].t(), 0.0071);
        assert!(sink.records[2].besov.is_some());
        assert!(sink.records[1].besov.is_none());
    }

    #[test]
    fn evolution_is_deterministic() {
        let g = build_grid(10.0, 200, 5).unwrap();
        let ic = InitialCondition::ring(3.0);
        let c = StepControl::new(0.01).with_even_snapshots(3);
        let run = || {
            let mut sink = MemorySink::default();
            evolve(
                init_field(&g, &ic).unwrap(),
                &c,
                EvolutionMode::default(),
                &EvolveOptions::default(),
                &mut sink,
            )
            .unwrap();
            sink.records
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn instability_is_reported_with_last_row() {
        // sigma = 1 is far outside the RK4 stability region of the stencil
        let g = build_grid(10.0, 200, 5).unwrap();
        let f = init_field(&g, &InitialCondition::gaussian(10.0)).unwrap();
        let mut c = StepControl::new(0.5);
        c.sigma = 1.0;
        c.record_interval = 1e-3;
        let err = evolve(f, &c, EvolutionMode::default(), &EvolveOptions::default(), &mut ()).unwrap_err();
        match err {
            Error::Instability {
                t,
                max_abs,
                last_record,
            } => {
                assert!(t > 0.0);
                assert!(max_abs.is_finite());
                assert!(last_record.is_some());
            }
            other => panic!("expected instability, got {other:?}"),
        }
    }

    /// Closed-form free evolution of `A e^{-r^2}` in `d` dimensions.
    fn free_gaussian(a: f64, d: u32, t: f64, r: f64) -> Complex64 {
        let z = Complex64::new(1.0, 4.0 * t);
        a * z.powf(-(d as f64) / 2.0) * (-(r * r) / z).exp()
    }

    fn linear_error(n: usize, t_end: f64) -> f64 {
        let g = build_grid(12.0, n, 5).unwrap();
        let f = init_field(&g, &InitialCondition::gaussian(1.0)).unwrap();
        let mut c = StepControl::new(t_end);
        c.record_interval = t_end;
        let out = evolve(f, &c, EvolutionMode::Linear, &EvolveOptions::default(), &mut ()).unwrap();
        (0..g.n())
            .map(|j| (out.u()[j] - free_gaussian(1.0, 5, t_end, g.r(j))).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn linear_mode_tracks_free_propagator() {
        let e1 = linear_error(300, 0.02);
        let e2 = linear_error(600, 0.02);
        assert!(e2 < 1e-5, "error {e2}");
        let ratio = e1 / e2;
        assert!((13.0..19.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn time_step_richardson_pair() {
        // fixed grid, compare to a fine-dt reference: RK4 global error ~ dt^4
        let g = build_grid(8.0, 80, 5).unwrap();
        let f = init_field(&g, &InitialCondition::gaussian(1.0)).unwrap();
        let run = |dt: f64, steps: usize| {
            let mut s = f.clone();
            let mut st = Rk4Stepper::new(&g, EvolutionMode::Linear);
            for _ in 0..steps {
                st.step(&mut s, dt).unwrap();
            }
            s
        };
        let big = 5e-4;
        let reference = run(big / 64.0, 64 * 8);
        let err = |s: &FieldState| {
            s.u()
                .iter()
                .zip(reference.u())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        let e1 = err(&run(big, 8));
        let e2 = err(&run(big / 2.0, 16));
        let ratio = e1 / e2;
        assert!((13.0..19.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn linear_mass_is_conserved() {
        let g = build_grid(20.0, 2000, 5).unwrap();
        let f = init_field(&g, &InitialCondition::oscillatory_gaussian(1.0, 2.0)).unwrap();
        let c = StepControl::new(0.05);
        let mut sink = MemorySink::default();
        evolve(f, &c, EvolutionMode::Linear, &EvolveOptions::default(), &mut sink).unwrap();
        let worst = sink.records.iter().map(|r| r.mass_rel_err).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }
}
