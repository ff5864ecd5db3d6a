//! Quadrature norms and invariants of radial fields.
//!
//! All integrals run over `[0, r_max]` with weight `r^(d-1)` and no sphere
//! surface constant.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid::{FieldState, RadialGrid};
use crate::operator::{EvolutionMode, RadialLaplacian};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureRule {
    Trapezoid,
    #[default]
    Simpson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Simpson was requested on an odd interval count and trapezoid used instead.
    pub fell_back: bool,
}

/// `∫_0^{r_max} f(r) dr` from nodal samples. Any radial weight is the caller's.
pub fn radial_integral(samples: &[f64], grid: &RadialGrid, rule: QuadratureRule) -> Quadrature {
    assert_eq!(samples.len(), grid.len(), "one sample per node");
    let h = grid.h();
    let n = grid.n();
    let trapezoid = || {
        let inner: f64 = samples[1..n].iter().sum();
        h * (inner + 0.5 * (samples[0] + samples[n]))
    };
    match rule {
        QuadratureRule::Trapezoid => Quadrature {
            value: trapezoid(),
            fell_back: false,
        },
        QuadratureRule::Simpson if n % 2 == 1 => Quadrature {
            value: trapezoid(),
            fell_back: true,
        },
        QuadratureRule::Simpson => {
            let mut odd = 0.0;
            let mut even = 0.0;
            for (j, v) in samples[1..n].iter().enumerate() {
                if j % 2 == 0 {
                    odd += v;
                } else {
                    even += v;
                }
            }
            Quadrature {
                value: h / 3.0 * (samples[0] + samples[n] + 4.0 * odd + 2.0 * even),
                fell_back: false,
            }
        }
    }
}

fn weighted_simpson(grid: &RadialGrid, density: impl Fn(usize) -> f64) -> f64 {
    let e = grid.dim() as i32 - 1;
    let samples: Vec<f64> = (0..grid.len()).map(|j| density(j) * grid.r(j).powi(e)).collect();
    radial_integral(&samples, grid, QuadratureRule::Simpson).value
}

/// `∫ |U|^2 r^(d-1) dr`
pub fn mass(field: &FieldState) -> f64 {
    let u = field.u();
    weighted_simpson(field.grid(), |j| u[j].norm_sqr())
}

/// Potential-term prefactor in the energy density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyConvention {
    /// `|∇u|^2 + 2/(p+1) |u|^{p+1}`; the invariant of the evolution.
    #[default]
    Discrete,
    /// `|∇u|^2 + 1/(p+1) |u|^{p+1}`; not conserved, kept for comparison.
    Continuum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub potential: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

fn energy_parts_with(
    field: &FieldState,
    lap: &[Complex64],
    mode: EvolutionMode,
    convention: EnergyConvention,
) -> EnergyParts {
    let u = field.u();
    // -Re U Δ Re U - Im U Δ Im U
    let kinetic = weighted_simpson(field.grid(), |j| -(u[j].re * lap[j].re + u[j].im * lap[j].im));
    let potential = match mode {
        EvolutionMode::Linear => 0.0,
        EvolutionMode::Nonlinear { p } => {
            let pref = match convention {
                EnergyConvention::Discrete => 2.0 / (p as f64 + 1.0),
                EnergyConvention::Continuum => 1.0 / (p as f64 + 1.0),
            };
            // |u|^{p+1} = (|u|^2)^{(p+1)/2}
            let e = (p as i32 + 1) / 2;
            pref * weighted_simpson(field.grid(), |j| u[j].norm_sqr().powi(e))
        }
    };
    EnergyParts { kinetic, potential }
}

pub fn energy_parts(field: &FieldState, mode: EvolutionMode, convention: EnergyConvention) -> EnergyParts {
    let lap = RadialLaplacian::new(field.grid()).apply(field.u());
    energy_parts_with(field, &lap, mode, convention)
}

/// Energy under the discrete Laplacian. Linear mode drops the potential term.
pub fn energy(field: &FieldState, mode: EvolutionMode, convention: EnergyConvention) -> f64 {
    energy_parts(field, mode, convention).total()
}

/// `(∫ |U|^p r^(d-1) dr)^(1/p)`
pub fn lp_norm(field: &FieldState, p: f64) -> f64 {
    let u = field.u();
    let integral = weighted_simpson(field.grid(), |j| u[j].norm().powf(p));
    integral.max(0.0).powf(1.0 / p)
}

/// Grid maximum of `|U|` and the radius where it occurs (first on ties).
pub fn linf_norm(field: &FieldState) -> (f64, f64) {
    let (j, v) = field
        .u()
        .iter()
        .map(|z| z.norm())
        .enumerate()
        .fold((0, 0.0), |best, (j, v)| if v > best.1 { (j, v) } else { best });
    (v, field.grid().r(j))
}

fn h2_from_laplacian(grid: &RadialGrid, lap: &[Complex64]) -> f64 {
    weighted_simpson(grid, |j| lap[j].norm_sqr()).max(0.0).sqrt()
}

/// `‖Δ_disc U‖_{L²}`
pub fn h2_seminorm(field: &FieldState) -> f64 {
    let lap = RadialLaplacian::new(field.grid()).apply(field.u());
    h2_from_laplacian(field.grid(), &lap)
}

/// One time-stamped row of tracked quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub linf: f64,
    pub l6: f64,
    pub l14: f64,
    pub h2: f64,
    pub mass: f64,
    pub energy: f64,
    pub mass_rel_err: f64,
    pub energy_rel_err: f64,
    pub besov: Option<f64>,
}

fn rel_err(q: f64, q0: f64) -> f64 {
    if q0 == 0.0 {
        if q == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (q - q0).abs() / q0.abs()
    }
}

/// Computes [`DiagnosticsRecord`]s for one grid, measuring drift against the
/// first field it sees.
#[derive(Debug, Clone)]
pub struct DiagnosticsTracker {
    laplacian: RadialLaplacian,
    mode: EvolutionMode,
    convention: EnergyConvention,
    reference: Option<(f64, f64)>,
    lap: Vec<Complex64>,
}

impl DiagnosticsTracker {
    pub fn new(grid: &RadialGrid, mode: EvolutionMode, convention: EnergyConvention) -> Self {
        Self {
            laplacian: RadialLaplacian::new(grid),
            mode,
            convention,
            reference: None,
            lap: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Initial `(mass, energy)`, once set.
    pub fn reference(&self) -> Option<(f64, f64)> {
        self.reference
    }

    pub fn record(&mut self, field: &FieldState) -> DiagnosticsRecord {
        self.laplacian.apply_into(field.u(), &mut self.lap);
        let m = mass(field);
        let e = energy_parts_with(field, &self.lap, self.mode, self.convention).total();
        let (m0, e0) = *self.reference.get_or_insert((m, e));
        DiagnosticsRecord {
            t: field.t(),
            linf: linf_norm(field).0,
            l6: lp_norm(field, 6.0),
            l14: lp_norm(field, 14.0),
            h2: h2_from_laplacian(field.grid(), &self.lap),
            mass: m,
            energy: e,
            mass_rel_err: rel_err(m, m0),
            energy_rel_err: rel_err(e, e0),
            besov: None,
        }
    }
}
