//! Radial finite-difference simulator for the defocusing energy-supercritical
//! nonlinear Schrödinger equation `i u_t + Δu - |u|^{p-1} u = 0`, with the
//! norm, spectral and Besov diagnostics used to study scattering.
//!
//! The default configuration is `d = 5`, `p = 5`, where `Ḣ²` is the
//! scaling-critical space.

pub mod error;
pub mod grid;
pub mod harness;
pub mod integrator;
pub mod observables;
pub mod operator;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{build_grid, extend_with_ghosts, init_field, FieldState, IcFamily, InitialCondition, RadialGrid};
pub use harness::{
    convergence_study, fit_decay_rate, linear_constancy_check, parse_config, run_experiment, Headline, RunConfig,
};
pub use integrator::{choose_dt, evolve, rk4_step, EvolutionSink, EvolveOptions, MemorySink, StepControl};
pub use observables::{
    energy, h2_seminorm, linf_norm, lp_norm, mass, radial_integral, DiagnosticsRecord, EnergyConvention, QuadratureRule,
};
pub use operator::{apply_laplacian, rhs, EvolutionMode};
pub use spectral::{besov_norm, bessel_kernel, dyadic_bins, transform, BesovBins, BesovMeasure, Spectrum};
