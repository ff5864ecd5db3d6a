//! Radial Fourier transform and dyadic Besov estimate.
//!
//! For radial `u` on `R^d` (unitary convention)
//!
//! ```text
//! û(k) = k^{-ν} ∫_0^∞ u(r) J_ν(k r) r^{d/2} dr,   ν = (d-2)/2,
//! ```
//!
//! evaluated by the trapezoidal rule on the field's nodes at `k_j = j Δk`,
//! `Δk = 1/(2 r_max)`, `j = 0..=n`. Only odd `d` is supported, where `ν` is
//! a half-integer and `J_ν(x) = sqrt(2x/π) j_m(x)` with `m = ν - 1/2`.
//!
//! The transform costs `O(n^2)` and is meant for snapshot times only.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use multiversion::multiversion;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FieldState;

/// Below this argument the spherical Bessel functions come from their
/// Taylor series; the closed forms cancel catastrophically near zero.
const SERIES_THRESHOLD: f64 = 0.5;

/// Indices per block between exact `sin_cos` re-seeds of the rotations.
const BLOCK: usize = 64;

/// Largest supported `m + 1`, i.e. `d <= 17`.
const MAX_TERMS: usize = 8;

fn series_threshold(m: u32) -> f64 {
    SERIES_THRESHOLD.max(m as f64)
}

fn double_factorial_odd(m: u32) -> f64 {
    // (2m+1)!!
    (0..=m).map(|l| (2 * l + 1) as f64).product()
}

/// `Γ(m + 3/2) = (2m+1)!! sqrt(π) / 2^{m+1}`
fn gamma_three_halves_plus(m: u32) -> f64 {
    double_factorial_odd(m) * PI.sqrt() / 2f64.powi(m as i32 + 1)
}

fn spherical_jn_series(m: u32, x: f64) -> f64 {
    let y = -0.5 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..80u32 {
        term *= y / (k as f64 * (2 * m + 2 * k + 1) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    x.powi(m as i32) / double_factorial_odd(m) * sum
}

/// `j_m(x)` from `sin x`, `cos x` and `1/x` by upward recurrence.
#[inline(always)]
fn spherical_jn_trig(m: u32, inv_x: f64, s: f64, c: f64) -> f64 {
    let j0 = s * inv_x;
    if m == 0 {
        return j0;
    }
    let j1 = (j0 - c) * inv_x;
    if m == 1 {
        return j1;
    }
    let (mut prev, mut cur) = (j0, j1);
    for l in 1..m {
        let next = (2 * l + 1) as f64 * inv_x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Coefficients `(a_p, b_p)`, `p = 1..=m+1`, with
/// `j_m(x) = Σ_p (a_p sin x + b_p cos x) x^{-p}`.
fn trig_coefficients(m: u32) -> (Vec<f64>, Vec<f64>) {
    // j_{-1} = cos x / x, j_0 = sin x / x
    let (mut prev, mut cur) = ((vec![0.0], vec![1.0]), (vec![1.0], vec![0.0]));
    for l in 0..m {
        let f = (2 * l + 1) as f64;
        let len = cur.0.len() + 1;
        let next = |c: &[f64], p: &[f64]| -> Vec<f64> {
            (0..len)
                .map(|i| {
                    let shifted = if i > 0 { f * c[i - 1] } else { 0.0 };
                    shifted - p.get(i).copied().unwrap_or(0.0)
                })
                .collect()
        };
        let nxt = (next(&cur.0, &prev.0), next(&cur.1, &prev.1));
        prev = cur;
        cur = nxt;
    }
    cur
}

/// Spherical Bessel function of the first kind `j_m(x)`, `x >= 0`.
pub fn spherical_jn(m: u32, x: f64) -> f64 {
    if x < series_threshold(m) {
        spherical_jn_series(m, x)
    } else {
        let (s, c) = x.sin_cos();
        spherical_jn_trig(m, 1.0 / x, s, c)
    }
}

/// Half-integer order `ν = m + 1/2`, or an error for anything else.
fn half_integer_order(nu: f64) -> Result<u32> {
    let twice = 2.0 * nu;
    if !(twice.is_finite() && twice >= 1.0 && twice.fract() == 0.0 && (twice as i64) % 2 == 1) {
        return Err(Error::UnsupportedDimension((twice + 2.0).round() as i64));
    }
    Ok(((twice - 1.0) / 2.0) as u32)
}

/// `J_ν(x)` for half-integer `ν >= 1/2` and `x >= 0`.
pub fn bessel_kernel(nu: f64, x: f64) -> Result<f64> {
    let m = half_integer_order(nu)?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::config("x", format!("Bessel argument must be >= 0, got {x}")));
    }
    Ok((2.0 * x / PI).sqrt() * spherical_jn(m, x))
}

/// `m` such that `ν = (d-2)/2 = m + 1/2`.
fn order_for_dim(dim: u32) -> Result<u32> {
    if dim < 3 || dim.is_multiple_of(2) {
        return Err(Error::UnsupportedDimension(dim as i64));
    }
    Ok((dim - 3) / 2)
}

/// Weights this small are far below the quadrature error, and their
/// subnormal products slow the inner loop several-fold.
const FLUSH_BELOW: f64 = 1e-250;

fn flush(x: f64) -> f64 {
    if x.abs() < FLUSH_BELOW {
        0.0
    } else {
        x
    }
}

/// `(Σ_i P[i] sin(iθ), Σ_i P[i] cos(iθ))` over `i >= start`, where
/// `P[i]` is the `W`-wide row of `packed` at index `i`. Two rotation chains
/// (even and odd offsets) run interleaved and are re-seeded from `sin_cos`
/// every block; rows past `n` must be zero.
#[multiversion(targets("x86_64+avx2+fma"))]
fn closed_form_sums<const W: usize>(packed: &[f64], start: usize, n: usize, theta: f64) -> ([f64; W], [f64; W]) {
    let mut sin_even = [0.0; W];
    let mut cos_even = [0.0; W];
    let mut sin_odd = [0.0; W];
    let mut cos_odd = [0.0; W];
    let (st, ct) = (2.0 * theta).sin_cos();
    let mut i = start;
    while i <= n {
        let (mut s0, mut c0) = (i as f64 * theta).sin_cos();
        let (mut s1, mut c1) = ((i + 1) as f64 * theta).sin_cos();
        let rows = &packed[i * W..(i + BLOCK) * W];
        for pair in rows.chunks_exact(2 * W) {
            let (even, odd) = pair.split_at(W);
            for k in 0..W {
                sin_even[k] += even[k] * s0;
                cos_even[k] += even[k] * c0;
                sin_odd[k] += odd[k] * s1;
                cos_odd[k] += odd[k] * c1;
            }
            (s0, c0) = (s0 * ct + c0 * st, c0 * ct - s0 * st);
            (s1, c1) = (s1 * ct + c1 * st, c1 * ct - s1 * st);
        }
        i += BLOCK;
    }
    for k in 0..W {
        sin_even[k] += sin_odd[k];
        cos_even[k] += cos_odd[k];
    }
    (sin_even, cos_even)
}

/// Sampled radial Fourier transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub dk: f64,
    /// Nyquist wavenumber `n Δk = n / (2 r_max)`.
    pub k_max: f64,
    pub uhat: Vec<Complex64>,
    pub dim: u32,
    pub t: f64,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.uhat.len() - 1
    }

    pub fn k(&self, j: usize) -> f64 {
        if j == self.n() {
            self.k_max
        } else {
            j as f64 * self.dk
        }
    }

    pub fn abs(&self) -> Vec<f64> {
        self.uhat.iter().map(|z| z.norm()).collect()
    }
}

/// Radial Fourier transform of `field` on `k_j = j / (2 r_max)`.
pub fn transform(field: &FieldState) -> Result<Spectrum> {
    let grid = field.grid();
    let m = order_for_dim(grid.dim())?;
    let terms = m as usize + 1;
    if terms > MAX_TERMS {
        return Err(Error::UnsupportedDimension(grid.dim() as i64));
    }
    let n = grid.n();
    let h = grid.h();
    let dk = 1.0 / (2.0 * grid.r_max());
    let u = field.u();

    // Trapezoid weights folded into the samples: W_i = w_i U_i r_i^{m+2} h.
    let power = m as i32 + 2;
    let weights: Vec<Complex64> = (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 0.5 * h } else { h };
            u[i] * (w * grid.r(i).powi(power))
        })
        .collect();

    // Planes W_i i^{-p} for the closed-form region, zero padded so blocks
    // may run past n.
    let padded = n + 1 + BLOCK;
    // Row i holds [Re W_i i^{-p}, Im W_i i^{-p}] for p = 1..=terms.
    let width = 2 * terms;
    let mut packed = vec![0.0; padded * width];
    for i in 1..=n {
        let inv = 1.0 / i as f64;
        let mut f = 1.0;
        let row = &mut packed[i * width..(i + 1) * width];
        for p in 0..terms {
            f *= inv;
            row[2 * p] = flush(weights[i].re * f);
            row[2 * p + 1] = flush(weights[i].im * f);
        }
    }
    let (coef_sin, coef_cos) = trig_coefficients(m);

    let norm = (2.0 / PI).sqrt();
    let nu = m as f64 + 0.5;
    let zero_pref = 1.0 / (2f64.powf(nu) * gamma_three_halves_plus(m));
    let zero_power = 2 * m as i32 + 2; // ν + d/2 = d - 1
    let uhat0: Complex64 = (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 0.5 * h } else { h };
            u[i] * (w * grid.r(i).powi(zero_power))
        })
        .sum::<Complex64>()
        * zero_pref;

    let threshold = series_threshold(m);
    let k_max = n as f64 * dk;
    let mut uhat: Vec<Complex64> = (1..=n)
        .into_par_iter()
        .map(|j| {
            let k = if j == n { k_max } else { j as f64 * dk };
            let theta = k * h;
            let mut acc = Complex64::new(0.0, 0.0);
            // i = 0 has r = 0 and contributes nothing.
            let mut i = 1;
            while i <= n && (i as f64) * theta < threshold {
                acc += weights[i] * spherical_jn_series(m, i as f64 * theta);
                i += 1;
            }

            if i <= n {
                let mut sin_sums = [0.0; 2 * MAX_TERMS];
                let mut cos_sums = [0.0; 2 * MAX_TERMS];
                macro_rules! sums {
                    ($w:literal) => {{
                        let (sv, cv) = closed_form_sums::<$w>(&packed, i, n, theta);
                        sin_sums[..$w].copy_from_slice(&sv);
                        cos_sums[..$w].copy_from_slice(&cv);
                    }};
                }
                match width {
                    2 => sums!(2),
                    4 => sums!(4),
                    6 => sums!(6),
                    8 => sums!(8),
                    10 => sums!(10),
                    12 => sums!(12),
                    14 => sums!(14),
                    _ => sums!(16),
                }
                let inv_theta = 1.0 / theta;
                let mut scale = 1.0;
                for p in 0..terms {
                    scale *= inv_theta;
                    let re = coef_sin[p] * sin_sums[2 * p] + coef_cos[p] * cos_sums[2 * p];
                    let im = coef_sin[p] * sin_sums[2 * p + 1] + coef_cos[p] * cos_sums[2 * p + 1];
                    acc += Complex64::new(re, im) * scale;
                }
            }
            acc * (norm * k.powi(-(m as i32)))
        })
        .collect();
    uhat.insert(0, uhat0);

    Ok(Spectrum {
        dk,
        k_max,
        uhat,
        dim: grid.dim(),
        t: field.t(),
    })
}

/// Integration measure for the dyadic shells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BesovMeasure {
    /// One-dimensional `dk`; the established estimator.
    #[default]
    Linear,
    /// `k^(d-1) dk`, the radial volume measure.
    Radial,
}

/// Dyadic shell integrals `q_j`. Bin `j_min - 1` covers `[0, 2^j_min)`,
/// bin `j_max` covers `[2^j_max, K_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BesovBins {
    pub j_min: i32,
    pub j_max: i32,
    pub q: BTreeMap<i32, f64>,
    /// Bins with fewer than two wavenumber nodes.
    pub skipped: Vec<i32>,
}

impl BesovBins {
    /// `max_j 2^{2j} q_j` and the maximizing bin.
    pub fn norm(&self) -> (f64, Option<i32>) {
        self.q
            .iter()
            .map(|(&j, &q)| (2f64.powi(2 * j) * q, j))
            .fold((0.0, None), |best, (v, j)| match best.1 {
                Some(_) if v <= best.0 => best,
                _ => (v, Some(j)),
            })
    }
}

pub fn dyadic_bins(spectrum: &Spectrum) -> BesovBins {
    dyadic_bins_with(spectrum, BesovMeasure::Linear)
}

pub fn dyadic_bins_with(spectrum: &Spectrum, measure: BesovMeasure) -> BesovBins {
    let n = spectrum.n();
    let dk = spectrum.dk;
    let k1 = spectrum.k(1);
    let kn = spectrum.k(n);
    let j_min = (4.0 * k1).log2().ceil() as i32;
    let j_max = kn.log2().floor() as i32;

    let power = spectrum.dim as i32 - 1;
    let density: Vec<f64> = spectrum
        .uhat
        .iter()
        .enumerate()
        .map(|(i, z)| match measure {
            BesovMeasure::Linear => z.norm_sqr(),
            BesovMeasure::Radial => z.norm_sqr() * spectrum.k(i).powi(power),
        })
        .collect();

    let shell = |lo: f64, hi: f64| -> Option<f64> {
        let i_lo = ((lo / dk) - 1e-9).ceil().max(0.0) as usize;
        let i_hi = (((hi / dk) + 1e-9).floor() as usize).min(n);
        if i_hi <= i_lo {
            return None;
        }
        let inner: f64 = density[i_lo + 1..i_hi].iter().sum();
        Some(dk * (inner + 0.5 * (density[i_lo] + density[i_hi])))
    };

    let mut q = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut put = |j: i32, v: Option<f64>| match v {
        Some(sq) => {
            q.insert(j, sq.max(0.0).sqrt());
        }
        None => skipped.push(j),
    };
    put(j_min - 1, shell(0.0, 2f64.powi(j_min)));
    for j in j_min..j_max {
        put(j, shell(2f64.powi(j), 2f64.powi(j + 1)));
    }
    if j_max >= j_min {
        put(j_max, shell(2f64.powi(j_max), kn));
    }
    BesovBins {
        j_min,
        j_max,
        q,
        skipped,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BesovEstimate {
    pub value: f64,
    pub argmax: Option<i32>,
    pub bins: BesovBins,
}

/// `max_{j_min-1 <= j <= j_max} 2^{2j} q_j` with the one-dimensional measure.
pub fn besov_norm(spectrum: &Spectrum) -> BesovEstimate {
    besov_norm_with(spectrum, BesovMeasure::Linear)
}

pub fn besov_norm_with(spectrum: &Spectrum, measure: BesovMeasure) -> BesovEstimate {
    let bins = dyadic_bins_with(spectrum, measure);
    let (value, argmax) = bins.norm();
    BesovEstimate { value, argmax, bins }
}
