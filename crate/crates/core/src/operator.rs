//! Fourth-order radial Laplacian and the NLS right-hand side.
//!
//! Interior nodes use the five-point second-difference stencil plus
//! `(d-1)/r` times the five-point first difference. At `r = 0` the radial
//! Laplacian reduces to `d * u_rr(0)`, evaluated with the same second
//! difference and even ghosts. The wall node is held at zero.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldState, RadialGrid};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Linear or defocusing-nonlinear evolution, `i u_t + Δu - |u|^{p-1} u = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvolutionMode {
    Nonlinear { p: u32 },
    Linear,
}

impl Default for EvolutionMode {
    fn default() -> Self {
        EvolutionMode::Nonlinear { p: 5 }
    }
}

impl EvolutionMode {
    pub fn nonlinear(p: u32) -> Result<Self> {
        if p < 3 || p.is_multiple_of(2) {
            return Err(Error::config("p", format!("must be odd and >= 3, got {p}")));
        }
        Ok(EvolutionMode::Nonlinear { p })
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, EvolutionMode::Linear)
    }

    /// Nonlinearity power, `None` in linear mode.
    pub fn power(&self) -> Option<u32> {
        match *self {
            EvolutionMode::Nonlinear { p } => Some(p),
            EvolutionMode::Linear => None,
        }
    }
}

/// Precomputed stencil coefficients for one grid.
#[derive(Debug, Clone)]
pub struct RadialLaplacian {
    n: usize,
    /// `1 / (12 h^2)`
    c2: f64,
    /// `d / (12 h^2)`, origin rule
    c0: f64,
    /// `(d-1) / (12 h r_j)`; entry 0 unused
    c1: Vec<f64>,
}

impl RadialLaplacian {
    pub fn new(grid: &RadialGrid) -> Self {
        let h = grid.h();
        let d = grid.dim() as f64;
        let c2 = 1.0 / (12.0 * h * h);
        let mut c1 = vec![0.0; grid.len()];
        for (j, c) in c1.iter_mut().enumerate().skip(1) {
            *c = (d - 1.0) / (12.0 * h * grid.r(j));
        }
        Self {
            n: grid.n(),
            c2,
            c0: d * c2,
            c1,
        }
    }

    #[inline(always)]
    fn node(&self, j: usize, m2: Complex64, m1: Complex64, c: Complex64, p1: Complex64, p2: Complex64) -> Complex64 {
        let second = ((m1 - c) + (p1 - c)) * 16.0 - ((m2 - c) + (p2 - c));
        let first = (m2 - p2) + (p1 - m1) * 8.0;
        second * self.c2 + first * self.c1[j]
    }

    /// Writes `Δ_disc u` into `out`. Both slices have length `n + 1`.
    /// Second differences are taken against the centre value to avoid
    /// cancellation in the `16, -30` weights.
    pub fn apply_into(&self, u: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(u.len(), n + 1);
        assert_eq!(out.len(), n + 1);

        out[0] = ((u[1] - u[0]) * 32.0 - (u[2] - u[0]) * 2.0) * self.c0;
        out[1] = self.node(1, u[1], u[0], u[1], u[2], u[3]);

        let c2 = self.c2;
        let m = n - 3;
        let (a, b, c, d, e) = (&u[0..m], &u[1..m + 1], &u[2..m + 2], &u[3..m + 3], &u[4..m + 4]);
        let (dst, c1) = (&mut out[2..m + 2], &self.c1[2..m + 2]);
        for i in 0..m {
            let second = ((b[i] - c[i]) + (d[i] - c[i])) * 16.0 - ((a[i] - c[i]) + (e[i] - c[i]));
            let first = (a[i] - e[i]) + (d[i] - b[i]) * 8.0;
            dst[i] = second * c2 + first * c1[i];
        }

        out[n - 1] = self.node(n - 1, u[n - 3], u[n - 2], u[n - 1], u[n], ZERO);
        out[n] = ZERO;
    }

    /// `(1/(12h²), d/(12h²), (d-1)/(12 h r_j))`
    pub(crate) fn coefficients(&self) -> (f64, f64, &[f64]) {
        (self.c2, self.c0, &self.c1)
    }

    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; u.len()];
        self.apply_into(u, &mut out);
        out
    }
}

/// `Δ_disc U` for a field; entry `n` is zero.
pub fn apply_laplacian(field: &FieldState) -> Vec<Complex64> {
    RadialLaplacian::new(field.grid()).apply(field.u())
}

/// Second-order three-point radial Laplacian (origin: `d * u_rr(0)`).
/// Only used as an independent consistency check on the fourth-order operator.
pub fn apply_laplacian_second_order(field: &FieldState) -> Vec<Complex64> {
    let grid = field.grid();
    let u = field.u();
    let n = grid.n();
    let h = grid.h();
    let d = grid.dim() as f64;
    let mut out = vec![ZERO; n + 1];
    out[0] = (u[1] - u[0]) * (2.0 * d / (h * h));
    for j in 1..n {
        let next = if j < n { u[j + 1] } else { ZERO };
        let second = (u[j - 1] - u[j] * 2.0 + next) / (h * h);
        let first = (next - u[j - 1]) / (2.0 * h);
        out[j] = second + first * ((d - 1.0) / grid.r(j));
    }
    out
}

#[inline(always)]
pub(crate) fn int_pow(x: f64, e: u32) -> f64 {
    match e {
        1 => x,
        2 => x * x,
        3 => x * x * x,
        _ => x.powi(e as i32),
    }
}

/// Right-hand side `dU/dt` with a cached Laplacian.
#[derive(Debug, Clone)]
pub struct NlsOperator {
    laplacian: RadialLaplacian,
    mode: EvolutionMode,
}

impl NlsOperator {
    pub fn new(grid: &RadialGrid, mode: EvolutionMode) -> Self {
        Self {
            laplacian: RadialLaplacian::new(grid),
            mode,
        }
    }

    pub fn mode(&self) -> EvolutionMode {
        self.mode
    }

    pub fn laplacian(&self) -> &RadialLaplacian {
        &self.laplacian
    }

    pub fn rhs_into(&self, u: &[Complex64], out: &mut [Complex64]) {
        self.laplacian.apply_into(u, out);
        let n = out.len() - 1;
        match self.mode {
            EvolutionMode::Linear => {
                for o in out[..n].iter_mut() {
                    *o = Complex64::new(-o.im, o.re);
                }
            }
            EvolutionMode::Nonlinear { p } => {
                let e = (p - 1) / 2;
                for (o, z) in out[..n].iter_mut().zip(&u[..n]) {
                    let w = *o - z * int_pow(z.norm_sqr(), e);
                    *o = Complex64::new(-w.im, w.re);
                }
            }
        }
        out[n] = ZERO;
    }
}

/// `dU/dt = i (Δ_disc U - |U|^{p-1} U)`, or `i Δ_disc U` in linear mode.
pub fn rhs(field: &FieldState, mode: EvolutionMode) -> Vec<Complex64> {
    let op = NlsOperator::new(field.grid(), mode);
    let mut out = vec![ZERO; field.u().len()];
    op.rhs_into(field.u(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, init_field, InitialCondition};
    use approx::assert_relative_eq;

    fn field_from(grid: RadialGrid, f: impl Fn(f64) -> Complex64) -> FieldState {
        let mut u: Vec<Complex64> = grid.nodes().map(f).collect();
        u[grid.n()] = ZERO;
        FieldState::new(grid, 0.0, u).unwrap()
    }

    #[test]
    fn constants_are_annihilated_in_the_interior() {
        let g = build_grid(10.0, 100, 5).unwrap();
        let f = field_from(g, |_| Complex64::new(3.0, -2.0));
        let lap = apply_laplacian(&f);
        for v in &lap[..g.n() - 2] {
            assert!(v.norm() < 1e-9, "{v}");
        }
        assert_eq!(lap[g.n()], ZERO);
    }

    #[test]
    fn quadratic_is_exact() {
        // Δ r^2 = 2d in d dimensions.
        for dim in [3u32, 5, 7] {
            let g = build_grid(4.0, 64, dim).unwrap();
            let f = field_from(g, |r| Complex64::new(r * r, 0.0));
            let lap = apply_laplacian(&f);
            for v in &lap[..g.n() - 2] {
                assert_relative_eq!(v.re, 2.0 * dim as f64, max_relative = 1e-10);
                assert!(v.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quartic_polynomials_are_exact_away_from_origin() {
        // u = a + b r + c r^2 + e r^3 + f r^4, Δu = u'' + 4u'/r
        let (a, b, c, e, f4) = (1.0, -0.5, 0.25, 0.1, -0.02);
        let g = build_grid(4.0, 64, 5).unwrap();
        let f = field_from(g, |r| {
            Complex64::new(a + b * r + c * r * r + e * r.powi(3) + f4 * r.powi(4), 0.0)
        });
        let lap = apply_laplacian(&f);
        for (j, got) in lap.iter().enumerate().take(g.n() - 2).skip(2) {
            let r = g.r(j);
            let d1 = b + 2.0 * c * r + 3.0 * e * r * r + 4.0 * f4 * r.powi(3);
            let d2 = 2.0 * c + 6.0 * e * r + 12.0 * f4 * r * r;
            let exact = d2 + 4.0 * d1 / r;
            assert!((got.re - exact).abs() < 1e-9 * (1.0 + exact.abs()), "j={j}");
        }
    }

    fn gaussian_error(n: usize) -> f64 {
        let g = build_grid(8.0, n, 5).unwrap();
        let f = init_field(&g, &InitialCondition::gaussian(10.0)).unwrap();
        let lap = apply_laplacian(&f);
        (0..=g.n())
            .filter(|&j| (0.5..=3.0).contains(&g.r(j)))
            .map(|j| {
                let r = g.r(j);
                let exact = (4.0 * r * r - 10.0) * 10.0 * (-r * r).exp();
                (lap[j].re - exact).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn gaussian_converges_at_fourth_order() {
        let e1 = gaussian_error(200);
        let e2 = gaussian_error(400);
        let e3 = gaussian_error(800);
        let (r1, r2) = (e1 / e2, e2 / e3);
        assert!((14.0..18.5).contains(&r1), "ratio {r1}");
        assert!((14.0..18.5).contains(&r2), "ratio {r2}");
    }

    #[test]
    fn origin_rule_is_fourth_order() {
        let err = |n: usize| {
            let g = build_grid(8.0, n, 5).unwrap();
            let f = init_field(&g, &InitialCondition::gaussian(10.0)).unwrap();
            (apply_laplacian(&f)[0].re - (-100.0)).abs()
        };
        let ratio = err(200) / err(400);
        assert!((14.0..18.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rhs_zero_field() {
        let g = build_grid(1.0, 16, 5).unwrap();
        let z = FieldState::zeros(g);
        assert!(rhs(&z, EvolutionMode::default()).iter().all(|v| *v == ZERO));
        assert!(rhs(&z, EvolutionMode::Linear).iter().all(|v| *v == ZERO));
    }

    #[test]
    fn rhs_single_spike_differs_by_pointwise_nonlinearity() {
        let g = build_grid(2.0, 32, 5).unwrap();
        let mut u = vec![ZERO; g.len()];
        let spike = Complex64::new(0.7, -0.4);
        u[10] = spike;
        let f = FieldState::new(g, 0.0, u).unwrap();
        let lin = rhs(&f, EvolutionMode::Linear);
        let non = rhs(&f, EvolutionMode::default());
        for j in 0..g.len() {
            let expected = if j == 10 {
                lin[j] - Complex64::i() * spike * spike.norm_sqr().powi(2)
            } else {
                lin[j]
            };
            assert!((non[j] - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn rhs_on_constant_plateau() {
        let c: f64 = 1.3;
        let g = build_grid(10.0, 100, 5).unwrap();
        let f = field_from(g, |_| Complex64::new(c, 0.0));
        let v = rhs(&f, EvolutionMode::default());
        let mid = g.n() / 2;
        assert!((v[mid] - Complex64::new(0.0, -c.powi(5))).norm() < 1e-9);
        assert!(v[mid].im < 0.0);
    }

    #[test]
    fn wall_entry_is_zero() {
        let g = build_grid(2.0, 16, 5).unwrap();
        let f = init_field(&g, &InitialCondition::gaussian(1.0)).unwrap();
        assert_eq!(rhs(&f, EvolutionMode::default())[g.n()], ZERO);
        assert_eq!(apply_laplacian(&f)[g.n()], ZERO);
    }

    #[test]
    fn bad_power_rejected() {
        assert!(EvolutionMode::nonlinear(4).is_err());
        assert!(EvolutionMode::nonlinear(1).is_err());
        assert_eq!(EvolutionMode::nonlinear(3).unwrap().power(), Some(3));
    }

    proptest::proptest! {
        #[test]
        fn laplacian_is_linear(
            a in -5.0f64..5.0, b in -5.0f64..5.0,
            xs in proptest::collection::vec(-1.0f64..1.0, 34),
            ys in proptest::collection::vec(-1.0f64..1.0, 34),
        ) {
            let g = build_grid(2.0, 16, 5).unwrap();
            let mk = |v: &[f64]| {
                let mut u: Vec<Complex64> = v.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
                u[16] = ZERO;
                FieldState::new(g, 0.0, u).unwrap()
            };
            let (fu, fv) = (mk(&xs), mk(&ys));
            let combo: Vec<Complex64> = fu.u().iter().zip(fv.u()).map(|(x, y)| x * a + y * b).collect();
            let fc = FieldState::new(g, 0.0, combo).unwrap();
            let (lu, lv, lc) = (apply_laplacian(&fu), apply_laplacian(&fv), apply_laplacian(&fc));
            let scale = lu.iter().chain(&lv).map(|z| z.norm()).fold(1.0, f64::max) * 10.0;
            for j in 0..g.len() {
                proptest::prop_assert!((lc[j] - (lu[j] * a + lv[j] * b)).norm() <= 1e-12 * scale);
            }
        }

        #[test]
        fn defocusing_sign(vals in proptest::collection::vec(0.01f64..3.0, 16)) {
            let g = build_grid(2.0, 16, 5).unwrap();
            let mut u: Vec<Complex64> = vals.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            u.push(ZERO);
            let f = FieldState::new(g, 0.0, u).unwrap();
            let lin = rhs(&f, EvolutionMode::Linear);
            let non = rhs(&f, EvolutionMode::default());
            for j in 0..g.n() {
                proptest::prop_assert!((non[j] - lin[j]).im < 0.0);
            }
        }
    }
}
