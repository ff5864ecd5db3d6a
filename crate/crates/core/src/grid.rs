//! Radial mesh, discrete field and initial-condition synthesis.
//!
//! Nodes are `r_j = j * h` for `j = 0..=n` with `h = r_max / n`. The field
//! obeys an even-reflection condition at the origin and a homogeneous
//! Dirichlet wall at `r_max`; both are encoded in [`extend_with_ghosts`].

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible interval count; the five-point stencil needs interior room.
pub const MIN_INTERVALS: usize = 8;

/// Uniform radial mesh on `[0, r_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    r_max: f64,
    n: usize,
    h: f64,
    dim: u32,
}

impl RadialGrid {
    pub fn new(r_max: f64, n: usize, dim: u32) -> Result<Self> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::config("r_max", format!("must be positive, got {r_max}")));
        }
        if n < MIN_INTERVALS {
            return Err(Error::config("n", format!("must be at least {MIN_INTERVALS}, got {n}")));
        }
        if dim < 3 || dim.is_multiple_of(2) {
            return Err(Error::config("dim", format!("must be odd and >= 3, got {dim}")));
        }
        Ok(Self {
            r_max,
            n,
            h: r_max / n as f64,
            dim,
        })
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Number of intervals; there are `n + 1` nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node position `r_j`. The last node returns `r_max` exactly.
    #[inline]
    pub fn r(&self, j: usize) -> f64 {
        if j == self.n {
            self.r_max
        } else {
            j as f64 * self.h
        }
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n + 1).map(move |j| self.r(j))
    }

    /// `r_j^(dim-1)` for every node, the radial volume weight without the
    /// sphere surface constant.
    pub fn volume_weights(&self) -> Vec<f64> {
        let e = self.dim as i32 - 1;
        self.nodes().map(|r| r.powi(e)).collect()
    }
}

/// Build a grid; see [`RadialGrid::new`].
pub fn build_grid(r_max: f64, n: usize, dim: u32) -> Result<RadialGrid> {
    RadialGrid::new(r_max, n, dim)
}

/// Samples of `u(r_j, t)` on a [`RadialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    grid: RadialGrid,
    t: f64,
    u: Vec<Complex64>,
}

impl FieldState {
    /// Validating constructor. Rejects wrong lengths, a non-zero wall value
    /// and non-finite samples.
    pub fn new(grid: RadialGrid, t: f64, u: Vec<Complex64>) -> Result<Self> {
        if u.len() != grid.len() {
            return Err(Error::config(
                "u",
                format!("expected {} samples, got {}", grid.len(), u.len()),
            ));
        }
        if u[grid.n()] != Complex64::new(0.0, 0.0) {
            return Err(Error::config("u", "wall sample u[n] must be zero"));
        }
        if let Some(j) = u.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::config("u", format!("non-finite sample at index {j}")));
        }
        Ok(Self { grid, t, u })
    }

    pub fn zeros(grid: RadialGrid) -> Self {
        Self {
            grid,
            t: 0.0,
            u: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub(crate) fn from_parts_unchecked(grid: RadialGrid, t: f64, u: Vec<Complex64>) -> Self {
        debug_assert_eq!(u.len(), grid.len());
        Self { grid, t, u }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn u(&self) -> &[Complex64] {
        &self.u
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.u
    }

    pub(crate) fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.u
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.t = t;
    }

    /// Same samples multiplied by `c`.
    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid,
            t: self.t,
            u: self.u.iter().map(|z| z * c).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Tabulated radial profile, linearly interpolated onto the grid and taken
/// as zero beyond its last abscissa.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    r: Vec<f64>,
    values: Vec<Complex64>,
}

impl ProfileTable {
    pub fn new(r: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if r.len() != values.len() {
            return Err(Error::Table("abscissa and value columns differ in length".into()));
        }
        if r.len() < 2 {
            return Err(Error::Table("need at least two rows".into()));
        }
        if r[0] != 0.0 {
            return Err(Error::Table("first abscissa must be r = 0".into()));
        }
        if r.windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::Table("abscissae must be strictly increasing".into()));
        }
        Ok(Self { r, values })
    }

    /// Reads a headed CSV with columns `r,re,im`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut r = Vec::new();
        let mut values = Vec::new();
        for row in reader.deserialize() {
            let (ri, re, im): (f64, f64, f64) = row?;
            r.push(ri);
            values.push(Complex64::new(re, im));
        }
        Self::new(r, values)
    }

    pub fn sample(&self, r: f64) -> Complex64 {
        let last = self.r.len() - 1;
        if r > self.r[last] {
            return Complex64::new(0.0, 0.0);
        }
        let i = self.r.partition_point(|&x| x <= r).saturating_sub(1).min(last - 1);
        let (r0, r1) = (self.r[i], self.r[i + 1]);
        let w = (r - r0) / (r1 - r0);
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IcFamily {
    /// `A e^{-r^2}`
    Gaussian,
    /// `A r^2 e^{-r^2}`
    Ring,
    /// `A e^{-i alpha r^2} e^{-r^2}`
    OscillatoryGaussian,
    /// `A * table(r)`
    CustomTable(Arc<ProfileTable>),
}

impl IcFamily {
    pub fn name(&self) -> &'static str {
        match self {
            IcFamily::Gaussian => "gaussian",
            IcFamily::Ring => "ring",
            IcFamily::OscillatoryGaussian => "osc-gaussian",
            IcFamily::CustomTable(_) => "table",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub family: IcFamily,
    pub amplitude: f64,
    /// Chirp rate; only read by the oscillatory family.
    pub alpha: f64,
}

impl InitialCondition {
    pub fn gaussian(amplitude: f64) -> Self {
        Self {
            family: IcFamily::Gaussian,
            amplitude,
            alpha: 0.0,
        }
    }

    pub fn ring(amplitude: f64) -> Self {
        Self {
            family: IcFamily::Ring,
            amplitude,
            alpha: 0.0,
        }
    }

    pub fn oscillatory_gaussian(amplitude: f64, alpha: f64) -> Self {
        Self {
            family: IcFamily::OscillatoryGaussian,
            amplitude,
            alpha,
        }
    }

    pub fn table(table: ProfileTable, amplitude: f64) -> Self {
        Self {
            family: IcFamily::CustomTable(Arc::new(table)),
            amplitude,
            alpha: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::config(
                "amplitude",
                format!("must be finite and non-negative, got {}", self.amplitude),
            ));
        }
        if !self.alpha.is_finite() {
            return Err(Error::config("alpha", "must be finite"));
        }
        Ok(())
    }

    /// Closed-form value at radius `r`.
    pub fn value(&self, r: f64) -> Complex64 {
        let a = self.amplitude;
        let g = (-r * r).exp();
        match &self.family {
            IcFamily::Gaussian => Complex64::new(a * g, 0.0),
            IcFamily::Ring => Complex64::new(a * r * r * g, 0.0),
            IcFamily::OscillatoryGaussian => Complex64::from_polar(a * g, -self.alpha * r * r),
            IcFamily::CustomTable(table) => table.sample(r) * a,
        }
    }
}

/// Samples the initial condition at `t = 0` and pins the wall node to zero.
pub fn init_field(grid: &RadialGrid, ic: &InitialCondition) -> Result<FieldState> {
    ic.validate()?;
    let mut u: Vec<Complex64> = grid.nodes().map(|r| ic.value(r)).collect();
    u[grid.n()] = Complex64::new(0.0, 0.0);
    if let Some(j) = u.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::config("ic", format!("non-finite initial sample at index {j}")));
    }
    Ok(FieldState::from_parts_unchecked(*grid, 0.0, u))
}

/// `[U_2, U_1, U_0, ..., U_n, 0, 0]`: even reflection about the origin and
/// zero padding past the wall. Index `j + 2` of the result holds `U_j`.
pub fn extend_with_ghosts(field: &FieldState) -> Vec<Complex64> {
    let u = field.u();
    let zero = Complex64::new(0.0, 0.0);
    let mut ext = Vec::with_capacity(u.len() + 4);
    ext.push(u[2]);
    ext.push(u[1]);
    ext.extend_from_slice(u);
    ext.push(zero);
    ext.push(zero);
    ext
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_spacing_matches_tabulated_runs() {
        let g = build_grid(100.0, 10_000, 5).unwrap();
        assert_relative_eq!(g.h(), 0.01, max_relative = 1e-15);
        assert_eq!(g.r(10_000), 100.0);
        assert_eq!(g.r(0), 0.0);

        let g = build_grid(2000.0, 200_000, 5).unwrap();
        assert_relative_eq!(g.h(), 0.01, max_relative = 1e-15);

        let g = build_grid(1.0, 8, 5).unwrap();
        assert_eq!(g.h(), 0.125);
        assert_relative_eq!(g.h() * g.n() as f64, g.r_max(), max_relative = 1e-15);
    }

    #[test]
    fn grid_rejects_bad_fields() {
        let field_of = |e: Error| match e {
            Error::Config { field, .. } => field,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(field_of(build_grid(0.0, 100, 5).unwrap_err()), "r_max");
        assert_eq!(field_of(build_grid(-1.0, 100, 5).unwrap_err()), "r_max");
        assert_eq!(field_of(build_grid(1.0, 7, 5).unwrap_err()), "n");
        assert_eq!(field_of(build_grid(1.0, 100, 6).unwrap_err()), "dim");
        assert_eq!(field_of(build_grid(1.0, 100, 1).unwrap_err()), "dim");
    }

    #[test]
    fn gaussian_profile() {
        let g = build_grid(10.0, 1000, 5).unwrap();
        let f = init_field(&g, &InitialCondition::gaussian(10.0)).unwrap();
        assert_eq!(f.t(), 0.0);
        assert_eq!(f.u()[0], Complex64::new(10.0, 0.0));
        assert!(f.u().windows(2).all(|w| w[1].norm() <= w[0].norm()));
        assert_eq!(f.u()[g.n()], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn ring_profile_peaks_at_unit_radius() {
        let g = build_grid(10.0, 1000, 5).unwrap();
        let f = init_field(&g, &InitialCondition::ring(8.0)).unwrap();
        assert_eq!(f.u()[0], Complex64::new(0.0, 0.0));
        let (jmax, peak) = f
            .u()
            .iter()
            .enumerate()
            .map(|(j, z)| (j, z.norm()))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert_eq!(g.r(jmax), 1.0);
        assert_relative_eq!(peak, 8.0 * (-1.0f64).exp(), max_relative = 1e-14);
        assert!((peak - 2.9430).abs() < 1e-4);
    }

    #[test]
    fn chirp_is_unimodular() {
        let g = build_grid(10.0, 1000, 5).unwrap();
        let f = init_field(&g, &InitialCondition::oscillatory_gaussian(4.0, 10.0)).unwrap();
        for (j, z) in f.u().iter().enumerate().take(g.n()) {
            let r = g.r(j);
            assert_relative_eq!(z.norm(), 4.0 * (-r * r).exp(), max_relative = 1e-13, epsilon = 1e-300);
        }
    }

    #[test]
    fn init_is_deterministic() {
        let g = build_grid(50.0, 4000, 5).unwrap();
        let ic = InitialCondition::oscillatory_gaussian(4.0, 10.0);
        let a = init_field(&g, &ic).unwrap();
        let b = init_field(&g, &ic).unwrap();
        assert!(a
            .u()
            .iter()
            .zip(b.u())
            .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()));
    }

    #[test]
    fn negative_amplitude_rejected() {
        let g = build_grid(10.0, 100, 5).unwrap();
        assert!(matches!(
            init_field(&g, &InitialCondition::gaussian(-1.0)),
            Err(Error::Config { field: "amplitude", .. })
        ));
    }

    #[test]
    fn ghost_extension() {
        let g = build_grid(1.0, 8, 5).unwrap();
        let mut u: Vec<Complex64> = (0..=8).map(|j| Complex64::new(j as f64 + 1.0, 0.0)).collect();
        u[1] = Complex64::new(5.0, 0.0);
        u[8] = Complex64::new(0.0, 0.0);
        let f = FieldState::new(g, 0.0, u.clone()).unwrap();
        let ext = extend_with_ghosts(&f);
        assert_eq!(ext.len(), g.n() + 5);
        // slots -2, -1 hold U_2, U_1
        assert_eq!(ext[0], u[2]);
        assert_eq!(ext[1], u[1]);
        assert_eq!(ext[1], Complex64::new(5.0, 0.0));
        assert_eq!(&ext[2..=10], &u[..]);
        assert_eq!(ext[11], Complex64::new(0.0, 0.0));
        assert_eq!(ext[12], Complex64::new(0.0, 0.0));
        assert_eq!(f.u(), &u[..]);

        let z = FieldState::zeros(g);
        assert!(extend_with_ghosts(&z).iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn field_state_validation() {
        let g = build_grid(1.0, 8, 5).unwrap();
        let mut u = vec![Complex64::new(1.0, 0.0); 9];
        assert!(FieldState::new(g, 0.0, u.clone()).is_err());
        u[8] = Complex64::new(0.0, 0.0);
        assert!(FieldState::new(g, 0.0, u.clone()).is_ok());
        u[3] = Complex64::new(f64::NAN, 0.0);
        assert!(FieldState::new(g, 0.0, u.clone()).is_err());
        assert!(FieldState::new(g, 0.0, vec![Complex64::new(0.0, 0.0); 8]).is_err());
    }

    #[test]
    fn table_interpolates_linearly() {
        let t = ProfileTable::new(
            vec![0.0, 1.0, 2.0],
            vec![
                Complex64::new(2.0, 0.0),
                Complex64::new(0.0, 2.0),
                Complex64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        assert_eq!(t.sample(0.5), Complex64::new(1.0, 1.0));
        assert_eq!(t.sample(2.0), Complex64::new(0.0, 0.0));
        assert_eq!(t.sample(3.0), Complex64::new(0.0, 0.0));
        let g = build_grid(4.0, 8, 5).unwrap();
        let f = init_field(&g, &InitialCondition::table(t, 2.0)).unwrap();
        assert_eq!(f.u()[1], Complex64::new(2.0, 2.0));
    }

    proptest::proptest! {
        #[test]
        fn ghosts_are_even_about_origin(vals in proptest::collection::vec(-1e3f64..1e3, 18)) {
            let g = build_grid(1.0, 8, 5).unwrap();
            let mut u: Vec<Complex64> = vals.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
            u[8] = Complex64::new(0.0, 0.0);
            let f = FieldState::new(g, 0.0, u).unwrap();
            let ext = extend_with_ghosts(&f);
            for j in 1..=2 {
                proptest::prop_assert_eq!(ext[2 - j], ext[2 + j]);
            }
        }
    }
}
