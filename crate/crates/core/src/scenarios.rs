//! Built-in benchmark problems: initial data, bathymetries, exact solutions
//! and error norms.
//!
//! Cartesian fields store `(h, q_x, q_y)` with the depth H (positive down) as
//! bathymetry, so η = h − H. Spherical fields store `(h·σ, Q_θ, Q_φ)` and H·σ.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{BoundaryKind, BoundarySpec, Grid, GridConfig, StateField};
use crate::solver::GaussRule;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VortexParams {
    pub h0: f64,
    pub vbar: f64,
    pub alpha: f64,
    pub eps_reg: f64,
}

impl Default for VortexParams {
    fn default() -> Self {
        Self { h0: 2.0, vbar: 1.0, alpha: 1.0, eps_reg: 1e-16 }
    }
}

impl VortexParams {
    /// Water height and velocity at `(x, y)`.
    pub fn sample(&self, x: f64, y: f64, g: f64) -> (f64, f64, f64) {
        let r2 = x * x + y * y;
        let r = r2.sqrt();
        let e = (self.alpha * (1.0 - r2)).exp();
        let h = self.h0 - self.vbar * self.vbar / (4.0 * self.alpha * g) * e * e;
        let s = self.vbar * e * r / (r + self.eps_reg);
        (h, -s * y, s * x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThackerParams {
    pub h0: f64,
    pub a: f64,
    pub sigma: f64,
    /// Use `2x cos ωt + y sin ωt` in the surface instead of the classical
    /// `2x cos ωt + 2y sin ωt`.
    pub printed_variant: bool,
}

impl Default for ThackerParams {
    fn default() -> Self {
        Self { h0: 0.1, a: 1.0, sigma: 0.5, printed_variant: false }
    }
}

impl ThackerParams {
    pub fn omega(&self, g: f64) -> f64 {
        (2.0 * g * self.h0).sqrt() / self.a
    }

    pub fn period(&self, g: f64) -> f64 {
        2.0 * PI / self.omega(g)
    }

    /// Basin depth below the rest level.
    pub fn depth(&self, x: f64, y: f64) -> f64 {
        self.h0 * (1.0 - (x * x + y * y) / (self.a * self.a))
    }

    /// Exact water height and velocity.
    pub fn exact(&self, x: f64, y: f64, t: f64, g: f64) -> (f64, f64, f64) {
        let w = self.omega(g);
        let (c, s) = ((w * t).cos(), (w * t).sin());
        let ky = if self.printed_variant { 1.0 } else { 2.0 };
        let arg = self.sigma * self.h0 / (self.a * self.a) * (2.0 * x * c + ky * y * s - self.sigma);
        let h = (arg + self.depth(x, y)).max(0.0);
        (h, -self.sigma * w * s, self.sigma * w * c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RestParams {
    pub noise: f64,
    pub seed: u64,
}

impl Default for RestParams {
    fn default() -> Self {
        Self { noise: 0.2, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimpleWaveParams {
    pub amplitude: f64,
    /// Gaussian width in squared degrees.
    pub width: f64,
    /// Gauge position (longitude, latitude) in degrees.
    pub gauge: (f64, f64),
}

impl Default for SimpleWaveParams {
    fn default() -> Self {
        Self { amplitude: 0.1, width: 100.0, gauge: (0.0, 60.0) }
    }
}

/// Cartesian lake at rest over a two-level step in both directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLakeParams {
    pub eta0: f64,
    pub deep: f64,
    pub shallow: f64,
}

impl Default for StepLakeParams {
    fn default() -> Self {
        Self { eta0: 0.25, deep: 1.0, shallow: 0.35 }
    }
}

impl StepLakeParams {
    pub fn depth(&self, x: f64, y: f64) -> f64 {
        if (x < 0.5) ^ (y < 0.3) {
            self.deep
        } else {
            self.shallow
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Scenario {
    Vortex(VortexParams),
    Thacker(ThackerParams),
    SphericalRest(RestParams),
    SimpleWave(SimpleWaveParams),
    StepLake(StepLakeParams),
    /// Lake at rest at `eta0` over a bathymetry supplied per cell (depth,
    /// positive down), e.g. from a raster.
    Bathymetry { eta0: f64 },
}

impl Scenario {
    pub fn from_name(name: &str) -> Option<Scenario> {
        Some(match name.trim().to_ascii_lowercase().as_str() {
            "vortex" => Scenario::Vortex(VortexParams::default()),
            "thacker" => Scenario::Thacker(ThackerParams::default()),
            "spherical_rest" | "rest" => Scenario::SphericalRest(RestParams::default()),
            "simple_wave" => Scenario::SimpleWave(SimpleWaveParams::default()),
            "step_lake" | "lake_at_rest" => Scenario::StepLake(StepLakeParams::default()),
            "bathymetry" | "raster" => Scenario::Bathymetry { eta0: 0.0 },
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Vortex(_) => "vortex",
            Scenario::Thacker(_) => "thacker",
            Scenario::SphericalRest(_) => "spherical_rest",
            Scenario::SimpleWave(_) => "simple_wave",
            Scenario::StepLake(_) => "step_lake",
            Scenario::Bathymetry { .. } => "bathymetry",
        }
    }

    pub fn default_grid(&self) -> GridConfig {
        match self {
            Scenario::Vortex(_) => GridConfig::cartesian((-5.0, 5.0), (-5.0, 5.0), 100, 100),
            Scenario::Thacker(_) => GridConfig::cartesian((-2.0, 2.0), (-2.0, 2.0), 200, 200),
            Scenario::SphericalRest(_) => GridConfig::spherical_deg(1.0e4, (-180.0, 180.0), (-89.5, 89.5), 1.0),
            Scenario::SimpleWave(_) => GridConfig::spherical_deg(1.0e4, (-180.0, 180.0), (-89.5, 89.5), 0.25),
            Scenario::StepLake(_) | Scenario::Bathymetry { .. } => {
                GridConfig::cartesian((0.0, 1.0), (0.0, 1.0), 100, 100)
            }
        }
    }

    pub fn default_bc(&self) -> BoundarySpec {
        match self {
            Scenario::Vortex(_) => BoundarySpec::uniform(BoundaryKind::Periodic),
            Scenario::Thacker(_) | Scenario::StepLake(_) | Scenario::Bathymetry { .. } => {
                BoundarySpec::uniform(BoundaryKind::Wall)
            }
            Scenario::SphericalRest(_) | Scenario::SimpleWave(_) => BoundarySpec::channel(),
        }
    }

    pub fn default_end_time(&self, g: f64) -> f64 {
        match self {
            Scenario::Vortex(_) => 1.0,
            Scenario::Thacker(p) => p.period(g),
            Scenario::SphericalRest(_) => 120.0,
            Scenario::SimpleWave(_) => 3600.0,
            Scenario::StepLake(_) | Scenario::Bathymetry { .. } => 1.0,
        }
    }

    pub fn has_exact(&self) -> bool {
        !matches!(self, Scenario::SimpleWave(_))
    }

    /// Initial cell averages using the tensor Gauss rule with `quad` points
    /// per direction. `bathymetry` supplies per-cell depths for
    /// [`Scenario::Bathymetry`] (row-major over the interior).
    pub fn initialize(&self, grid: &Grid, quad: usize, g: f64, bathymetry: Option<&[f64]>) -> StateField {
        match self {
            Scenario::Vortex(p) => init_vortex(grid, p, quad, g),
            Scenario::Thacker(p) => thacker_field(grid, p, 0.0, quad, g),
            Scenario::SphericalRest(p) => init_spherical_rest(grid, p),
            Scenario::SimpleWave(p) => init_simple_wave(grid, p, quad),
            Scenario::StepLake(p) => init_step_lake(grid, p),
            Scenario::Bathymetry { eta0 } => init_bathymetry(grid, *eta0, bathymetry.unwrap_or(&[])),
        }
    }

    /// Exact solution at `t` where one is known.
    pub fn exact(&self, grid: &Grid, t: f64, quad: usize, g: f64, bathymetry: Option<&[f64]>) -> Option<StateField> {
        match self {
            Scenario::Thacker(p) => Some(thacker_field(grid, p, t, quad, g)),
            Scenario::SimpleWave(_) => None,
            _ => Some(self.initialize(grid, quad, g, bathymetry)),
        }
    }
}

/// H_m(θ, φ) = 2 − cos²(πθ/60)·sin²(πφ/60) with θ, φ in degrees.
pub fn mean_bathymetry(lon_deg: f64, lat_deg: f64) -> f64 {
    let c = (PI * lon_deg / 60.0).cos();
    let s = (PI * lat_deg / 60.0).sin();
    2.0 - c * c * s * s
}

fn for_interior(grid: &Grid, mut f: impl FnMut(usize, (f64, f64))) {
    for j in 0..grid.ny as isize {
        for i in 0..grid.nx as isize {
            f(grid.index(i, j), grid.center(i, j));
        }
    }
}

pub fn init_vortex(grid: &Grid, p: &VortexParams, quad: usize, g: f64) -> StateField {
    let rule = GaussRule::new(quad);
    let mut field = StateField::new(grid);
    let (dx, dy) = (grid.dx, grid.dy);
    for_interior(grid, |k, c| {
        field.a[k] = rule.cell_average(c, dx, dy, |x, y| p.sample(x, y, g).0);
        field.m1[k] = rule.cell_average(c, dx, dy, |x, y| {
            let (h, u, _) = p.sample(x, y, g);
            h * u
        });
        field.m2[k] = rule.cell_average(c, dx, dy, |x, y| {
            let (h, _, v) = p.sample(x, y, g);
            h * v
        });
    });
    field
}

/// Thacker solution at time `t` as cell averages. Cells whose averaged
/// height falls below 1e-8 carry no momentum.
pub fn thacker_field(grid: &Grid, p: &ThackerParams, t: f64, quad: usize, g: f64) -> StateField {
    let rule = GaussRule::new(quad);
    let mut field = StateField::new(grid);
    let (dx, dy) = (grid.dx, grid.dy);
    for_interior(grid, |k, c| {
        field.bathy[k] = rule.cell_average(c, dx, dy, |x, y| p.depth(x, y));
        let h = rule.cell_average(c, dx, dy, |x, y| p.exact(x, y, t, g).0);
        field.a[k] = h;
        if h >= 1e-8 {
            field.m1[k] = rule.cell_average(c, dx, dy, |x, y| {
                let (h, u, _) = p.exact(x, y, t, g);
                h * u
            });
            field.m2[k] = rule.cell_average(c, dx, dy, |x, y| {
                let (h, _, v) = p.exact(x, y, t, g);
                h * v
            });
        }
    });
    field
}

pub fn thacker_exact(grid: &Grid, p: &ThackerParams, t: f64, quad: usize, g: f64) -> StateField {
    thacker_field(grid, p, t, quad, g)
}

/// Water at rest with h = H = H_m + noise, one uniform draw per interior cell
/// in row-major order.
pub fn init_spherical_rest(grid: &Grid, p: &RestParams) -> StateField {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut field = StateField::new(grid);
    let rule = GaussRule::new(3);
    let (dx, dy) = (grid.dx, grid.dy);
    for_interior(grid, |k, c| {
        let hm = rule.cell_average(c, dx, dy, |x, y| mean_bathymetry(x.to_degrees(), y.to_degrees()));
        let depth = hm + p.noise * rng.gen::<f64>();
        let hs = depth * field.sigma_bar[k];
        field.bathy[k] = hs;
        field.a[k] = hs;
    });
    field
}

pub fn init_simple_wave(grid: &Grid, p: &SimpleWaveParams, quad: usize) -> StateField {
    let rule = GaussRule::new(quad);
    let mut field = StateField::new(grid);
    let (dx, dy) = (grid.dx, grid.dy);
    let cos = |y: f64| if grid.is_spherical() { y.cos() } else { 1.0 };
    let deg = |v: f64| if grid.is_spherical() { v.to_degrees() } else { v };
    for_interior(grid, |k, c| {
        let depth = |x: f64, y: f64| mean_bathymetry(deg(x), deg(y));
        let bump = |x: f64, y: f64| {
            let (lx, ly) = (deg(x), deg(y));
            p.amplitude * (-(lx * lx + ly * ly) / p.width).exp()
        };
        field.bathy[k] = rule.cell_average(c, dx, dy, |x, y| depth(x, y) * cos(y));
        field.a[k] = field.bathy[k] + rule.cell_average(c, dx, dy, |x, y| bump(x, y) * cos(y));
    });
    field
}

pub fn init_step_lake(grid: &Grid, p: &StepLakeParams) -> StateField {
    let mut field = StateField::new(grid);
    for_interior(grid, |k, (x, y)| {
        let depth = p.depth(x, y);
        field.bathy[k] = depth * field.sigma_bar[k];
        field.a[k] = ((depth + p.eta0) * field.sigma_bar[k]).max(0.0);
    });
    field
}

/// Lake at rest at level `eta0` over per-cell depths (row-major interior).
/// Cells above the lake level are dry.
pub fn init_bathymetry(grid: &Grid, eta0: f64, depth: &[f64]) -> StateField {
    let mut field = StateField::new(grid);
    let mut n = 0;
    for_interior(grid, |k, _| {
        let d = depth.get(n).copied().unwrap_or(0.0);
        n += 1;
        field.bathy[k] = d * field.sigma_bar[k];
        field.a[k] = ((d + eta0) * field.sigma_bar[k]).max(0.0);
    });
    field
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    A,
    M1,
    M2,
}

/// Σ |u_i − ref_i|·|Ω_i| over interior cells.
pub fn l1_error(field: &StateField, reference: &StateField, grid: &Grid, component: Component) -> f64 {
    fn pick(f: &StateField, c: Component) -> &[f64] {
        match c {
            Component::A => &f.a,
            Component::M1 => &f.m1,
            Component::M2 => &f.m2,
        }
    }
    let (u, r) = (pick(field, component), pick(reference, component));
    let mut s = 0.0;
    for j in 0..grid.ny as isize {
        for i in 0..grid.nx as isize {
            let k = grid.index(i, j);
            s += (u[k] - r[k]).abs();
        }
    }
    s * grid.cell_area()
}

/// L¹ distance of the water column from `reference`, divided by the L¹
/// norm of the reference column.
pub fn relative_drift(field: &StateField, reference: &StateField, grid: &Grid) -> f64 {
    let scale = l1_error(reference, &StateField::new(grid), grid, Component::A);
    l1_error(field, reference, grid, Component::A) / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    const G: f64 = 9.81;

    #[test]
    fn vortex_values() {
        let p = VortexParams::default();
        let (h, u, v) = p.sample(0.0, 0.0, G);
        assert!((h - (2.0 - (2.0f64).exp() / (4.0 * G))).abs() < 1e-15);
        assert!((h - 1.811_696).abs() < 1e-6);
        assert_eq!((u, v), (0.0, 0.0));
        let (h, u, v) = p.sample(30.0, 0.0, G);
        assert_eq!(h, 2.0);
        assert!(u.abs() < 1e-300 && v.abs() < 1e-300);
    }

    #[test]
    fn vortex_is_steady() {
        // g dh/dr = v̄² r e^{2α(1−r²)}: the radial balance of pressure and centrifugal force
        let p = VortexParams::default();
        for &r in &[0.1, 0.5, 1.0, 1.7, 2.5] {
            let d = 1e-6;
            let dh = (p.sample(r + d, 0.0, G).0 - p.sample(r - d, 0.0, G).0) / (2.0 * d);
            let (_, _, v) = p.sample(r, 0.0, G);
            assert!((G * dh - v * v / r).abs() < 1e-8);
        }
    }

    #[test]
    fn thacker_values() {
        let p = ThackerParams::default();
        assert!((p.omega(G) - 1.400_714).abs() < 1e-6);
        let (h, u, v) = p.exact(0.0, 0.0, 0.0, G);
        assert!((h - 0.075).abs() < 1e-15);
        assert_eq!(u, 0.0);
        assert!((v - 0.700_357).abs() < 1e-6);
        assert_eq!(p.exact(2.0, 0.0, 0.0, G).0, 0.0);
        let t = p.period(G);
        for &(x, y) in &[(0.3, -0.2), (-0.7, 0.1), (0.0, 0.9)] {
            let (a, b) = (p.exact(x, y, 0.0, G), p.exact(x, y, t, G));
            assert!((a.0 - b.0).abs() < 1e-14 && (a.1 - b.1).abs() < 1e-14 && (a.2 - b.2).abs() < 1e-14);
        }
    }

    #[test]
    fn mean_bathymetry_values() {
        assert_eq!(mean_bathymetry(0.0, 0.0), 2.0);
        assert!((mean_bathymetry(15.0, 15.0) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn spherical_rest_is_reproducible_and_at_rest() {
        let cfg = GridConfig::spherical_deg(1.0e4, (-20.0, 20.0), (-30.0, 30.0), 2.0);
        let bc = BoundarySpec::channel();
        let grid = build_grid(&cfg, &bc).unwrap();
        let p = RestParams { seed: 42, ..RestParams::default() };
        let a = init_spherical_rest(&grid, &p);
        let b = init_spherical_rest(&grid, &p);
        assert_eq!(a, b);
        for (i, j) in a.interior() {
            let k = grid.index(i, j);
            assert_eq!(a.a[k], a.bathy[k]);
            let depth = a.a[k] / a.sigma_bar[k];
            let (lon, lat) = grid.center(i, j);
            let hm = mean_bathymetry(lon.to_degrees(), lat.to_degrees());
            assert!(depth > hm - 0.01 && depth < hm + 0.21);
        }
        let c = init_spherical_rest(&grid, &RestParams { seed: 43, ..p });
        assert_ne!(a, c);
    }

    #[test]
    fn simple_wave_peak() {
        let cfg = GridConfig::spherical_deg(1.0e4, (-10.0, 10.0), (-10.0, 10.0), 1.0);
        let grid = build_grid(&cfg, &BoundarySpec::channel()).unwrap();
        let f = init_simple_wave(&grid, &SimpleWaveParams::default(), 2);
        let k = grid.index(10, 10);
        // average over the 1° cell just north-east of the peak
        assert!((f.eta(k) - 0.1).abs() < 0.003);
        let far = grid.index(0, 0);
        assert!(f.eta(far) < 0.02);
    }

    #[test]
    fn l1_examples() {
        let cfg = GridConfig::cartesian((0.0, 1.0), (0.0, 1.0), 4, 4);
        let grid = build_grid(&cfg, &BoundarySpec::uniform(BoundaryKind::Wall)).unwrap();
        let a = StateField::new(&grid);
        assert_eq!(l1_error(&a, &a, &grid, Component::A), 0.0);
        let mut b = a.clone();
        let mut c = a.clone();
        for (i, j) in a.interior() {
            let k = grid.index(i, j);
            b.a[k] = 0.125;
            c.m1[k] = if (i + j) % 2 == 0 { 0.5 } else { -0.5 };
        }
        assert_eq!(l1_error(&b, &a, &grid, Component::A), 0.125);
        assert_eq!(l1_error(&c, &a, &grid, Component::M1), 0.5);
    }
}
