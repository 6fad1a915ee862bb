//! Uniform structured grids in the x-y plane or the longitude-latitude (θ-φ)
//! plane, padded with a two-cell ghost halo.
//!
//! Cell `(i, j)` with `0 <= i < nx`, `0 <= j < ny` is interior; indices in
//! `-2..0` and `n..n+2` address the halo. In spherical mode all coordinates
//! are radians, `x` is longitude and `y` is latitude.

use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

/// Ghost-layer width. The 13-cell diamond stencil reaches two cells away.
pub const HALO: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("cell counts must be positive (got nx = {nx}, ny = {ny})")]
    EmptyGrid { nx: usize, ny: usize },
    #[error("domain extent along {axis} must be positive and finite")]
    BadExtent { axis: &'static str },
    #[error("cell size along {axis} does not divide the domain extent")]
    IndivisibleExtent { axis: &'static str },
    #[error("either a cell count or a cell size is required along {axis}")]
    MissingResolution { axis: &'static str },
    #[error("sphere radius must be positive")]
    BadRadius,
    #[error("spherical domain touches or crosses a pole at latitude {latitude_deg:.4} degrees")]
    PoleCrossing { latitude_deg: f64 },
    #[error("periodic boundaries must be declared on both {pair} sides or neither")]
    UnpairedPeriodic { pair: &'static str },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Geometry {
    Cartesian,
    Spherical { radius: f64 },
}

impl Geometry {
    pub fn is_spherical(&self) -> bool {
        matches!(self, Geometry::Spherical { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    Periodic,
    Wall,
    Open,
}

impl std::str::FromStr for BoundaryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "periodic" => Ok(BoundaryKind::Periodic),
            "wall" => Ok(BoundaryKind::Wall),
            "open" => Ok(BoundaryKind::Open),
            other => Err(format!("unknown boundary kind `{other}` (expected periodic, wall or open)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundarySpec {
    pub west: BoundaryKind,
    pub east: BoundaryKind,
    pub south: BoundaryKind,
    pub north: BoundaryKind,
}

impl BoundarySpec {
    pub fn uniform(kind: BoundaryKind) -> Self {
        Self { west: kind, east: kind, south: kind, north: kind }
    }

    /// Periodic east-west, walls at the southern and northern edges.
    pub fn channel() -> Self {
        Self {
            west: BoundaryKind::Periodic,
            east: BoundaryKind::Periodic,
            south: BoundaryKind::Wall,
            north: BoundaryKind::Wall,
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let px = (self.west == BoundaryKind::Periodic) as u8 + (self.east == BoundaryKind::Periodic) as u8;
        if px == 1 {
            return Err(GridError::UnpairedPeriodic { pair: "west/east" });
        }
        let py = (self.south == BoundaryKind::Periodic) as u8 + (self.north == BoundaryKind::Periodic) as u8;
        if py == 1 {
            return Err(GridError::UnpairedPeriodic { pair: "south/north" });
        }
        Ok(())
    }
}

/// Grid section of a run configuration. Spherical extents and cell sizes are
/// given in degrees; each direction needs either a count or a cell size.
#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub geometry: Geometry,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub dx: Option<f64>,
    pub dy: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry::Cartesian,
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
            nx: None,
            ny: None,
            dx: None,
            dy: None,
        }
    }
}

impl GridConfig {
    pub fn cartesian(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Self {
        Self {
            geometry: Geometry::Cartesian,
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
            nx: Some(nx),
            ny: Some(ny),
            dx: None,
            dy: None,
        }
    }

    /// Longitude/latitude box in degrees with square cells of `cell_deg`.
    pub fn spherical_deg(radius: f64, lon: (f64, f64), lat: (f64, f64), cell_deg: f64) -> Self {
        Self {
            geometry: Geometry::Spherical { radius },
            x_min: lon.0,
            x_max: lon.1,
            y_min: lat.0,
            y_max: lat.1,
            nx: None,
            ny: None,
            dx: Some(cell_deg),
            dy: Some(cell_deg),
        }
    }
}

fn resolve_count(
    axis: &'static str,
    extent: f64,
    count: Option<usize>,
    size: Option<f64>,
) -> Result<usize, GridError> {
    if !(extent.is_finite() && extent > 0.0) {
        return Err(GridError::BadExtent { axis });
    }
    match (count, size) {
        (Some(n), _) => Ok(n),
        (None, Some(d)) => {
            if !(d.is_finite() && d > 0.0) {
                return Err(GridError::BadExtent { axis });
            }
            let n = (extent / d).round();
            if n < 1.0 || ((n * d - extent) / extent).abs() > 1e-9 {
                return Err(GridError::IndivisibleExtent { axis });
            }
            Ok(n as usize)
        }
        (None, None) => Err(GridError::MissingResolution { axis }),
    }
}

/// Immutable grid description. Wall boundaries on a sphere mirror the ghost
/// rows' geometry as well as their state, which lets a wall sit close to a
/// pole (e.g. at ±89.5°) without a ghost row crossing it.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub x0: f64,
    pub y0: f64,
    pub geometry: Geometry,
    pub halo: usize,
    mirror_south: bool,
    mirror_north: bool,
}

/// Builds a grid from its configuration section and the boundary conditions that
/// will be applied to it.
pub fn build_grid(cfg: &GridConfig, bc: &BoundarySpec) -> Result<Grid, GridError> {
    bc.validate()?;
    let (scale, radius) = match cfg.geometry {
        Geometry::Cartesian => (1.0, None),
        Geometry::Spherical { radius } => {
            if !(radius.is_finite() && radius > 0.0) {
                return Err(GridError::BadRadius);
            }
            (std::f64::consts::PI / 180.0, Some(radius))
        }
    };
    let nx = resolve_count("x", cfg.x_max - cfg.x_min, cfg.nx, cfg.dx)?;
    let ny = resolve_count("y", cfg.y_max - cfg.y_min, cfg.ny, cfg.dy)?;
    if nx == 0 || ny == 0 {
        return Err(GridError::EmptyGrid { nx, ny });
    }
    let dx = (cfg.x_max - cfg.x_min) * scale / nx as f64;
    let dy = (cfg.y_max - cfg.y_min) * scale / ny as f64;
    let grid = Grid {
        nx,
        ny,
        dx,
        dy,
        x0: cfg.x_min * scale,
        y0: cfg.y_min * scale,
        geometry: cfg.geometry,
        halo: HALO,
        mirror_south: radius.is_some() && bc.south == BoundaryKind::Wall,
        mirror_north: radius.is_some() && bc.north == BoundaryKind::Wall,
    };
    if radius.is_some() {
        let y_lo = grid.y0;
        let y_hi = grid.y0 + ny as f64 * dy;
        let reach_lo = if grid.mirror_south { y_lo } else { y_lo - HALO as f64 * dy };
        let reach_hi = if grid.mirror_north { y_hi } else { y_hi + HALO as f64 * dy };
        for lat in [reach_lo, reach_hi] {
            if lat.abs() >= FRAC_PI_2 * (1.0 - 1e-12) {
                return Err(GridError::PoleCrossing { latitude_deg: lat.to_degrees() });
            }
        }
    }
    Ok(grid)
}

impl Grid {
    /// Total row length including the halo.
    #[inline]
    pub fn stride(&self) -> usize {
        self.nx + 2 * HALO
    }

    /// Number of stored cells including the halo.
    #[inline]
    pub fn len(&self) -> usize {
        self.stride() * (self.ny + 2 * HALO)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: isize, j: isize) -> usize {
        debug_assert!(i >= -(HALO as isize) && i < (self.nx + HALO) as isize);
        debug_assert!(j >= -(HALO as isize) && j < (self.ny + HALO) as isize);
        (j + HALO as isize) as usize * self.stride() + (i + HALO as isize) as usize
    }

    pub fn center(&self, i: isize, j: isize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.dx,
            self.y0 + (j as f64 + 0.5) * self.dy,
        )
    }

    pub fn radius(&self) -> f64 {
        match self.geometry {
            Geometry::Cartesian => 1.0,
            Geometry::Spherical { radius } => radius,
        }
    }

    pub fn is_spherical(&self) -> bool {
        self.geometry.is_spherical()
    }

    /// Coordinate-plane cell measure Δx·Δy (Δθ·Δφ on the sphere).
    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Row whose geometry ghost row `j` carries; walls on a sphere reflect it.
    pub fn geometric_row(&self, j: isize) -> isize {
        let ny = self.ny as isize;
        if j < 0 && self.mirror_south {
            (-1 - j).min(ny - 1)
        } else if j >= ny && self.mirror_north {
            (2 * ny - 1 - j).max(0)
        } else {
            j
        }
    }

    /// σ = cos φ at latitude `y` (1 in Cartesian mode).
    #[inline]
    pub fn sigma_at(&self, y: f64) -> f64 {
        if self.is_spherical() {
            y.cos()
        } else {
            1.0
        }
    }

    /// ∂σ/∂φ = -sin φ at latitude `y` (0 in Cartesian mode).
    #[inline]
    pub fn dsigma_at(&self, y: f64) -> f64 {
        if self.is_spherical() {
            -y.sin()
        } else {
            0.0
        }
    }

    /// Exact average of cos φ over cell row `j`.
    pub fn sigma_cell_average(&self, j: isize) -> f64 {
        if !self.is_spherical() {
            return 1.0;
        }
        let j = self.geometric_row(j);
        let bottom = self.y0 + j as f64 * self.dy;
        let top = bottom + self.dy;
        (top.sin() - bottom.sin()) / self.dy
    }
}

/// Cell averages of the conserved variables plus bathymetry and σ̄, stored
/// row-major over the grid including its halo.
///
/// Components are `(h, q_x, q_y)` on a Cartesian grid and `(h_σ, Q_θ, Q_φ)`
/// on a sphere; `bathy` holds H (Cartesian) or H·cos φ (spherical) averages.
#[derive(Clone, Debug, PartialEq)]
pub struct StateField {
    pub nx: usize,
    pub ny: usize,
    pub a: Vec<f64>,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub bathy: Vec<f64>,
    pub sigma_bar: Vec<f64>,
}

impl StateField {
    /// Zero state with geometric σ̄ on every cell.
    pub fn new(grid: &Grid) -> Self {
        let n = grid.len();
        let mut sigma_bar = vec![1.0; n];
        for j in -(HALO as isize)..(grid.ny + HALO) as isize {
            let s = grid.sigma_cell_average(j);
            for i in -(HALO as isize)..(grid.nx + HALO) as isize {
                sigma_bar[grid.index(i, j)] = s;
            }
        }
        Self {
            nx: grid.nx,
            ny: grid.ny,
            a: vec![0.0; n],
            m1: vec![0.0; n],
            m2: vec![0.0; n],
            bathy: vec![0.0; n],
            sigma_bar,
        }
    }

    /// Iterator over interior `(i, j)` pairs, row by row.
    pub fn interior(&self) -> impl Iterator<Item = (isize, isize)> + '_ {
        (0..self.ny as isize).flat_map(move |j| (0..self.nx as isize).map(move |i| (i, j)))
    }

    /// Free-surface average η (η_σ/σ̄ on a sphere) of a stored cell.
    pub fn eta(&self, k: usize) -> f64 {
        (self.a[k] - self.bathy[k]) / self.sigma_bar[k]
    }

    /// Σ a_i·|Ω_i| over interior cells.
    pub fn total_volume(&self, grid: &Grid) -> f64 {
        self.interior().map(|(i, j)| self.a[grid.index(i, j)]).sum::<f64>() * grid.cell_area()
    }
}

#[derive(Clone, Copy)]
enum Source {
    Copy(isize),
    Mirror(isize),
    /// Nearest interior cell, rescaled to the ghost row's σ̄.
    Extrapolate(isize),
}

fn ghost_source(kind: BoundaryKind, n: usize, g: isize, low_side: bool) -> Source {
    let n = n as isize;
    // g = 1 is the ghost adjacent to the boundary
    match (kind, low_side) {
        (BoundaryKind::Periodic, true) => Source::Copy((-g).rem_euclid(n)),
        (BoundaryKind::Periodic, false) => Source::Copy((n - 1 + g).rem_euclid(n)),
        (BoundaryKind::Wall, true) => Source::Mirror((g - 1).min(n - 1)),
        (BoundaryKind::Wall, false) => Source::Mirror((n - g).max(0)),
        (BoundaryKind::Open, true) => Source::Extrapolate(0),
        (BoundaryKind::Open, false) => Source::Extrapolate(n - 1),
    }
}

/// Fills the halo according to `bc`: periodic copies the opposite strip,
/// wall mirrors with the wall-normal momentum negated, open extrapolates the
/// nearest interior cell. Bathymetry follows the state without sign change.
/// Columns are filled before rows so the corners are consistent.
pub fn fill_ghosts(field: &mut StateField, grid: &Grid, bc: &BoundarySpec) {
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let h = HALO as isize;

    let copy_cell = |f: &mut StateField, dst: usize, src: usize, flip1: bool, flip2: bool, scale: f64| {
        f.a[dst] = f.a[src] * scale;
        f.m1[dst] = if flip1 { -f.m1[src] } else { f.m1[src] * scale };
        f.m2[dst] = if flip2 { -f.m2[src] } else { f.m2[src] * scale };
        f.bathy[dst] = f.bathy[src] * scale;
    };

    for j in 0..ny {
        for g in 1..=h {
            for (kind, low) in [(bc.west, true), (bc.east, false)] {
                let ig = if low { -g } else { nx - 1 + g };
                let dst = grid.index(ig, j);
                match ghost_source(kind, grid.nx, g, low) {
                    Source::Copy(s) | Source::Extrapolate(s) => {
                        copy_cell(field, dst, grid.index(s, j), false, false, 1.0)
                    }
                    Source::Mirror(s) => copy_cell(field, dst, grid.index(s, j), true, false, 1.0),
                }
            }
        }
    }
    for g in 1..=h {
        for (kind, low) in [(bc.south, true), (bc.north, false)] {
            let jg = if low { -g } else { ny - 1 + g };
            let sigma_ghost = grid.sigma_cell_average(jg);
            for i in -h..nx + h {
                let dst = grid.index(i, jg);
                field.sigma_bar[dst] = sigma_ghost;
                match ghost_source(kind, grid.ny, g, low) {
                    Source::Copy(s) => copy_cell(field, dst, grid.index(i, s), false, false, 1.0),
                    Source::Mirror(s) => copy_cell(field, dst, grid.index(i, s), false, true, 1.0),
                    Source::Extrapolate(s) => {
                        let src = grid.index(i, s);
                        let scale = sigma_ghost / field.sigma_bar[src];
                        copy_cell(field, dst, src, false, false, scale)
                    }
                }
            }
        }
    }
}
