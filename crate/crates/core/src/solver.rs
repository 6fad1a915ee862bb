//! Semidiscrete well-balanced finite-volume operator and SSP-RK3 time
//! stepping.
//!
//! Every edge quadrature point is solved once; the two one-sided
//! contributions are stored per edge and each cell gathers its own four
//! edges in W, E, S, N order followed by the volume terms, so results do not
//! depend on the number of worker threads.

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{fill_ghosts, BoundaryKind, BoundarySpec, Grid, GridError, StateField};
use crate::physics::{flux_1d, geometric_source, State};
use crate::reconstruction::{
    basis_gradients, basis_len, basis_values, dot_upto, positivity_theta, Cweno, CwenoParams, EpsLaw, Poly, ReconstructionError,
    Variant, N_COEFFS, STENCIL_LEN, STENCIL_OFFSETS,
};
use crate::riemann::{hllc_fluctuation, RiemannInput};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid scheme configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Reconstruction(#[from] ReconstructionError),
    #[error("every cell is dry; no stable time step exists")]
    AllDry,
    #[error("non-finite state in cell ({i}, {j}) at t = {t}")]
    NonFinite { i: usize, j: usize, t: f64 },
    #[error("step limit of {0} reached before the end time")]
    MaxSteps(u64),
    #[error("observer failed: {0}")]
    Observer(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig {
    pub variant: Variant,
    pub cfl: f64,
    pub g: f64,
    /// Gauss points per edge.
    pub quad_edge: usize,
    /// Gauss points per direction inside a cell.
    pub quad_vol: usize,
    pub end_time: f64,
    pub h_dry: f64,
    /// Columns thinner than this get desingularized velocities.
    pub h_vel: f64,
    pub eps_law: EpsLaw,
    pub d0: f64,
    pub dr: f64,
    pub max_steps: u64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self::for_variant(Variant::P2P1)
    }
}

impl SchemeConfig {
    /// Defaults with two Gauss points per direction at order 3, three at order 4.
    pub fn for_variant(variant: Variant) -> Self {
        let q = if variant.order() == 3 { 2 } else { 3 };
        Self {
            variant,
            cfl: 0.5,
            g: 9.81,
            quad_edge: q,
            quad_vol: q,
            end_time: 0.0,
            h_dry: 1e-8,
            h_vel: 1e-4,
            eps_law: CwenoParams::with_variant(variant).eps_law,
            d0: 0.75,
            dr: 0.0625,
            max_steps: 50_000_000,
        }
    }

    pub fn order(&self) -> u32 {
        self.variant.order()
    }

    pub fn cweno_params(&self) -> CwenoParams {
        CwenoParams { variant: self.variant, d0: self.d0, dr: self.dr, eps_law: self.eps_law, h_dry: self.h_dry }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(SolverError::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(SolverError::Config(format!("g must be positive, got {}", self.g)));
        }
        if !(2..=3).contains(&self.quad_edge) || !(2..=3).contains(&self.quad_vol) {
            return Err(SolverError::Config("quadrature must use 2 or 3 points per direction".into()));
        }
        let needed = if self.order() == 3 { 2 } else { 3 };
        if self.quad_edge < needed || self.quad_vol < needed {
            return Err(SolverError::Config(format!(
                "order {} needs at least {needed} Gauss points per direction",
                self.order()
            )));
        }
        if !(self.h_dry > 0.0 && self.h_dry.is_finite()) {
            return Err(SolverError::Config("h_dry must be positive".into()));
        }
        if !(self.h_vel >= 0.0 && self.h_vel.is_finite()) {
            return Err(SolverError::Config("h_vel must be non-negative".into()));
        }
        if !(self.end_time >= 0.0) {
            return Err(SolverError::Config("end_time must be non-negative".into()));
        }
        self.cweno_params().validate()?;
        Ok(())
    }
}

/// Momentum factor turning u = m/h into √2·h·m/√(h⁴ + max(h⁴, ε⁴)), which
/// stays bounded as h → 0 and is exactly 1 for h ≥ ε.
pub fn desingularize(h: f64, eps: f64) -> f64 {
    if h >= eps {
        return 1.0;
    }
    std::f64::consts::SQRT_2 * h * h / (h.powi(4) + eps.powi(4)).sqrt()
}

/// Gauss-Legendre rule on [-1/2, 1/2] with weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(points: usize) -> Self {
        match points {
            1 => Self { nodes: vec![0.0], weights: vec![1.0] },
            2 => {
                let x = 0.5 / 3f64.sqrt();
                Self { nodes: vec![-x, x], weights: vec![0.5, 0.5] }
            }
            3 => {
                let x = 0.5 * 0.6f64.sqrt();
                Self { nodes: vec![-x, 0.0, x], weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0] }
            }
            4 => {
                let a = 0.5 * (3.0 / 7.0 - 2.0 / 7.0 * 1.2f64.sqrt()).sqrt();
                let b = 0.5 * (3.0 / 7.0 + 2.0 / 7.0 * 1.2f64.sqrt()).sqrt();
                let wa = (18.0 + 30f64.sqrt()) / 72.0;
                let wb = (18.0 - 30f64.sqrt()) / 72.0;
                Self { nodes: vec![-b, -a, a, b], weights: vec![wb, wa, wa, wb] }
            }
            n => panic!("no Gauss rule with {n} points"),
        }
    }

    /// Tensor-rule average of `f` over the cell centred at `center`.
    pub fn cell_average(&self, center: (f64, f64), dx: f64, dy: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut s = 0.0;
        for (&ny, &wy) in self.nodes.iter().zip(&self.weights) {
            for (&nx, &wx) in self.nodes.iter().zip(&self.weights) {
                s += wx * wy * f(center.0 + nx * dx, center.1 + ny * dy);
            }
        }
        s
    }
}

/// Reconstructed polynomials of one cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellReconstruction {
    pub h: Poly,
    pub m1: Poly,
    pub m2: Poly,
    pub f: Poly,
    pub eta_bar: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Recon {
    a: [f64; N_COEFFS],
    m1: [f64; N_COEFFS],
    m2: [f64; N_COEFFS],
    f: [f64; N_COEFFS],
    eta_bar: f64,
}

/// One side of an edge point: state and free surface (η·σ on a sphere).
#[derive(Clone, Copy, Debug)]
struct Trace {
    w: State,
    eta: f64,
}

#[derive(Clone, Debug)]
struct Tables {
    edge_w: Vec<f64>,
    east: Vec<[f64; N_COEFFS]>,
    west: Vec<[f64; N_COEFFS]>,
    north: Vec<[f64; N_COEFFS]>,
    south: Vec<[f64; N_COEFFS]>,
    vol_w: Vec<f64>,
    vol: Vec<[f64; N_COEFFS]>,
    vol_gx: Vec<[f64; N_COEFFS]>,
    vol_gy: Vec<[f64; N_COEFFS]>,
    /// Every point the scheme evaluates a reconstruction at.
    all_points: Vec<[f64; N_COEFFS]>,
    /// Largest |basis value| over `all_points`, per coefficient.
    point_bound: [f64; N_COEFFS],
    /// σ at x-edge points, `ny × quad_edge`.
    sigma_x: Vec<f64>,
    /// σ along each y-edge row, `ny + 1`.
    sigma_y: Vec<f64>,
    /// σ and ∂σ/∂φ at volume points, `ny × quad_vol²`.
    sigma_v: Vec<f64>,
    dsigma_v: Vec<f64>,
    /// cos φ at cell centres, `ny`.
    sigma_c: Vec<f64>,
}

impl Tables {
    fn new(grid: &Grid, cfg: &SchemeConfig) -> Self {
        let (dx, dy) = (grid.dx, grid.dy);
        let er = GaussRule::new(cfg.quad_edge);
        let vr = GaussRule::new(cfg.quad_vol);
        let east: Vec<_> = er.nodes.iter().map(|&s| basis_values(0.5 * dx, s * dy, dx, dy)).collect();
        let west: Vec<_> = er.nodes.iter().map(|&s| basis_values(-0.5 * dx, s * dy, dx, dy)).collect();
        let north: Vec<_> = er.nodes.iter().map(|&s| basis_values(s * dx, 0.5 * dy, dx, dy)).collect();
        let south: Vec<_> = er.nodes.iter().map(|&s| basis_values(s * dx, -0.5 * dy, dx, dy)).collect();
        let mut vol = Vec::new();
        let mut vol_gx = Vec::new();
        let mut vol_gy = Vec::new();
        let mut vol_w = Vec::new();
        let mut vol_off = Vec::new();
        for (&ny, &wy) in vr.nodes.iter().zip(&vr.weights) {
            for (&nx, &wx) in vr.nodes.iter().zip(&vr.weights) {
                let (xi, zeta) = (nx * dx, ny * dy);
                vol.push(basis_values(xi, zeta, dx, dy));
                let (gx, gy) = basis_gradients(xi, zeta);
                vol_gx.push(gx);
                vol_gy.push(gy);
                vol_w.push(wx * wy);
                vol_off.push(zeta);
            }
        }
        let all_points: Vec<[f64; N_COEFFS]> =
            east.iter().chain(&west).chain(&north).chain(&south).chain(&vol).copied().collect();
        let mut point_bound = [0.0f64; N_COEFFS];
        for b in &all_points {
            for k in 0..N_COEFFS {
                point_bound[k] = point_bound[k].max(b[k].abs());
            }
        }

        let ny = grid.ny as isize;
        let mut sigma_x = Vec::new();
        let mut sigma_v = Vec::new();
        let mut dsigma_v = Vec::new();
        let mut sigma_c = Vec::new();
        for j in 0..ny {
            let yc = grid.center(0, j).1;
            sigma_c.push(grid.sigma_at(yc));
            for &s in &er.nodes {
                sigma_x.push(grid.sigma_at(yc + s * dy));
            }
            for &z in &vol_off {
                sigma_v.push(grid.sigma_at(yc + z));
                dsigma_v.push(grid.dsigma_at(yc + z));
            }
        }
        let sigma_y = (0..=ny).map(|j| grid.sigma_at(grid.y0 + j as f64 * dy)).collect();
        Self {
            edge_w: er.weights,
            east,
            west,
            north,
            south,
            vol_w,
            vol,
            vol_gx,
            vol_gy,
            all_points,
            point_bound,
            sigma_x,
            sigma_y,
            sigma_v,
            dsigma_v,
            sigma_c,
        }
    }
}

/// Summary of an `advance_to` call.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepLog {
    pub steps: u64,
    pub t_final: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Stage-level clamps of negative water columns.
    pub clamp_events: u64,
    /// Deepest negative column removed by a clamp, in units of h (≥ 0).
    pub clamp_depth: f64,
    /// Interior cells times steps.
    pub cell_steps: u64,
}

/// Callback driven by `advance_to`.
pub trait Observer {
    /// Instants the run must land on exactly.
    fn sample_times(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Called once before the first step and after every step.
    fn observe(&mut self, t: f64, field: &StateField, grid: &Grid) -> Result<(), String>;
}

/// Precomputed operator for one grid, boundary conditions and scheme, with its
/// stage buffers.
#[derive(Clone, Debug)]
pub struct Solver {
    grid: Grid,
    bc: BoundarySpec,
    cfg: SchemeConfig,
    cweno: Cweno,
    tables: Tables,
    recon: Vec<Recon>,
    xflux: Vec<[State; 2]>,
    yflux: Vec<[State; 2]>,
    rates: Vec<State>,
    wet: Vec<bool>,
    stencil: [isize; STENCIL_LEN],
    /// Coefficients in use at the central degree.
    n_coeffs: usize,
    clamp_events: u64,
    clamp_depth: f64,
}

#[inline]
fn mirror_normal(t: Trace, normal_is_x: bool) -> Trace {
    let w = if normal_is_x { State::new(t.w.a, -t.w.m1, t.w.m2) } else { State::new(t.w.a, t.w.m1, -t.w.m2) };
    Trace { w, eta: t.eta }
}

impl Solver {
    pub fn new(grid: &Grid, bc: &BoundarySpec, cfg: &SchemeConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        bc.validate()?;
        let cweno = Cweno::new(&cfg.cweno_params(), grid.dx, grid.dy)?;
        let (nx, ny) = (grid.nx, grid.ny);
        let stride = grid.stride() as isize;
        let stencil = STENCIL_OFFSETS.map(|(di, dj)| dj as isize * stride + di as isize);
        Ok(Self {
            grid: grid.clone(),
            bc: *bc,
            cfg: *cfg,
            cweno,
            tables: Tables::new(grid, cfg),
            recon: vec![Recon::default(); nx * ny],
            xflux: vec![[State::ZERO; 2]; (nx + 1) * ny],
            yflux: vec![[State::ZERO; 2]; nx * (ny + 1)],
            rates: vec![State::ZERO; nx * ny],
            wet: vec![false; grid.len()],
            stencil,
            n_coeffs: basis_len(cfg.variant.central_degree())?,
            clamp_events: 0,
            clamp_depth: 0.0,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn boundary(&self) -> &BoundarySpec {
        &self.bc
    }

    #[inline]
    fn is_wet(&self, field: &StateField, k: usize) -> bool {
        field.a[k] >= self.cfg.h_dry * field.sigma_bar[k]
    }

    /// Zeroes momenta of dry cells, then fills the halo.
    pub fn prepare(&self, field: &mut StateField) {
        for (i, j) in self.interior() {
            let k = self.grid.index(i, j);
            if !self.is_wet(field, k) {
                field.m1[k] = 0.0;
                field.m2[k] = 0.0;
            }
        }
        fill_ghosts(field, &self.grid, &self.bc);
    }

    fn interior(&self) -> impl Iterator<Item = (isize, isize)> {
        let (nx, ny) = (self.grid.nx as isize, self.grid.ny as isize);
        (0..ny).flat_map(move |j| (0..nx).map(move |i| (i, j)))
    }

    /// f_j = η_σ,j − η̄_i·σ̄_j over the 13-cell stencil of interior cell (i, j).
    pub fn fluctuation_data(&self, field: &StateField, i: usize, j: usize) -> [f64; STENCIL_LEN] {
        let k0 = self.grid.index(i as isize, j as isize);
        let eta_bar = field.eta(k0);
        let mut f = [0.0; STENCIL_LEN];
        for s in 1..STENCIL_LEN {
            let k = (k0 as isize + self.stencil[s]) as usize;
            f[s] = (field.a[k] - field.bathy[k]) - eta_bar * field.sigma_bar[k];
        }
        f
    }

    fn reconstruct_cell(&self, field: &StateField, i: usize, j: usize) -> Recon {
        let k0 = self.grid.index(i as isize, j as isize);
        let a0 = field.a[k0];
        let eta_bar = field.eta(k0);
        let mut r = Recon { eta_bar, ..Recon::default() };
        if !self.wet[k0] {
            r.a[0] = a0;
            return r;
        }
        let mut ua = [0.0; STENCIL_LEN];
        let mut u1 = [0.0; STENCIL_LEN];
        let mut u2 = [0.0; STENCIL_LEN];
        let mut mask: u16 = 0;
        for s in 0..STENCIL_LEN {
            let k = (k0 as isize + self.stencil[s]) as usize;
            ua[s] = field.a[k];
            u1[s] = field.m1[k];
            u2[s] = field.m2[k];
            if self.wet[k] {
                mask |= 1 << s;
            }
        }
        let ra = self.cweno.reconstruct(&ua, mask);
        let (b0, s0) = (field.bathy[k0], field.sigma_bar[k0]);
        let level = self.stencil.iter().all(|&o| {
            let k = (k0 as isize + o) as usize;
            field.bathy[k] == b0 && field.sigma_bar[k] == s0
        });
        let mut theta = 1.0;
        let thin_floor = self.cfg.h_vel * s0;
        let mut thin = a0 < thin_floor;
        if ra.degree > 0 {
            let floor = self.cfg.h_dry * s0;
            let n = self.n_coeffs;
            let spread: f64 = (1..n).map(|k| ra.coeffs[k].abs() * self.tables.point_bound[k]).sum();
            // only sample the points when the coefficient bound cannot rule out a dip below the floors
            if a0 - spread * (1.0 + 1e-12) < floor.max(thin_floor) {
                let min = self.tables.all_points.iter().map(|b| dot_upto(&ra.coeffs, b, n)).fold(f64::INFINITY, f64::min);
                theta = positivity_theta(a0, min, floor);
                thin |= min < thin_floor;
            }
        }
        r.a = ra.coeffs;
        if level {
            // f differs from the water column by a constant on this stencil
            r.f = ra.coeffs;
            r.f[0] = 0.0;
        } else {
            r.f = self.cweno.reconstruct(&self.fluctuation_data(field, i, j), mask).coeffs;
        }
        let full = self.cweno.stencil_mask();
        let front = mask & full != full || theta < 1.0 || thin;
        if theta < 1.0 {
            for k in 1..N_COEFFS {
                r.a[k] *= theta;
                r.f[k] *= theta;
            }
        }
        if front {
            // carry the mean velocity so it stays bounded where the column thins
            let (u, v) = (field.m1[k0] / a0, field.m2[k0] / a0);
            for k in 0..N_COEFFS {
                r.m1[k] = u * r.a[k];
                r.m2[k] = v * r.a[k];
            }
            r.m1[0] = field.m1[k0];
            r.m2[0] = field.m2[k0];
        } else {
            r.m1 = self.cweno.reconstruct(&u1, mask).coeffs;
            r.m2 = self.cweno.reconstruct(&u2, mask).coeffs;
        }
        r
    }

    fn reconstruct_into(&mut self, field: &StateField) {
        let nx = self.grid.nx;
        let mut recon = std::mem::take(&mut self.recon);
        recon.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
            for (i, r) in row.iter_mut().enumerate() {
                *r = self.reconstruct_cell(field, i, j);
            }
        });
        self.recon = recon;
    }

    fn update_wet(&mut self, field: &StateField) {
        let h_dry = self.cfg.h_dry;
        self.wet
            .par_iter_mut()
            .zip(field.a.par_iter().zip(&field.sigma_bar))
            .for_each(|(w, (&a, &s))| *w = a >= h_dry * s);
    }

    /// Reconstructions of every interior cell (row-major).
    pub fn reconstruct_all(&mut self, field: &StateField) -> Vec<CellReconstruction> {
        self.update_wet(field);
        self.reconstruct_into(field);
        let (dx, dy) = (self.grid.dx, self.grid.dy);
        let mut out = Vec::with_capacity(self.recon.len());
        for (idx, r) in self.recon.iter().enumerate() {
            let (i, j) = ((idx % self.grid.nx) as isize, (idx / self.grid.nx) as isize);
            let c = self.grid.center(i, j);
            let poly = |coeffs: [f64; N_COEFFS]| {
                let degree = if coeffs[1..].iter().all(|&x| x == 0.0) { 0 } else { self.cfg.variant.central_degree() };
                Poly::from_coeffs(coeffs, degree, dx, dy).at(c)
            };
            out.push(CellReconstruction {
                h: poly(r.a),
                m1: poly(r.m1),
                m2: poly(r.m2),
                f: poly(r.f),
                eta_bar: r.eta_bar,
            });
        }
        out
    }

    #[inline]
    fn trace(&self, r: &Recon, b: &[f64; N_COEFFS], sigma: f64) -> Trace {
        let n = self.n_coeffs;
        let a = dot_upto(&r.a, b, n);
        let eta = r.eta_bar * sigma + dot_upto(&r.f, b, n);
        let w = if a < self.cfg.h_dry * sigma {
            State::new(a.max(0.0), 0.0, 0.0)
        } else {
            State::new(a, dot_upto(&r.m1, b, n), dot_upto(&r.m2, b, n))
        };
        Trace { w, eta }
    }

    /// One-sided contributions (to the lower-index and higher-index cell) at
    /// one edge point with normal along +x or +y.
    #[inline]
    fn edge_point(&self, l: Trace, r: Trace, sigma: f64, normal_is_x: bool) -> (State, State) {
        let g = self.cfg.g;
        let spherical = self.grid.is_spherical();
        let (delta, g_eff) = match (spherical, normal_is_x) {
            (false, _) => (1.0, g),
            (true, true) => (1.0 / sigma, g / sigma),
            (true, false) => (1.0, g / sigma),
        };
        let rot = |w: State| if normal_is_x { w } else { State::new(w.a, w.m2, -w.m1) };
        let unrot = |w: State| if normal_is_x { w } else { State::new(w.a, -w.m2, w.m1) };
        let (ul, ur) = (rot(l.w), rot(r.w));
        let fl = hllc_fluctuation(&RiemannInput {
            wl: ul,
            wr: ur,
            etal: l.eta,
            etar: r.eta,
            g_eff,
            dry_tol: self.cfg.h_dry * sigma,
        });
        let left = unrot(flux_1d(ul) + fl.dminus) * delta;
        let right = unrot(fl.dplus - flux_1d(ur)) * delta;
        (left, right)
    }

    fn x_edges(&mut self) {
        let (nx, nq) = (self.grid.nx, self.tables.edge_w.len());
        let mut xflux = std::mem::take(&mut self.xflux);
        xflux.par_chunks_mut(nx + 1).enumerate().for_each(|(j, row)| {
            let sig = &self.tables.sigma_x[j * nq..(j + 1) * nq];
            let rec = &self.recon[j * nx..(j + 1) * nx];
            for (i, out) in row.iter_mut().enumerate() {
                let mut acc = [State::ZERO; 2];
                for q in 0..nq {
                    let s = sig[q];
                    let inner_r = (i < nx).then(|| self.trace(&rec[i], &self.tables.west[q], s));
                    let inner_l = (i > 0).then(|| self.trace(&rec[i - 1], &self.tables.east[q], s));
                    let (l, r) = match (inner_l, inner_r) {
                        (Some(l), Some(r)) => (l, r),
                        (None, Some(r)) => (self.outside(self.bc.west, r, true, || self.trace(&rec[nx - 1], &self.tables.east[q], s)), r),
                        (Some(l), None) => (l, self.outside(self.bc.east, l, true, || self.trace(&rec[0], &self.tables.west[q], s))),
                        (None, None) => unreachable!(),
                    };
                    let (cl, cr) = self.edge_point(l, r, s, true);
                    acc[0] += cl * self.tables.edge_w[q];
                    acc[1] += cr * self.tables.edge_w[q];
                }
                *out = acc;
            }
        });
        self.xflux = xflux;
    }

    fn y_edges(&mut self) {
        let (nx, ny, nq) = (self.grid.nx, self.grid.ny, self.tables.edge_w.len());
        let mut yflux = std::mem::take(&mut self.yflux);
        yflux.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
            let s = self.tables.sigma_y[j];
            for (i, out) in row.iter_mut().enumerate() {
                let mut acc = [State::ZERO; 2];
                for q in 0..nq {
                    let inner_r = (j < ny).then(|| self.trace(&self.recon[j * nx + i], &self.tables.south[q], s));
                    let inner_l = (j > 0).then(|| self.trace(&self.recon[(j - 1) * nx + i], &self.tables.north[q], s));
                    let (l, r) = match (inner_l, inner_r) {
                        (Some(l), Some(r)) => (l, r),
                        (None, Some(r)) => (
                            self.outside(self.bc.south, r, false, || {
                                self.trace(&self.recon[(ny - 1) * nx + i], &self.tables.north[q], s)
                            }),
                            r,
                        ),
                        (Some(l), None) => (
                            l,
                            self.outside(self.bc.north, l, false, || self.trace(&self.recon[i], &self.tables.south[q], s)),
                        ),
                        (None, None) => unreachable!(),
                    };
                    let (cl, cr) = self.edge_point(l, r, s, false);
                    acc[0] += cl * self.tables.edge_w[q];
                    acc[1] += cr * self.tables.edge_w[q];
                }
                *out = acc;
            }
        });
        self.yflux = yflux;
    }

    #[inline]
    fn outside(&self, kind: BoundaryKind, inside: Trace, normal_is_x: bool, periodic: impl FnOnce() -> Trace) -> Trace {
        match kind {
            BoundaryKind::Periodic => periodic(),
            BoundaryKind::Wall => mirror_normal(inside, normal_is_x),
            BoundaryKind::Open => inside,
        }
    }

    fn volume_term(&self, r: &Recon, j: usize) -> State {
        let t = &self.tables;
        let nv = t.vol_w.len();
        let n = self.n_coeffs;
        let g = self.cfg.g;
        let mut acc = State::ZERO;
        if r.f[1..].iter().all(|&c| c == 0.0) && !self.grid.is_spherical() {
            return acc;
        }
        for l in 0..nv {
            let a = dot_upto(&r.a, &t.vol[l], n).max(0.0);
            let fx = dot_upto(&r.f, &t.vol_gx[l], n);
            let fy = dot_upto(&r.f, &t.vol_gy[l], n);
            let term = if self.grid.is_spherical() {
                let s = t.sigma_v[j * nv + l];
                let mut term = State::new(0.0, g * a / (s * s) * fx, g * a / s * fy);
                let h_dry = self.cfg.h_dry * s;
                let w = if a < h_dry {
                    State::new(a, 0.0, 0.0)
                } else {
                    State::new(a, dot_upto(&r.m1, &t.vol[l], n), dot_upto(&r.m2, &t.vol[l], n))
                };
                let pf = dot_upto(&r.f, &t.vol[l], n);
                term += geometric_source(w, s, pf, g, h_dry) * t.dsigma_v[j * nv + l];
                term
            } else {
                State::new(0.0, g * a * fx, g * a * fy)
            };
            acc += term * t.vol_w[l];
        }
        acc
    }

    fn assemble(&mut self) {
        let (nx, dx, dy) = (self.grid.nx, self.grid.dx, self.grid.dy);
        let inv_r = 1.0 / self.grid.radius();
        let mut rates = std::mem::take(&mut self.rates);
        rates.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
            for (i, out) in row.iter_mut().enumerate() {
                let west = self.xflux[j * (nx + 1) + i][1];
                let east = self.xflux[j * (nx + 1) + i + 1][0];
                let south = self.yflux[j * nx + i][1];
                let north = self.yflux[(j + 1) * nx + i][0];
                let mut total = (west + east) * (1.0 / dx);
                total += (south + north) * (1.0 / dy);
                total += self.volume_term(&self.recon[j * nx + i], j);
                *out = total * (-inv_r);
            }
        });
        self.rates = rates;
    }

    /// Rates of change of every interior cell (row-major) for a field with
    /// a filled halo.
    pub fn rhs(&mut self, field: &StateField) -> &[State] {
        self.update_wet(field);
        self.reconstruct_into(field);
        self.x_edges();
        self.y_edges();
        self.assemble();
        &self.rates
    }

    /// Largest stable step under the CFL condition.
    pub fn stable_dt(&self, field: &StateField) -> Result<f64, SolverError> {
        let (dx, dy, g) = (self.grid.dx, self.grid.dy, self.cfg.g);
        let radius = self.grid.radius();
        let mut best = f64::INFINITY;
        for (i, j) in self.interior() {
            let k = self.grid.index(i, j);
            if !self.is_wet(field, k) {
                continue;
            }
            let a = field.a[k];
            let c = (g * a / field.sigma_bar[k]).sqrt();
            let (u, v) = (field.m1[k] / a, field.m2[k] / a);
            let cos = self.tables.sigma_c[j as usize];
            let dt = radius * dx * dy * cos / ((u.abs() + c) * dy + (v.abs() + c) * dx);
            best = best.min(dt);
        }
        if !best.is_finite() {
            return Err(SolverError::AllDry);
        }
        Ok(self.cfg.cfl * best)
    }

    /// `field ← c_old·old + c_new·(field + dt·L(field))`, then positivity
    /// clamps, dry-momentum zeroing and halo refill.
    fn stage(&mut self, field: &mut StateField, old: &[State], c_old: f64, dt: f64, t: f64) -> Result<(), SolverError> {
        self.rhs(field);
        let c_new = 1.0 - c_old;
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let (h_dry, h_vel) = (self.cfg.h_dry, self.cfg.h_vel);
        let mut clamps = 0;
        let mut deepest: f64 = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let k = self.grid.index(i as isize, j as isize);
                let r = self.rates[j * nx + i];
                let o = old[j * nx + i];
                let mut a = c_old * o.a + c_new * (field.a[k] + dt * r.a);
                let mut m1 = c_old * o.m1 + c_new * (field.m1[k] + dt * r.m1);
                let mut m2 = c_old * o.m2 + c_new * (field.m2[k] + dt * r.m2);
                if !(a.is_finite() && m1.is_finite() && m2.is_finite()) {
                    return Err(SolverError::NonFinite { i, j, t });
                }
                if a < 0.0 {
                    deepest = deepest.max(-a / field.sigma_bar[k]);
                    a = 0.0;
                    clamps += 1;
                }
                let s = field.sigma_bar[k];
                if a < h_dry * s {
                    m1 = 0.0;
                    m2 = 0.0;
                } else if a < h_vel * s {
                    let f = desingularize(a / s, h_vel);
                    m1 *= f;
                    m2 *= f;
                }
                field.a[k] = a;
                field.m1[k] = m1;
                field.m2[k] = m2;
            }
        }
        if clamps > 0 {
            log::debug!("t = {t}: clamped {clamps} negative water columns");
        }
        self.clamp_events += clamps;
        self.clamp_depth = self.clamp_depth.max(deepest);
        fill_ghosts(field, &self.grid, &self.bc);
        Ok(())
    }

    /// One SSP-RK3 step of size `dt`; the halo must be filled on entry and
    /// is filled on exit.
    pub fn step(&mut self, field: &mut StateField, dt: f64, t: f64) -> Result<(), SolverError> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut old = Vec::with_capacity(nx * ny);
        for j in 0..ny as isize {
            for i in 0..nx as isize {
                let k = self.grid.index(i, j);
                old.push(State::new(field.a[k], field.m1[k], field.m2[k]));
            }
        }
        self.stage(field, &old, 0.0, dt, t)?;
        self.stage(field, &old, 0.75, dt, t)?;
        self.stage(field, &old, 1.0 / 3.0, dt, t)?;
        Ok(())
    }

    /// Advances from `t_start` to `t_end`, landing exactly on every
    /// observer sample time and on `t_end`.
    pub fn advance(
        &mut self,
        field: &mut StateField,
        t_start: f64,
        t_end: f64,
        observers: &mut [&mut dyn Observer],
    ) -> Result<StepLog, SolverError> {
        if !(t_end >= t_start) {
            return Err(SolverError::Config(format!("end time {t_end} precedes start time {t_start}")));
        }
        self.prepare(field);
        let mut stops: Vec<f64> = observers
            .iter()
            .flat_map(|o| o.sample_times())
            .filter(|&s| s > t_start && s < t_end)
            .collect();
        stops.push(t_end);
        stops.sort_by(f64::total_cmp);
        stops.dedup();

        let mut log = StepLog { t_final: t_start, dt_min: f64::INFINITY, ..StepLog::default() };
        let clamps_before = self.clamp_events;
        self.clamp_depth = 0.0;
        for o in observers.iter_mut() {
            o.observe(t_start, field, &self.grid).map_err(SolverError::Observer)?;
        }
        let mut t = t_start;
        let mut next = 0;
        let cells = (self.grid.nx * self.grid.ny) as u64;
        while t < t_end {
            while stops[next] <= t {
                next += 1;
            }
            if log.steps >= self.cfg.max_steps {
                return Err(SolverError::MaxSteps(self.cfg.max_steps));
            }
            let stop = stops[next];
            let mut dt = self.stable_dt(field)?;
            let landing = t + dt >= stop || (stop - t - dt) < 1e-12 * stop.abs().max(1.0);
            if landing {
                dt = stop - t;
            }
            self.step(field, dt, t)?;
            t = if landing { stop } else { t + dt };
            log.steps += 1;
            log.cell_steps += cells;
            log.dt_min = log.dt_min.min(dt);
            log.dt_max = log.dt_max.max(dt);
            for o in observers.iter_mut() {
                o.observe(t, field, &self.grid).map_err(SolverError::Observer)?;
            }
        }
        log.t_final = t;
        log.clamp_events = self.clamp_events - clamps_before;
        log.clamp_depth = self.clamp_depth;
        if log.steps == 0 {
            log.dt_min = 0.0;
        }
        Ok(log)
    }
}

/// Reconstructions of every interior cell of a field with filled halo.
pub fn reconstruct_all(
    field: &StateField,
    grid: &Grid,
    bc: &BoundarySpec,
    cfg: &SchemeConfig,
) -> Result<Vec<CellReconstruction>, SolverError> {
    Ok(Solver::new(grid, bc, cfg)?.reconstruct_all(field))
}

/// Rates of change of every interior cell (row-major).
pub fn semidiscrete_rhs(
    field: &StateField,
    grid: &Grid,
    bc: &BoundarySpec,
    cfg: &SchemeConfig,
) -> Result<Vec<State>, SolverError> {
    Ok(Solver::new(grid, bc, cfg)?.rhs(field).to_vec())
}

pub fn stable_dt(field: &StateField, grid: &Grid, cfg: &SchemeConfig) -> Result<f64, SolverError> {
    let bc = BoundarySpec::uniform(BoundaryKind::Open);
    Solver::new(grid, &bc, cfg)?.stable_dt(field)
}

pub fn ssp_rk3_step(
    field: &StateField,
    grid: &Grid,
    bc: &BoundarySpec,
    cfg: &SchemeConfig,
    dt: f64,
) -> Result<StateField, SolverError> {
    let mut solver = Solver::new(grid, bc, cfg)?;
    let mut out = field.clone();
    solver.prepare(&mut out);
    solver.step(&mut out, dt, 0.0)?;
    Ok(out)
}

pub fn advance_to(
    field: &StateField,
    grid: &Grid,
    bc: &BoundarySpec,
    cfg: &SchemeConfig,
    t_end: f64,
    observers: &mut [&mut dyn Observer],
) -> Result<(StateField, StepLog), SolverError> {
    let mut solver = Solver::new(grid, bc, cfg)?;
    let mut out = field.clone();
    let log = solver.advance(&mut out, 0.0, t_end, observers)?;
    Ok((out, log))
}
