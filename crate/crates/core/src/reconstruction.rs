//! CWENO reconstruction of one scalar cell-average field on a single cell.
//!
//! Stencil cells are numbered by their offset `(di, dj)` from the centre:
//!
//! ```text
//!             9
//!         1   2   3
//!    10   4   0   5   11
//!         6   7   8
//!             12
//! ```
//!
//! Polynomials use the zero-mean basis
//! `1, ξ, ζ, ξ²-Δx²/12, ζ²-Δy²/12, ξζ, ξ³, ζ³, ξζ², ξ²ζ` in local coordinates
//! centred on the cell, so the constant coefficient is always the cell average.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const N_COEFFS: usize = 10;
pub const STENCIL_LEN: usize = 13;

pub const STENCIL_OFFSETS: [(i32, i32); STENCIL_LEN] = [
    (0, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (-1, 0),
    (1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (0, 2),
    (-2, 0),
    (2, 0),
    (0, -2),
];

/// Neighbours forming each linear sector, in the order NE, SE, SW, NW.
pub const P1_SECTORS: [[usize; 3]; 4] = [[2, 3, 5], [5, 7, 8], [4, 6, 7], [1, 2, 4]];
/// Neighbours forming each quadratic sector.
pub const P2_SECTORS: [[usize; 5]; 4] = [
    [2, 3, 5, 9, 11],
    [5, 7, 8, 11, 12],
    [4, 6, 7, 10, 12],
    [1, 2, 4, 9, 10],
];

/// Powers of Δx and Δy carried by each basis function.
const POWERS: [(i32, i32); N_COEFFS] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (0, 2),
    (1, 1),
    (3, 0),
    (0, 3),
    (1, 2),
    (2, 1),
];

#[derive(Debug, Error, PartialEq)]
pub enum ReconstructionError {
    #[error("central linear weight d0 must be positive")]
    ZeroCentralWeight,
    #[error("linear weights must be non-negative and satisfy d0 + 4 dr = 1 (got d0 = {d0}, dr = {dr})")]
    BadLinearWeights { d0: f64, dr: f64 },
    #[error("least-squares system is rank deficient ({rank} of {unknowns} unknowns determined)")]
    RankDeficient { rank: usize, unknowns: usize },
    #[error("{0} stencil values for {1} offsets")]
    LengthMismatch(usize, usize),
    #[error("polynomial degree {0} is not supported")]
    UnsupportedDegree(u8),
    #[error("cell sizes must be positive and finite")]
    BadCellSize,
    #[error("epsilon must be positive and finite")]
    BadEpsilon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Quadratic optimal polynomial with linear sectors (third order).
    P2P1,
    /// Cubic optimal polynomial with linear sectors (fourth order).
    P3P1,
    /// Cubic optimal polynomial with quadratic sectors (fourth order).
    P3P2,
}

impl Variant {
    pub fn order(self) -> u32 {
        match self {
            Variant::P2P1 => 3,
            Variant::P3P1 | Variant::P3P2 => 4,
        }
    }

    pub fn central_degree(self) -> u8 {
        match self {
            Variant::P2P1 => 2,
            _ => 3,
        }
    }

    pub fn sector_degree(self) -> u8 {
        match self {
            Variant::P3P2 => 2,
            _ => 1,
        }
    }

    /// Number of leading stencil cells the optimal polynomial uses.
    pub fn stencil_size(self) -> usize {
        match self {
            Variant::P2P1 => 9,
            _ => 13,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::P2P1 => "P2P1",
            Variant::P3P1 => "P3P1",
            Variant::P3P2 => "P3P2",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace(['/', '_', '-'], "").as_str() {
            "P2P1" => Ok(Variant::P2P1),
            "P3P1" => Ok(Variant::P3P1),
            "P3P2" => Ok(Variant::P3P2),
            _ => Err(format!("unknown reconstruction variant `{s}` (expected P2P1, P3P1 or P3P2)")),
        }
    }
}

/// Regularisation ε as a function of the cell diameter h = √(Δx²+Δy²).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsLaw {
    H,
    H2,
    Constant(f64),
}

impl EpsLaw {
    pub fn value(self, h: f64) -> f64 {
        match self {
            EpsLaw::H => h,
            EpsLaw::H2 => h * h,
            EpsLaw::Constant(v) => v,
        }
    }
}

impl std::str::FromStr for EpsLaw {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "h" => Ok(EpsLaw::H),
            "h2" | "h^2" | "h²" => Ok(EpsLaw::H2),
            _ => {
                let inner = t
                    .strip_prefix("constant(")
                    .and_then(|r| r.strip_suffix(')'))
                    .unwrap_or(&t);
                inner
                    .parse::<f64>()
                    .map(EpsLaw::Constant)
                    .map_err(|_| format!("unknown eps law `{s}` (expected h, h2 or a number)"))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CwenoParams {
    pub variant: Variant,
    pub d0: f64,
    pub dr: f64,
    pub eps_law: EpsLaw,
    pub h_dry: f64,
}

impl Default for CwenoParams {
    fn default() -> Self {
        Self { variant: Variant::P2P1, d0: 0.75, dr: 0.0625, eps_law: EpsLaw::H2, h_dry: 1e-8 }
    }
}

impl CwenoParams {
    /// Defaults for `variant`. The fourth-order variants use ε = h: with
    /// ε = h² the first-degree sectors of P3P1 pull the weights O(h) away
    /// from the linear ones and the scheme drops to third order.
    pub fn with_variant(variant: Variant) -> Self {
        let eps_law = if variant.order() == 3 { EpsLaw::H2 } else { EpsLaw::H };
        Self { variant, eps_law, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ReconstructionError> {
        if !(self.d0 > 0.0) {
            return Err(ReconstructionError::ZeroCentralWeight);
        }
        if !(self.dr >= 0.0) || (self.d0 + 4.0 * self.dr - 1.0).abs() > 1e-12 {
            return Err(ReconstructionError::BadLinearWeights { d0: self.d0, dr: self.dr });
        }
        if let EpsLaw::Constant(v) = self.eps_law {
            if !(v.is_finite() && v > 0.0) {
                return Err(ReconstructionError::BadEpsilon);
            }
        }
        Ok(())
    }
}

/// Values of the ten basis functions at local offset `(xi, zeta)`.
#[inline]
pub fn basis_values(xi: f64, zeta: f64, dx: f64, dy: f64) -> [f64; N_COEFFS] {
    let (x2, y2) = (xi * xi, zeta * zeta);
    [
        1.0,
        xi,
        zeta,
        x2 - dx * dx / 12.0,
        y2 - dy * dy / 12.0,
        xi * zeta,
        x2 * xi,
        y2 * zeta,
        xi * y2,
        x2 * zeta,
    ]
}

/// Partial derivatives of the basis with respect to ξ and ζ.
#[inline]
pub fn basis_gradients(xi: f64, zeta: f64) -> ([f64; N_COEFFS], [f64; N_COEFFS]) {
    (
        [0.0, 1.0, 0.0, 2.0 * xi, 0.0, zeta, 3.0 * xi * xi, 0.0, zeta * zeta, 2.0 * xi * zeta],
        [0.0, 0.0, 1.0, 0.0, 2.0 * zeta, xi, 0.0, 3.0 * zeta * zeta, 2.0 * xi * zeta, xi * xi],
    )
}

#[inline]
pub fn dot(c: &[f64; N_COEFFS], b: &[f64; N_COEFFS]) -> f64 {
    let mut s = 0.0;
    for k in 0..N_COEFFS {
        s += c[k] * b[k];
    }
    s
}

/// [`dot`] restricted to the first `n` entries.
#[inline]
pub fn dot_upto(c: &[f64; N_COEFFS], b: &[f64; N_COEFFS], n: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..n.min(N_COEFFS) {
        s += c[k] * b[k];
    }
    s
}

/// Average of basis function `k` over the unit cell centred at `(x, y)`,
/// with the basis anchored on the unit cell at the origin.
pub fn unit_cell_average(k: usize, x: f64, y: f64) -> f64 {
    const TWELFTH: f64 = 1.0 / 12.0;
    match k {
        0 => 1.0,
        1 => x,
        2 => y,
        3 => x * x,
        4 => y * y,
        5 => x * y,
        6 => x * x * x + 0.25 * x,
        7 => y * y * y + 0.25 * y,
        8 => x * (y * y + TWELFTH),
        9 => (x * x + TWELFTH) * y,
        _ => panic!("basis index {k} out of range"),
    }
}

/// Number of basis functions spanning polynomials of `degree`.
pub fn basis_len(degree: u8) -> Result<usize, ReconstructionError> {
    match degree {
        0 => Ok(1),
        1 => Ok(3),
        2 => Ok(6),
        3 => Ok(10),
        d => Err(ReconstructionError::UnsupportedDegree(d)),
    }
}

/// Polynomial anchored on one cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Poly {
    pub coeffs: [f64; N_COEFFS],
    pub degree: u8,
    pub dx: f64,
    pub dy: f64,
    pub center: (f64, f64),
}

impl Poly {
    pub fn flat(mean: f64, dx: f64, dy: f64) -> Self {
        let mut coeffs = [0.0; N_COEFFS];
        coeffs[0] = mean;
        Self { coeffs, degree: 0, dx, dy, center: (0.0, 0.0) }
    }

    pub fn from_coeffs(coeffs: [f64; N_COEFFS], degree: u8, dx: f64, dy: f64) -> Self {
        Self { coeffs, degree, dx, dy, center: (0.0, 0.0) }
    }

    pub fn at(mut self, center: (f64, f64)) -> Self {
        self.center = center;
        self
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0]
    }

    /// Value at local offset from the cell centre.
    pub fn value_local(&self, xi: f64, zeta: f64) -> f64 {
        dot(&self.coeffs, &basis_values(xi, zeta, self.dx, self.dy))
    }

    pub fn gradient_local(&self, xi: f64, zeta: f64) -> (f64, f64) {
        let (gx, gy) = basis_gradients(xi, zeta);
        (dot(&self.coeffs, &gx), dot(&self.coeffs, &gy))
    }
}

/// Value of `p` at the global point `(x, y)`.
pub fn evaluate(p: &Poly, x: f64, y: f64) -> f64 {
    p.value_local(x - p.center.0, y - p.center.1)
}

/// Gradient of `p` at the global point `(x, y)`.
pub fn evaluate_gradient(p: &Poly, x: f64, y: f64) -> (f64, f64) {
    p.gradient_local(x - p.center.0, y - p.center.1)
}

/// Multipliers turning unit-cell coefficients into coefficients for a
/// Δx × Δy cell.
#[derive(Clone, Copy, Debug)]
struct Scales([f64; N_COEFFS]);

impl Scales {
    fn new(dx: f64, dy: f64) -> Self {
        let mut s = [0.0; N_COEFFS];
        for (k, &(a, b)) in POWERS.iter().enumerate() {
            s[k] = 1.0 / (dx.powi(a) * dy.powi(b));
        }
        Scales(s)
    }

    #[inline]
    fn apply(&self, mut c: [f64; N_COEFFS]) -> [f64; N_COEFFS] {
        for k in 1..N_COEFFS {
            c[k] *= self.0[k];
        }
        c
    }
}

type Coeffs = [f64; N_COEFFS];
type Values = [f64; STENCIL_LEN];

fn p2_central_unit(u: &Values) -> Coeffs {
    let mut c = [0.0; N_COEFFS];
    c[0] = u[0];
    c[1] = (u[3] - u[1] + u[5] - u[4] + u[8] - u[6]) / 6.0;
    c[2] = (u[1] - u[6] + u[2] - u[7] + u[3] - u[8]) / 6.0;
    c[3] = ((u[1] - 2.0 * u[2] + u[3]) + 3.0 * (u[4] - 2.0 * u[0] + u[5]) + (u[6] - 2.0 * u[7] + u[8])) / 10.0;
    c[4] = ((u[1] - 2.0 * u[4] + u[6]) + 3.0 * (u[2] - 2.0 * u[0] + u[7]) + (u[3] - 2.0 * u[5] + u[8])) / 10.0;
    c[5] = ((u[3] - u[1]) - (u[8] - u[6])) / 4.0;
    c
}

fn p3_central_unit(u: &Values) -> Coeffs {
    let d2 = |a: f64, b: f64| a - 2.0 * u[0] + b;
    let mut c = [0.0; N_COEFFS];
    c[0] = u[0];
    c[1] = (36.0 * (u[5] - u[4]) - 5.0 * (u[11] - u[10]) - (u[8] - u[6]) - (u[3] - u[1])) / 48.0;
    c[2] = (36.0 * (u[2] - u[7]) - 5.0 * (u[9] - u[12]) - (u[1] - u[6]) - (u[3] - u[8])) / 48.0;
    c[3] = (76.0 * d2(u[11], u[10])
        + 19.0 * d2(u[5], u[4])
        + 17.0 * (u[3] - 2.0 * u[2] + u[1])
        + 17.0 * (u[6] - 2.0 * u[7] + u[8])
        + 32.0 * d2(u[2], u[7])
        - 8.0 * d2(u[9], u[12]))
        / 714.0;
    c[4] = (76.0 * d2(u[9], u[12])
        + 19.0 * d2(u[2], u[7])
        + 17.0 * (u[3] - 2.0 * u[5] + u[8])
        + 17.0 * (u[6] - 2.0 * u[4] + u[1])
        + 32.0 * d2(u[5], u[4])
        - 8.0 * d2(u[11], u[10]))
        / 714.0;
    c[5] = ((u[3] - u[1]) - (u[8] - u[6])) / 4.0;
    c[6] = ((u[11] - u[10]) - 2.0 * (u[5] - u[4])) / 12.0;
    c[7] = ((u[9] - u[12]) - 2.0 * (u[2] - u[7])) / 12.0;
    c[8] = ((u[3] - u[1]) - 2.0 * (u[5] - u[4]) + (u[8] - u[6])) / 4.0;
    c[9] = ((u[1] - u[6]) - 2.0 * (u[2] - u[7]) + (u[3] - u[8])) / 4.0;
    c
}

fn p1_sector_unit(r: usize, u: &Values) -> Coeffs {
    let mut c = [0.0; N_COEFFS];
    c[0] = u[0];
    let (c1, c2) = match r {
        0 => ((u[3] - u[2]) + 2.0 * (u[5] - u[0]), (u[3] - u[5]) + 2.0 * (u[2] - u[0])),
        1 => ((u[8] - u[7]) + 2.0 * (u[5] - u[0]), (u[5] - u[8]) + 2.0 * (u[0] - u[7])),
        2 => ((u[7] - u[6]) + 2.0 * (u[0] - u[4]), (u[4] - u[6]) + 2.0 * (u[0] - u[7])),
        3 => ((u[2] - u[1]) + 2.0 * (u[0] - u[4]), (u[1] - u[4]) + 2.0 * (u[2] - u[0])),
        _ => panic!("sector index {r} out of range"),
    };
    c[1] = c1 / 3.0;
    c[2] = c2 / 3.0;
    c
}

fn p2_sector_unit(r: usize, u: &Values) -> Coeffs {
    let east = (2.0 * u[5] - 1.5 * u[0] - 0.5 * u[11], (u[0] + u[11] - 2.0 * u[5]) / 2.0);
    let west = (1.5 * u[0] + 0.5 * u[10] - 2.0 * u[4], (u[0] + u[10] - 2.0 * u[4]) / 2.0);
    let north = (2.0 * u[2] - 1.5 * u[0] - 0.5 * u[9], (u[0] - 2.0 * u[2] + u[9]) / 2.0);
    let south = (1.5 * u[0] + 0.5 * u[12] - 2.0 * u[7], (u[0] + u[12] - 2.0 * u[7]) / 2.0);
    let (x, y, cross) = match r {
        0 => (east, north, u[0] - u[2] + u[3] - u[5]),
        1 => (east, south, -u[0] + u[5] + u[7] - u[8]),
        2 => (west, south, u[0] - u[4] + u[6] - u[7]),
        3 => (west, north, -u[0] - u[1] + u[2] + u[4]),
        _ => panic!("sector index {r} out of range"),
    };
    let mut c = [0.0; N_COEFFS];
    c[0] = u[0];
    c[1] = x.0;
    c[2] = y.0;
    c[3] = x.1;
    c[4] = y.1;
    c[5] = cross;
    c
}

/// The 13 cell averages around a cell together with their wet flags.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StencilData {
    pub u: [f64; STENCIL_LEN],
    pub wet: [bool; STENCIL_LEN],
    pub dx: f64,
    pub dy: f64,
}

impl StencilData {
    pub fn new(u: [f64; STENCIL_LEN], dx: f64, dy: f64) -> Self {
        Self { u, wet: [true; STENCIL_LEN], dx, dy }
    }

    pub fn wet_mask(&self) -> u16 {
        self.wet.iter().enumerate().fold(0, |m, (k, &w)| if w { m | (1 << k) } else { m })
    }
}

pub fn fit_p2_central(s: &StencilData) -> Poly {
    Poly::from_coeffs(Scales::new(s.dx, s.dy).apply(p2_central_unit(&s.u)), 2, s.dx, s.dy)
}

pub fn fit_p3_central(s: &StencilData) -> Poly {
    Poly::from_coeffs(Scales::new(s.dx, s.dy).apply(p3_central_unit(&s.u)), 3, s.dx, s.dy)
}

/// Linear sector fit; `r` in 0..4 selects NE, SE, SW, NW.
pub fn fit_p1_sector(r: usize, s: &StencilData) -> Poly {
    Poly::from_coeffs(Scales::new(s.dx, s.dy).apply(p1_sector_unit(r, &s.u)), 1, s.dx, s.dy)
}

/// Quadratic sector fit; `r` in 0..4 selects NE, SE, SW, NW.
pub fn fit_p2_sector(r: usize, s: &StencilData) -> Poly {
    Poly::from_coeffs(Scales::new(s.dx, s.dy).apply(p2_sector_unit(r, &s.u)), 2, s.dx, s.dy)
}

/// Least-squares fit of a polynomial of `degree` to neighbour averages,
/// reproducing the centre average `u0` exactly. `offsets` and `values`
/// describe the neighbours; an offset of `(0, 0)` is ignored.
pub fn fit_least_squares(
    offsets: &[(i32, i32)],
    values: &[f64],
    u0: f64,
    degree: u8,
    dx: f64,
    dy: f64,
) -> Result<Poly, ReconstructionError> {
    if offsets.len() != values.len() {
        return Err(ReconstructionError::LengthMismatch(values.len(), offsets.len()));
    }
    if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
        return Err(ReconstructionError::BadCellSize);
    }
    let n = basis_len(degree)?;
    let unknowns = n - 1;
    let rows: Vec<usize> = (0..offsets.len()).filter(|&k| offsets[k] != (0, 0)).collect();
    let mut coeffs = [0.0; N_COEFFS];
    coeffs[0] = u0;
    if unknowns == 0 {
        return Ok(Poly::from_coeffs(coeffs, degree, dx, dy));
    }
    if rows.len() < unknowns {
        return Err(ReconstructionError::RankDeficient { rank: rows.len(), unknowns });
    }
    let a = DMatrix::from_fn(rows.len(), unknowns, |r, c| {
        let (i, j) = offsets[rows[r]];
        unit_cell_average(c + 1, i as f64, j as f64)
    });
    let b = DVector::from_fn(rows.len(), |r, _| values[rows[r]] - u0);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax).count();
    if rank < unknowns {
        return Err(ReconstructionError::RankDeficient { rank, unknowns });
    }
    let x = svd
        .solve(&b, 1e-12 * smax)
        .map_err(|_| ReconstructionError::RankDeficient { rank, unknowns })?;
    for k in 0..unknowns {
        coeffs[k + 1] = x[k];
    }
    Ok(Poly::from_coeffs(Scales::new(dx, dy).apply(coeffs), degree, dx, dy))
}

/// P0 = (P_opt − Σ dr·P_r) / d0, with the mean pinned to the optimal one.
pub fn compute_p0(p_opt: &Poly, sectors: &[Poly; 4], d0: f64, dr: f64) -> Result<Poly, ReconstructionError> {
    if !(d0 > 0.0) {
        return Err(ReconstructionError::ZeroCentralWeight);
    }
    let mut c = p_opt.coeffs;
    for k in 1..N_COEFFS {
        let s: f64 = sectors.iter().map(|p| p.coeffs[k]).sum();
        c[k] = (c[k] - dr * s) / d0;
    }
    let degree = sectors.iter().map(|p| p.degree).max().unwrap_or(0).max(p_opt.degree);
    Ok(Poly { coeffs: c, degree, ..*p_opt })
}

/// Exact oscillation indicator Σ_{1≤|α|≤3} h^{2|α|-2} ∫_cell (∂^α P)² as a
/// symmetric quadratic form in the coefficients, h² = Δx² + Δy².
#[derive(Clone, Debug)]
pub struct IndicatorForm {
    /// Upper triangle, off-diagonal entries already doubled.
    q: [[f64; N_COEFFS]; N_COEFFS],
}

/// `coef · ξ^px · ζ^py`
type Monomial = (f64, u32, u32);

fn basis_monomials(k: usize, dx: f64, dy: f64) -> Vec<Monomial> {
    match k {
        0 => vec![(1.0, 0, 0)],
        1 => vec![(1.0, 1, 0)],
        2 => vec![(1.0, 0, 1)],
        3 => vec![(1.0, 2, 0), (-dx * dx / 12.0, 0, 0)],
        4 => vec![(1.0, 0, 2), (-dy * dy / 12.0, 0, 0)],
        5 => vec![(1.0, 1, 1)],
        6 => vec![(1.0, 3, 0)],
        7 => vec![(1.0, 0, 3)],
        8 => vec![(1.0, 1, 2)],
        9 => vec![(1.0, 2, 1)],
        _ => unreachable!(),
    }
}

fn differentiate(p: &[Monomial], ax: u32, ay: u32) -> Vec<Monomial> {
    p.iter()
        .filter(|&&(_, px, py)| px >= ax && py >= ay)
        .map(|&(c, px, py)| {
            let fx: u32 = (px - ax + 1..=px).product();
            let fy: u32 = (py - ay + 1..=py).product();
            (c * fx as f64 * fy as f64, px - ax, py - ay)
        })
        .collect()
}

fn integrate_power(p: u32, width: f64) -> f64 {
    if p % 2 == 1 {
        0.0
    } else {
        2.0 * (width / 2.0).powi(p as i32 + 1) / (p as f64 + 1.0)
    }
}

impl IndicatorForm {
    pub fn new(dx: f64, dy: f64) -> Self {
        let h2 = dx * dx + dy * dy;
        let basis: Vec<Vec<Monomial>> = (0..N_COEFFS).map(|k| basis_monomials(k, dx, dy)).collect();
        let mut q = [[0.0f64; N_COEFFS]; N_COEFFS];
        for order in 1..=3u32 {
            let weight = h2.powi(order as i32 - 1);
            for ax in 0..=order {
                let ay = order - ax;
                let d: Vec<Vec<Monomial>> = basis.iter().map(|p| differentiate(p, ax, ay)).collect();
                for k in 0..N_COEFFS {
                    for l in 0..N_COEFFS {
                        let mut s = 0.0;
                        for &(ck, xk, yk) in &d[k] {
                            for &(cl, xl, yl) in &d[l] {
                                s += ck * cl * integrate_power(xk + xl, dx) * integrate_power(yk + yl, dy);
                            }
                        }
                        q[k][l] += weight * s;
                    }
                }
            }
        }
        let mut upper = [[0.0; N_COEFFS]; N_COEFFS];
        for k in 1..N_COEFFS {
            upper[k][k] = q[k][k];
            for l in k + 1..N_COEFFS {
                upper[k][l] = 2.0 * q[k][l];
            }
        }
        Self { q: upper }
    }

    #[inline]
    pub fn eval(&self, c: &[f64; N_COEFFS]) -> f64 {
        self.eval_upto(c, N_COEFFS)
    }

    /// Same as [`eval`](Self::eval) for coefficients vanishing beyond index `n`.
    #[inline]
    pub fn eval_upto(&self, c: &[f64; N_COEFFS], n: usize) -> f64 {
        let mut s = 0.0;
        for k in 1..n {
            let row = &self.q[k];
            let mut t = 0.0;
            for l in k..n {
                t += row[l] * c[l];
            }
            s += c[k] * t;
        }
        s
    }
}

/// Oscillation indicator of `p` on its own cell.
pub fn smoothness_indicator(p: &Poly) -> f64 {
    IndicatorForm::new(p.dx, p.dy).eval(&p.coeffs)
}

/// α_r = d_r/(I_r+ε)², ω_r = α_r/Σα. Entries with d_r = 0 get ω_r = 0.
/// The computation is normalised by the smallest active I+ε so it cannot
/// overflow.
pub fn nonlinear_weights<const N: usize>(indicators: &[f64; N], linear: &[f64; N], eps: f64) -> [f64; N] {
    let mut w = [0.0; N];
    let mut floor = f64::INFINITY;
    for r in 0..N {
        if linear[r] > 0.0 {
            floor = floor.min(indicators[r] + eps);
        }
    }
    if !floor.is_finite() {
        return w;
    }
    let mut total = 0.0;
    for r in 0..N {
        if linear[r] > 0.0 {
            let s = indicators[r] + eps;
            w[r] = if floor > 0.0 {
                let ratio = floor / s;
                linear[r] * ratio * ratio
            } else if s == 0.0 {
                linear[r]
            } else {
                0.0
            };
            total += w[r];
        }
    }
    for x in &mut w {
        *x /= total;
    }
    w
}

/// Result of reconstructing one field on one cell, in cell-size coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reconstructed {
    pub coeffs: [f64; N_COEFFS],
    pub degree: u8,
}

impl Reconstructed {
    pub fn flat(mean: f64) -> Self {
        let mut coeffs = [0.0; N_COEFFS];
        coeffs[0] = mean;
        Self { coeffs, degree: 0 }
    }
}

/// Precomputed CWENO operator for a fixed variant and cell size.
#[derive(Clone, Debug)]
pub struct Cweno {
    params: CwenoParams,
    dx: f64,
    dy: f64,
    scales: Scales,
    form: IndicatorForm,
    eps: f64,
    stencil_mask: u16,
    sector_masks: [u16; 4],
}

fn mask_of(cells: &[usize]) -> u16 {
    cells.iter().fold(1, |m, &k| m | (1 << k))
}

impl Cweno {
    pub fn new(params: &CwenoParams, dx: f64, dy: f64) -> Result<Self, ReconstructionError> {
        params.validate()?;
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(ReconstructionError::BadCellSize);
        }
        let eps = params.eps_law.value((dx * dx + dy * dy).sqrt());
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(ReconstructionError::BadEpsilon);
        }
        let sector_masks = match params.variant.sector_degree() {
            1 => P1_SECTORS.map(|s| mask_of(&s)),
            _ => P2_SECTORS.map(|s| mask_of(&s)),
        };
        Ok(Self {
            params: *params,
            dx,
            dy,
            scales: Scales::new(dx, dy),
            form: IndicatorForm::new(dx, dy),
            eps,
            stencil_mask: ((1u32 << params.variant.stencil_size()) - 1) as u16,
            sector_masks,
        })
    }

    pub fn params(&self) -> &CwenoParams {
        &self.params
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (self.dx, self.dy)
    }

    pub fn indicator(&self, c: &[f64; N_COEFFS]) -> f64 {
        self.form.eval(c)
    }

    /// Bitmask of the stencil cells the variant reads.
    pub fn stencil_mask(&self) -> u16 {
        self.stencil_mask
    }

    fn sector(&self, r: usize, u: &Values) -> Coeffs {
        let unit = match self.params.variant.sector_degree() {
            1 => p1_sector_unit(r, u),
            _ => p2_sector_unit(r, u),
        };
        self.scales.apply(unit)
    }

    fn optimal(&self, u: &Values) -> Coeffs {
        let unit = match self.params.variant {
            Variant::P2P1 => p2_central_unit(u),
            _ => p3_central_unit(u),
        };
        self.scales.apply(unit)
    }

    /// Full CWENO pipeline for one cell. `wet` has bit k set when stencil
    /// cell k is wet; a dry centre yields the flat polynomial, and any dry
    /// stencil cell removes the optimal polynomial and every sector
    /// touching it, with the surviving linear weights renormalised.
    pub fn reconstruct(&self, u: &[f64; STENCIL_LEN], wet: u16) -> Reconstructed {
        if wet & 1 == 0 || u.iter().all(|&x| x == u[0]) {
            return Reconstructed::flat(u[0]);
        }
        let CwenoParams { d0, dr, .. } = self.params;
        let all_wet = wet & self.stencil_mask == self.stencil_mask;
        let mut lin = [d0, dr, dr, dr, dr];
        if !all_wet {
            lin[0] = 0.0;
            for r in 0..4 {
                if wet & self.sector_masks[r] != self.sector_masks[r] {
                    lin[r + 1] = 0.0;
                }
            }
            let total: f64 = lin.iter().sum();
            if total <= 0.0 {
                return Reconstructed::flat(u[0]);
            }
            for x in &mut lin {
                *x /= total;
            }
        }

        let mut polys = [[0.0; N_COEFFS]; 5];
        for r in 0..4 {
            if lin[r + 1] > 0.0 || all_wet {
                polys[r + 1] = self.sector(r, u);
            }
        }
        if all_wet {
            let opt = self.optimal(u);
            let mut p0 = opt;
            for k in 1..N_COEFFS {
                let s = polys[1][k] + polys[2][k] + polys[3][k] + polys[4][k];
                p0[k] = (opt[k] - dr * s) / d0;
            }
            polys[0] = p0;
        }

        let central_len = basis_len(self.params.variant.central_degree()).unwrap_or(N_COEFFS);
        let sector_len = basis_len(self.params.variant.sector_degree()).unwrap_or(N_COEFFS);
        let mut ind = [0.0; 5];
        for r in 0..5 {
            if lin[r] > 0.0 {
                ind[r] = self.form.eval_upto(&polys[r], if r == 0 { central_len } else { sector_len });
            }
        }
        let w = nonlinear_weights(&ind, &lin, self.eps);
        let mut coeffs = [0.0; N_COEFFS];
        coeffs[0] = u[0];
        for r in 0..5 {
            if w[r] != 0.0 {
                for k in 1..N_COEFFS {
                    coeffs[k] += w[r] * polys[r][k];
                }
            }
        }
        let degree = if all_wet {
            self.params.variant.central_degree()
        } else {
            self.params.variant.sector_degree()
        };
        Reconstructed { coeffs, degree }
    }
}

/// Reconstruction of the centre cell of `s`.
pub fn reconstruct_cell(s: &StencilData, params: &CwenoParams) -> Result<Poly, ReconstructionError> {
    let engine = Cweno::new(params, s.dx, s.dy)?;
    let r = engine.reconstruct(&s.u, s.wet_mask());
    Ok(Poly::from_coeffs(r.coeffs, r.degree, s.dx, s.dy))
}

/// Scaling factor θ ∈ [0, 1] keeping ū + θ(p − ū) ≥ `floor` at the sampled
/// points, given their minimum.
#[inline]
pub fn positivity_theta(mean: f64, min_value: f64, floor: f64) -> f64 {
    if min_value >= floor {
        1.0
    } else if mean <= floor {
        0.0
    } else {
        ((mean - floor) / (mean - min_value)).min(1.0)
    }
}

/// Scales `p` towards its mean so every value in `point_values` (samples of
/// `p`) maps to at least `h_dry`.
pub fn positivity_limit(p: &Poly, u0: f64, point_values: &[f64], h_dry: f64) -> Poly {
    let min = point_values.iter().copied().fold(f64::INFINITY, f64::min);
    let theta = positivity_theta(u0, min, h_dry);
    if theta == 1.0 {
        return *p;
    }
    let mut out = *p;
    out.coeffs[0] = u0;
    for k in 1..N_COEFFS {
        out.coeffs[k] *= theta;
    }
    if theta == 0.0 {
        out.degree = 0;
    }
    out
}
