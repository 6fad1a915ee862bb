//! Shallow water model terms in Cartesian and spherical (longitude-latitude)
//! coordinates, and the edge-normal rotations used by the Riemann solver.
//!
//! Spherical states carry σ = cos φ as a factor: `a = h·σ`, `m1 = Q_θ`,
//! `m2 = Q_φ`. Setting σ = 1 recovers the Cartesian terms exactly.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("dry state (a = {a:e}) carries momentum ({m1:e}, {m2:e})")]
    DryMomentum { a: f64, m1: f64, m2: f64 },
}

/// Water column and two momentum components.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct State {
    pub a: f64,
    pub m1: f64,
    pub m2: f64,
}

impl State {
    pub const ZERO: State = State { a: 0.0, m1: 0.0, m2: 0.0 };

    pub const fn new(a: f64, m1: f64, m2: f64) -> Self {
        Self { a, m1, m2 }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.m1.is_finite() && self.m2.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.m1.abs()).max(self.m2.abs())
    }
}

impl Add for State {
    type Output = State;
    #[inline]
    fn add(self, o: State) -> State {
        State::new(self.a + o.a, self.m1 + o.m1, self.m2 + o.m2)
    }
}

impl Sub for State {
    type Output = State;
    #[inline]
    fn sub(self, o: State) -> State {
        State::new(self.a - o.a, self.m1 - o.m1, self.m2 - o.m2)
    }
}

impl Neg for State {
    type Output = State;
    #[inline]
    fn neg(self) -> State {
        State::new(-self.a, -self.m1, -self.m2)
    }
}

impl Mul<f64> for State {
    type Output = State;
    #[inline]
    fn mul(self, s: f64) -> State {
        State::new(self.a * s, self.m1 * s, self.m2 * s)
    }
}

impl AddAssign for State {
    #[inline]
    fn add_assign(&mut self, o: State) {
        self.a += o.a;
        self.m1 += o.m1;
        self.m2 += o.m2;
    }
}

impl SubAssign for State {
    #[inline]
    fn sub_assign(&mut self, o: State) {
        self.a -= o.a;
        self.m1 -= o.m1;
        self.m2 -= o.m2;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// x, or θ on the sphere
    X,
    /// y, or φ on the sphere
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Cartesian,
    Spherical,
}

fn check_dry(w: &State, h_dry: f64) -> Result<bool, PhysicsError> {
    if w.a >= h_dry {
        return Ok(false);
    }
    if w.m1 != 0.0 || w.m2 != 0.0 {
        return Err(PhysicsError::DryMomentum { a: w.a, m1: w.m1, m2: w.m2 });
    }
    Ok(true)
}

/// Convective flux without the pressure part.
pub fn flux_cartesian(w: State, axis: Axis, h_dry: f64) -> Result<State, PhysicsError> {
    flux_spherical(w, 1.0, axis, h_dry)
}

pub fn flux_spherical(w: State, sigma: f64, axis: Axis, h_dry: f64) -> Result<State, PhysicsError> {
    if check_dry(&w, h_dry)? {
        return Ok(State::ZERO);
    }
    Ok(match axis {
        Axis::X => {
            let u = w.m1 / (w.a * sigma);
            State::new(w.m1 / sigma, w.m1 * u, w.m2 * u)
        }
        Axis::Y => {
            let v = w.m2 / w.a;
            State::new(w.m2, w.m1 * v, w.m2 * v)
        }
    })
}

/// Coefficient vector multiplying the free-surface gradient along `axis`.
pub fn pressure_vector(a: f64, sigma: f64, axis: Axis, mode: Mode, g: f64) -> State {
    let p = match mode {
        Mode::Cartesian => g * a,
        Mode::Spherical => match axis {
            Axis::X => g * a / (sigma * sigma),
            Axis::Y => g * a / sigma,
        },
    };
    match axis {
        Axis::X => State::new(0.0, p, 0.0),
        Axis::Y => State::new(0.0, 0.0, p),
    }
}

/// Metric source G¹ + G², to be multiplied by ∂σ/∂φ. `fluct` stands in for
/// the free surface in G²; dry points return zero.
pub fn geometric_source(w: State, sigma: f64, fluct: f64, g: f64, h_dry: f64) -> State {
    if w.a < h_dry {
        return State::ZERO;
    }
    let inv = 1.0 / (w.a * sigma);
    State::new(
        0.0,
        w.m1 * w.m2 * inv,
        -w.m1 * w.m1 * inv - g * w.a * fluct / (sigma * sigma),
    )
}

/// Maps momenta into the frame whose first axis is `nu`.
#[inline]
pub fn rotate(w: State, nu: [f64; 2]) -> State {
    State::new(w.a, nu[0] * w.m1 + nu[1] * w.m2, -nu[1] * w.m1 + nu[0] * w.m2)
}

#[inline]
pub fn unrotate(w: State, nu: [f64; 2]) -> State {
    State::new(w.a, nu[0] * w.m1 - nu[1] * w.m2, nu[1] * w.m1 + nu[0] * w.m2)
}

/// One-dimensional convective flux in a rotated frame: (m, m²/a, m·t/a).
#[inline]
pub fn flux_1d(u: State) -> State {
    if u.a <= 0.0 {
        return State::ZERO;
    }
    let vel = u.m1 / u.a;
    State::new(u.m1, u.m1 * vel, u.m2 * vel)
}

/// One-dimensional pressure coefficient (0, g·h, 0).
#[inline]
pub fn pressure_1d(h: f64, g: f64) -> State {
    State::new(0.0, g * h, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeGeometry {
    pub n: [f64; 2],
    pub sigma: f64,
    pub delta: f64,
    pub nu: [f64; 2],
}

/// Metric factors at an edge point with unit normal `n` (axis-aligned).
pub fn edge_geometry(mode: Mode, n: [f64; 2], sigma: f64) -> EdgeGeometry {
    match mode {
        Mode::Cartesian => EdgeGeometry { n, sigma: 1.0, delta: 1.0, nu: n },
        Mode::Spherical => {
            let delta = ((n[0] / sigma).powi(2) + n[1] * n[1]).sqrt();
            EdgeGeometry { n, sigma, delta, nu: [n[0] / (sigma * delta), n[1] / delta] }
        }
    }
}
