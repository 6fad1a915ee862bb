//! Path-conservative HLLC fluctuations for the rotated one-dimensional
//! shallow water system with the free surface as the pressure variable.
//!
//! States are `(a, m, t)`: water column, edge-normal momentum and tangential
//! momentum. The nonconservative pressure product is integrated along the
//! linear path in η, which makes `D⁻ + D⁺ = F(wr) − F(wl) + (0, g·ĥ·Δη, 0)`
//! with ĥ the mean water column.

use thiserror::Error;

use crate::physics::{flux_1d, State};

#[derive(Debug, Error, PartialEq)]
pub enum RiemannError {
    #[error("both sides of the edge are dry")]
    BothDry,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiemannInput {
    pub wl: State,
    pub wr: State,
    pub etal: f64,
    pub etar: f64,
    pub g_eff: f64,
    /// Water columns below this are treated as dry.
    pub dry_tol: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Fluctuation {
    pub dminus: State,
    pub dplus: State,
}

impl Fluctuation {
    pub const ZERO: Fluctuation = Fluctuation { dminus: State::ZERO, dplus: State::ZERO };
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveSpeeds {
    pub sl: f64,
    pub sstar: f64,
    pub sr: f64,
}

fn speeds(al: f64, ul: f64, wet_l: bool, ar: f64, ur: f64, wet_r: bool, g: f64) -> WaveSpeeds {
    let cl = (g * al.max(0.0)).sqrt();
    let cr = (g * ar.max(0.0)).sqrt();
    let (sl, sr) = match (wet_l, wet_r) {
        (true, true) => ((ul - cl).min(ur - cr), (ul + cl).max(ur + cr)),
        (true, false) => (ul - cl, ul + 2.0 * cl),
        (false, true) => (ur - 2.0 * cr, ur + cr),
        (false, false) => (0.0, 0.0),
    };
    let den = ar * (ur - sr) - al * (ul - sl);
    let num = sl * ar * (ur - sr) - sr * al * (ul - sl);
    let scale = (ar * (ur.abs() + sr.abs())).max(al * (ul.abs() + sl.abs()));
    let sstar = if den.abs() > 1e-14 * scale && den.is_finite() {
        num / den
    } else {
        0.5 * (sl + sr)
    };
    WaveSpeeds { sl, sstar, sr }
}

#[inline]
fn velocity(w: &State, wet: bool) -> (f64, f64) {
    if wet {
        (w.m1 / w.a, w.m2 / w.a)
    } else {
        (0.0, 0.0)
    }
}

/// Wave-speed estimates: Davis-type bounds for wet pairs, the dry-front
/// speed u ± 2c against a dry side.
pub fn wave_speeds(inp: &RiemannInput) -> Result<WaveSpeeds, RiemannError> {
    let wet_l = inp.wl.a >= inp.dry_tol;
    let wet_r = inp.wr.a >= inp.dry_tol;
    if !wet_l && !wet_r {
        return Err(RiemannError::BothDry);
    }
    let (ul, _) = velocity(&inp.wl, wet_l);
    let (ur, _) = velocity(&inp.wr, wet_r);
    Ok(speeds(inp.wl.a, ul, wet_l, inp.wr.a, ur, wet_r, inp.g_eff))
}

#[inline]
fn mirror(w: State) -> State {
    State::new(w.a, -w.m1, w.m2)
}

#[inline]
fn emptied(w: State) -> State {
    State::new(w.a.max(0.0), 0.0, 0.0)
}

/// Left- and right-going fluctuations at one edge point.
///
/// Against a dry side whose surface lies at or above the wet surface the
/// edge acts as a reflecting wall: the wet side sees its own mirror image
/// and the dry side receives nothing. Otherwise the dry side is flooded with
/// the surface jump limited to the wet column.
pub fn hllc_fluctuation(inp: &RiemannInput) -> Fluctuation {
    let wet_l = inp.wl.a >= inp.dry_tol;
    let wet_r = inp.wr.a >= inp.dry_tol;
    let g = inp.g_eff;
    match (wet_l, wet_r) {
        (false, false) => Fluctuation::ZERO,
        (true, true) => solve(inp.wl, true, inp.wr, true, inp.etar - inp.etal, g),
        (true, false) => {
            if inp.etar >= inp.etal {
                let f = solve(inp.wl, true, mirror(inp.wl), true, 0.0, g);
                Fluctuation { dminus: f.dminus, dplus: State::ZERO }
            } else {
                let deta = (inp.etar - inp.etal).max(-inp.wl.a);
                solve(inp.wl, true, emptied(inp.wr), false, deta, g)
            }
        }
        (false, true) => {
            if inp.etal >= inp.etar {
                let f = solve(mirror(inp.wr), true, inp.wr, true, 0.0, g);
                Fluctuation { dminus: State::ZERO, dplus: f.dplus }
            } else {
                let deta = (inp.etar - inp.etal).min(inp.wr.a);
                solve(emptied(inp.wl), false, inp.wr, true, deta, g)
            }
        }
    }
}

fn solve(wl: State, wet_l: bool, wr: State, wet_r: bool, deta: f64, g: f64) -> Fluctuation {
    if wl.m1 == 0.0 && wr.m1 == 0.0 && deta == 0.0 {
        return Fluctuation::ZERO;
    }
    let fl = flux_1d(wl);
    let fr = flux_1d(wr);
    let hhat = 0.5 * (wl.a + wr.a);
    let dphi = State::new(fr.a - fl.a, fr.m1 - fl.m1 + g * hhat * deta, fr.m2 - fl.m2);

    let (ul, vl) = velocity(&wl, wet_l);
    let (ur, vr) = velocity(&wr, wet_r);
    let WaveSpeeds { sl, sstar, sr } = speeds(wl.a, ul, wet_l, wr.a, ur, wet_r, g);
    if sl >= 0.0 {
        return Fluctuation { dminus: State::ZERO, dplus: dphi };
    }
    if sr <= 0.0 {
        return Fluctuation { dminus: dphi, dplus: State::ZERO };
    }
    let inv = 1.0 / (sr - sl);
    let dm_a = sl * (sr * deta - dphi.a) * inv;
    let dm_m = sl * (sr * (wr.m1 - wl.m1) - dphi.m1) * inv;
    // mass flux through the edge, carrying the upwind tangential velocity
    let mass_flux = fl.a + dm_a;
    let v = if sstar > 0.0 {
        vl
    } else if sstar < 0.0 {
        vr
    } else {
        0.5 * (vl + vr)
    };
    let dminus = State::new(dm_a, dm_m, mass_flux * v - fl.m2);
    Fluctuation { dminus, dplus: dphi - dminus }
}
