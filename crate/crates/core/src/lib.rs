//! Well-balanced high-order finite-volume solver for the shallow water
//! equations on uniform Cartesian and longitude-latitude grids.
//!
//! The spatial discretisation combines CWENO reconstructions of orders three
//! and four with a path-conservative HLLC fluctuation solver; time stepping
//! is third-order SSP Runge-Kutta.

pub mod cli;
pub mod grid;
pub mod io;
pub mod physics;
pub mod reconstruction;
pub mod riemann;
pub mod scenarios;
pub mod solver;

pub use grid::{build_grid, fill_ghosts, BoundaryKind, BoundarySpec, Geometry, Grid, GridConfig, StateField};
pub use physics::State;
pub use reconstruction::{CwenoParams, EpsLaw, Poly, Variant};
pub use solver::{SchemeConfig, Solver};
