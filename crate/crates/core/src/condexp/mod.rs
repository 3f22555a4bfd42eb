//! Conditional expectations over one Brownian increment (Gauss–Hermite
//! quadrature) and grid representations of functions of the state.

mod grid_function;
mod quadrature;

pub use grid_function::{
    Axis, GridFunction, Interpolation, SpatialGrid, DEFAULT_NODES, DOMAIN_STD_DEVS, MAX_DIM,
};
pub use quadrature::{expect, expect_weighted, gauss_hermite, QuadratureRule, MAX_ORDER};

/// Default Gauss–Hermite order; exact through polynomial degree 15.
pub const DEFAULT_ORDER: usize = 8;

/// `f(x)` by interpolation; see [`GridFunction::interpolate`].
pub fn interpolate(f: &GridFunction, x: &[f64]) -> f64 {
    f.interpolate(x)
}
