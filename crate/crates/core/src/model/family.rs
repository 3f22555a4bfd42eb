//! Built-in scalar coefficient family: affine drift and diffusion, drivers
//! affine in `(x, y, z)` and a polynomial terminal condition. Every
//! closed-form case in [`crate::oracle`] and the geometric forward model are
//! members of this family.

use std::sync::Arc;

use super::problem::{BdsdeProblem, Coefficients, Lipschitz};
use crate::error::Result;

/// `constant + x·x + y·y + z·z`, time independent.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AffineDriver {
    pub constant: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl AffineDriver {
    pub fn eval(&self, x: f64, y: f64, z: f64) -> f64 {
        self.constant + self.x * x + self.y * y + self.z * z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialFamily {
    /// `b(x) = drift[0] + drift[1]·x`
    pub drift: [f64; 2],
    /// `σ(x) = diffusion[0] + diffusion[1]·x`
    pub diffusion: [f64; 2],
    pub f: AffineDriver,
    pub g: AffineDriver,
    /// `φ(x) = Σ_k terminal[k]·x^k`
    pub terminal: Vec<f64>,
}

impl Default for PolynomialFamily {
    /// Brownian motion with `φ(x) = x` and zero drivers.
    fn default() -> Self {
        PolynomialFamily {
            drift: [0.0, 0.0],
            diffusion: [1.0, 0.0],
            f: AffineDriver::default(),
            g: AffineDriver::default(),
            terminal: vec![0.0, 1.0],
        }
    }
}

impl PolynomialFamily {
    /// Constants implied by the affine drivers:
    /// `(a·Δx + b·Δy + c·Δz)² <= 3·max(a², b², c²)·(Δx² + Δy² + Δz²)`, and for
    /// `g` the `z` part is split off with weight `α = (g_z² + 1)/2` when
    /// `|g_z| < 1`.
    pub fn implied_lipschitz(&self) -> Lipschitz {
        let f = &self.f;
        let l_f = 3.0 * f.x.powi(2).max(f.y.powi(2)).max(f.z.powi(2));
        let g = &self.g;
        let rest = 2.0 * g.x.powi(2).max(g.y.powi(2));
        let gz2 = g.z * g.z;
        let (alpha, l_g) = if gz2 == 0.0 {
            (0.0, rest)
        } else if gz2 < 1.0 {
            let alpha = 0.5 * (gz2 + 1.0);
            let eta = alpha / gz2 - 1.0;
            (alpha, (1.0 + 1.0 / eta) * rest)
        } else {
            (gz2, f64::INFINITY)
        };
        Lipschitz { l_f, l_g, alpha }
    }

    pub fn into_problem(self, x0: f64) -> Result<BdsdeProblem> {
        let lipschitz = self.implied_lipschitz();
        BdsdeProblem::new(Arc::new(self), vec![x0], lipschitz)
    }
}

impl Coefficients for PolynomialFamily {
    fn dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.drift[0] + self.drift[1] * x[0];
    }

    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.diffusion[0] + self.diffusion[1] * x[0];
    }

    fn driver_f(&self, _t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
        self.f.eval(x[0], y, z[0])
    }

    fn driver_g(&self, _t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
        self.g.eval(x[0], y, z[0])
    }

    fn terminal(&self, x: &[f64]) -> f64 {
        self.terminal
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x[0] + c)
    }
}
