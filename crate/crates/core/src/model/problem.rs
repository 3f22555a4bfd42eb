use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Coefficients of the forward diffusion and of the doubly stochastic
/// backward equation.
///
/// `z` has one component per Brownian coordinate of `W` (so `z.len() == dim`).
/// Implementations must be pure; they are called concurrently.
pub trait Coefficients: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `b(x)` into `out` (length `dim`).
    fn drift(&self, x: &[f64], out: &mut [f64]);

    /// Writes `σ(x)` row-major into `out` (length `dim * dim`).
    fn diffusion(&self, x: &[f64], out: &mut [f64]);

    fn driver_f(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64;

    fn driver_g(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64;

    /// Terminal condition `φ`.
    fn terminal(&self, x: &[f64]) -> f64;
}

/// Declared regularity constants. They are metadata: the validator can
/// only refute them on sampled points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lipschitz {
    pub l_f: f64,
    pub l_g: f64,
    /// Contraction constant of `g` in `z`, must lie in `[0, 1)`.
    pub alpha: f64,
}

impl Default for Lipschitz {
    fn default() -> Self {
        Lipschitz {
            l_f: 0.0,
            l_g: 0.0,
            alpha: 0.0,
        }
    }
}

/// A complete problem: coefficients, initial point and declared constants.
#[derive(Clone)]
pub struct BdsdeProblem {
    coefficients: Arc<dyn Coefficients>,
    x0: Vec<f64>,
    lipschitz: Lipschitz,
}

impl fmt::Debug for BdsdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BdsdeProblem")
            .field("dim", &self.dim())
            .field("x0", &self.x0)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl BdsdeProblem {
    pub fn new(
        coefficients: Arc<dyn Coefficients>,
        x0: Vec<f64>,
        lipschitz: Lipschitz,
    ) -> Result<Self> {
        let d = coefficients.dim();
        if d == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if x0.len() != d {
            return Err(Error::invalid(format!(
                "initial point has {} components, coefficients have dimension {d}",
                x0.len()
            )));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial point must be finite"));
        }
        Ok(BdsdeProblem {
            coefficients,
            x0,
            lipschitz,
        })
    }

    pub fn dim(&self) -> usize {
        self.coefficients.dim()
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn lipschitz(&self) -> Lipschitz {
        self.lipschitz
    }

    pub fn coefficients(&self) -> &dyn Coefficients {
        self.coefficients.as_ref()
    }

    pub fn with_x0(&self, x0: Vec<f64>) -> Result<Self> {
        BdsdeProblem::new(self.coefficients.clone(), x0, self.lipschitz)
    }

    pub fn with_lipschitz(mut self, lipschitz: Lipschitz) -> Self {
        self.lipschitz = lipschitz;
        self
    }
}

type VecFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type DriverFn = dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync;
type TerminalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Closure-backed coefficients for arbitrary problems. Every coefficient
/// defaults to zero.
///
/// ```
/// use bdsde::model::{FnCoefficients, Coefficients};
/// let c = FnCoefficients::new(1)
///     .diffusion(|_, out| out[0] = 1.0)
///     .terminal(|x| x[0] * x[0]);
/// assert_eq!(c.terminal(&[3.0]), 9.0);
/// ```
pub struct FnCoefficients {
    dim: usize,
    drift: Box<VecFn>,
    diffusion: Box<VecFn>,
    driver_f: Box<DriverFn>,
    driver_g: Box<DriverFn>,
    terminal: Box<TerminalFn>,
}

impl FnCoefficients {
    pub fn new(dim: usize) -> Self {
        FnCoefficients {
            dim,
            drift: Box::new(|_, out| out.fill(0.0)),
            diffusion: Box::new(|_, out| out.fill(0.0)),
            driver_f: Box::new(|_, _, _, _| 0.0),
            driver_g: Box::new(|_, _, _, _| 0.0),
            terminal: Box::new(|_| 0.0),
        }
    }

    pub fn drift(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Box::new(f);
        self
    }

    pub fn diffusion(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.diffusion = Box::new(f);
        self
    }

    pub fn driver_f(
        mut self,
        f: impl Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.driver_f = Box::new(f);
        self
    }

    pub fn driver_g(
        mut self,
        f: impl Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.driver_g = Box::new(f);
        self
    }

    pub fn terminal(mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal = Box::new(f);
        self
    }

    pub fn into_problem(self, x0: Vec<f64>, lipschitz: Lipschitz) -> Result<BdsdeProblem> {
        BdsdeProblem::new(Arc::new(self), x0, lipschitz)
    }
}

impl Coefficients for FnCoefficients {
    fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }

    fn driver_f(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
        (self.driver_f)(t, x, y, z)
    }

    fn driver_g(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
        (self.driver_g)(t, x, y, z)
    }

    fn terminal(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }
}
