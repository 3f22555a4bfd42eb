//! Euler discretization of the forward diffusion and exact solutions for the
//! additive and geometric families.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{BdsdeProblem, Coefficients, TimeGrid};
use crate::rng::PathBundle;

/// Grid-time states of a forward path, `(n + 1) × d` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrajectory {
    grid: Arc<TimeGrid>,
    dim: usize,
    states: Vec<f64>,
}

impl ForwardTrajectory {
    pub fn from_states(grid: Arc<TimeGrid>, dim: usize, states: Vec<f64>) -> Result<Self> {
        if dim == 0 || states.len() != (grid.n() + 1) * dim {
            return Err(Error::GridMismatch(format!(
                "{} states for n={} and d={dim}",
                states.len(),
                grid.n()
            )));
        }
        Ok(ForwardTrajectory { grid, dim, states })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x0(&self) -> &[f64] {
        self.state(0)
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [f64] {
        &mut self.states
    }

    /// Keeps the states at the given grid indices, on `grid`.
    pub fn subsample(&self, grid: Arc<TimeGrid>, indices: &[usize]) -> Result<Self> {
        let states = indices
            .iter()
            .flat_map(|&i| self.state(i).iter().copied())
            .collect();
        ForwardTrajectory::from_states(grid, self.dim, states)
    }
}

/// Scratch for allocation-free Euler steps.
pub(crate) struct StepScratch {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
}

impl StepScratch {
    pub(crate) fn new(dim: usize) -> Self {
        StepScratch {
            drift: vec![0.0; dim],
            diffusion: vec![0.0; dim * dim],
        }
    }
}

/// `out = x + b(x)·dt + σ(x)·dw`.
pub(crate) fn euler_step_into(
    coeffs: &dyn Coefficients,
    x: &[f64],
    dt: f64,
    dw: &[f64],
    scratch: &mut StepScratch,
    out: &mut [f64],
) {
    let d = x.len();
    coeffs.drift(x, &mut scratch.drift);
    coeffs.diffusion(x, &mut scratch.diffusion);
    for k in 0..d {
        let mut acc = x[k] + scratch.drift[k] * dt;
        let row = &scratch.diffusion[k * d..(k + 1) * d];
        for (s, w) in row.iter().zip(dw) {
            acc += s * w;
        }
        out[k] = acc;
    }
}

/// One Euler step `x + b(x)·dt + σ(x)·dW`.
pub fn euler_step(
    x: &[f64],
    t: f64,
    dt: f64,
    dw: &[f64],
    problem: &BdsdeProblem,
) -> Result<Vec<f64>> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::invalid(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let d = problem.dim();
    if x.len() != d || dw.len() != d {
        return Err(Error::invalid(format!(
            "state/increment dimension ({}, {}) differs from problem dimension {d}",
            x.len(),
            dw.len()
        )));
    }
    let mut scratch = StepScratch::new(d);
    let mut out = vec![0.0; d];
    euler_step_into(problem.coefficients(), x, dt, dw, &mut scratch, &mut out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "Euler step",
            t,
            x: x.to_vec(),
        });
    }
    Ok(out)
}

/// Euler scheme from `x0` driven by the bundle's `ΔW`.
pub fn simulate_forward(
    problem: &BdsdeProblem,
    grid: &TimeGrid,
    bundle: &PathBundle,
) -> Result<ForwardTrajectory> {
    let d = problem.dim();
    if bundle.dim() != d {
        return Err(Error::GridMismatch(format!(
            "bundle dimension {} differs from problem dimension {d}",
            bundle.dim()
        )));
    }
    if bundle.grid().times() != grid.times() {
        return Err(Error::GridMismatch(
            "bundle was sampled on another grid".into(),
        ));
    }
    let n = grid.n();
    let coeffs = problem.coefficients();
    let mut scratch = StepScratch::new(d);
    let mut states = vec![0.0; (n + 1) * d];
    states[..d].copy_from_slice(problem.x0());
    for i in 1..=n {
        let (prev, next) = states.split_at_mut(i * d);
        let x = &prev[(i - 1) * d..];
        let out = &mut next[..d];
        euler_step_into(coeffs, x, grid.dt(i), bundle.dw(i), &mut scratch, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "Euler step",
                t: grid.time(i - 1),
                x: x.to_vec(),
            });
        }
    }
    ForwardTrajectory::from_states(bundle.grid_arc().clone(), d, states)
}

/// Forward models with a known strong solution. Each coordinate evolves
/// independently with `σ = vol·I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactFamily {
    /// `dX = drift dt + vol dW`
    Additive { drift: f64, vol: f64 },
    /// `dX = mu X dt + nu X dW`
    Geometric { mu: f64, nu: f64 },
}

impl ExactFamily {
    pub fn from_id(id: &str, params: &[f64]) -> Result<Self> {
        match (id, params) {
            ("additive", [drift, vol]) => Ok(ExactFamily::Additive {
                drift: *drift,
                vol: *vol,
            }),
            ("geometric", [mu, nu]) => Ok(ExactFamily::Geometric { mu: *mu, nu: *nu }),
            ("additive" | "geometric", _) => Err(Error::invalid(format!(
                "family `{id}` takes two parameters, got {}",
                params.len()
            ))),
            _ => Err(Error::UnknownFamily(id.to_string())),
        }
    }

    /// The matching problem with zero backward drivers and `φ(x) = x_1`.
    pub fn problem(&self, x0: Vec<f64>) -> Result<BdsdeProblem> {
        use crate::model::{FnCoefficients, Lipschitz};
        let d = x0.len();
        let coeffs = match *self {
            ExactFamily::Additive { drift, vol } => FnCoefficients::new(d)
                .drift(move |_, out| out.fill(drift))
                .diffusion(move |_, out| {
                    out.fill(0.0);
                    for k in 0..d {
                        out[k * d + k] = vol;
                    }
                }),
            ExactFamily::Geometric { mu, nu } => FnCoefficients::new(d)
                .drift(move |x, out| {
                    for (o, v) in out.iter_mut().zip(x) {
                        *o = mu * v;
                    }
                })
                .diffusion(move |x, out| {
                    out.fill(0.0);
                    for k in 0..d {
                        out[k * d + k] = nu * x[k];
                    }
                }),
        };
        coeffs
            .terminal(|x| x[0])
            .into_problem(x0, Lipschitz::default())
    }
}

/// Exact solution at grid times driven by the bundle's `ΔW`.
pub fn exact_forward(
    family: ExactFamily,
    x0: &[f64],
    grid: &TimeGrid,
    bundle: &PathBundle,
) -> Result<ForwardTrajectory> {
    let d = x0.len();
    if bundle.dim() != d || bundle.grid().times() != grid.times() {
        return Err(Error::GridMismatch(
            "bundle does not match grid or dimension".into(),
        ));
    }
    let n = grid.n();
    let mut states = vec![0.0; (n + 1) * d];
    states[..d].copy_from_slice(x0);
    match family {
        ExactFamily::Additive { drift, vol } => {
            // Same accumulation order as the Euler step, which is exact here.
            for i in 1..=n {
                let dt = grid.dt(i);
                for k in 0..d {
                    let prev = states[(i - 1) * d + k];
                    states[i * d + k] = prev + drift * dt + vol * bundle.dw(i)[k];
                }
            }
        }
        ExactFamily::Geometric { mu, nu } => {
            let mut w = vec![0.0; d];
            for i in 1..=n {
                let t = grid.time(i);
                for k in 0..d {
                    w[k] += bundle.dw(i)[k];
                    states[i * d + k] = x0[k] * ((mu - 0.5 * nu * nu) * t + nu * w[k]).exp();
                }
            }
        }
    }
    ForwardTrajectory::from_states(bundle.grid_arc().clone(), d, states)
}
