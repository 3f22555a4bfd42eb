//! Backward recursion for `(Y^π, Z^{π,1})` with the backward noise frozen.
//!
//! Layer `i` holds grid functions `u_i(x)` and `v_i(x)` (one per coordinate
//! of `W`) such that along an Euler path
//! `Y^π_{t_i} = u_i(X^π_{t_i})` and `Z^{π,1}_{t_i} = v_i(X^π_{t_i})`, given
//! the increments `ΔB_{t_{i+1}}, ..., ΔB_{t_n}`. Because the coefficients
//! depend on the path only through the current state, the layers are
//! functions of `x_i` alone.
//!
//! With `x⁺(w) = x + b(x)Δt + σ(x)w` the Euler step from `x` over the next
//! interval, `U = u_{i+1}(x⁺) + f(t_{i+1}, x⁺, u_{i+1}(x⁺), v_{i+1}(x⁺))Δt`
//! and `V = g(t_{i+1}, x⁺, u_{i+1}(x⁺), v_{i+1}(x⁺))`:
//!
//! ```text
//! u_i(x) = E[U] + ΔB_{t_{i+1}} E[V]
//! v_i(x) = (E[U ΔW] + ΔB_{t_{i+1}} E[V ΔW]) / Δt
//! ```
//!
//! where the expectations run over `ΔW ~ N(0, Δt·I)` by Gauss–Hermite
//! quadrature.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::condexp::{GridFunction, QuadratureRule, SpatialGrid};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forward::{euler_step_into, ForwardTrajectory, StepScratch};
use crate::model::{BdsdeProblem, TimeGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardLayer {
    pub index: usize,
    pub u: GridFunction,
    /// One grid function per coordinate of `W`.
    pub v: Vec<GridFunction>,
}

/// All layers of one backward sweep, indexed by time step.
#[derive(Debug, Clone)]
pub struct SchemeSolution {
    layers: Vec<BackwardLayer>,
    frozen_db: Vec<f64>,
    grid: Arc<TimeGrid>,
    problem: BdsdeProblem,
}

impl SchemeSolution {
    pub fn layers(&self) -> &[BackwardLayer] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &BackwardLayer {
        &self.layers[i]
    }

    pub fn frozen_db(&self) -> &[f64] {
        &self.frozen_db
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn problem(&self) -> &BdsdeProblem {
        &self.problem
    }
}

/// `Y^π_{t_i}` and `Z^{π,1}_{t_i}` along one forward path.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeEvaluation {
    pub y: Vec<f64>,
    /// `(n + 1) × d` row-major; the last row is zero.
    pub z: Vec<f64>,
    pub dim: usize,
}

impl SchemeEvaluation {
    pub fn z_at(&self, i: usize) -> &[f64] {
        &self.z[i * self.dim..(i + 1) * self.dim]
    }
}

/// `u_n = φ` on the nodes, `v_n = 0`.
pub fn terminal_layer(problem: &BdsdeProblem, spatial: &SpatialGrid) -> Result<BackwardLayer> {
    check_spatial(problem, spatial)?;
    let coeffs = problem.coefficients();
    let u = spatial.sample(|x| coeffs.terminal(x));
    if let Some(node) = u.values().iter().position(|v| !v.is_finite()) {
        let mut x = vec![0.0; spatial.dim()];
        spatial.node(node, &mut x);
        return Err(Error::NonFiniteLayer {
            layer: usize::MAX,
            node,
            x,
            what: "terminal condition",
        });
    }
    let zero = GridFunction::constant(spatial, 0.0);
    Ok(BackwardLayer {
        index: usize::MAX,
        u,
        v: vec![zero; problem.dim()],
    })
}

fn check_spatial(problem: &BdsdeProblem, spatial: &SpatialGrid) -> Result<()> {
    if spatial.dim() != problem.dim() {
        return Err(Error::GridMismatch(format!(
            "spatial grid has dimension {}, problem has {}",
            spatial.dim(),
            problem.dim()
        )));
    }
    Ok(())
}

/// One step of the recursion: layer `i` from layer `i + 1`.
///
/// `db_next = ΔB_{t_{i+1}}`, `dt_next = Δt_{i+1}` and `t_next = t_{i+1}`,
/// the time argument of `f` and `g`.
pub fn backward_step(
    next: &BackwardLayer,
    db_next: f64,
    dt_next: f64,
    t_next: f64,
    problem: &BdsdeProblem,
    rule: &QuadratureRule,
    exec: Execution,
) -> Result<BackwardLayer> {
    if !(dt_next > 0.0 && dt_next.is_finite()) {
        return Err(Error::invalid(format!(
            "dt must be positive, got {dt_next}"
        )));
    }
    let d = problem.dim();
    let spatial = next.u.grid();
    check_spatial(problem, spatial)?;
    if next.v.len() != d {
        return Err(Error::GridMismatch(format!(
            "layer has {} z-components, problem dimension is {d}",
            next.v.len()
        )));
    }
    let coeffs = problem.coefficients();
    let layer_index = next.index.wrapping_sub(1);
    let nodes = spatial.len();

    let per_node = exec.try_map(nodes, |node| -> Result<(f64, Vec<f64>)> {
        let mut x = vec![0.0; d];
        spatial.node(node, &mut x);
        let mut scratch = StepScratch::new(d);
        let mut xp = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut e_u = 0.0;
        let mut e_v = 0.0;
        let mut e_uw = vec![0.0; d];
        let mut e_vw = vec![0.0; d];
        let mut bad: Option<&'static str> = None;
        rule.for_each_point(dt_next, d, |w, weight| {
            euler_step_into(coeffs, &x, dt_next, w, &mut scratch, &mut xp);
            let y = next.u.interpolate(&xp);
            for (zk, vk) in z.iter_mut().zip(&next.v) {
                *zk = vk.interpolate(&xp);
            }
            let big_u = y + coeffs.driver_f(t_next, &xp, y, &z) * dt_next;
            let big_v = coeffs.driver_g(t_next, &xp, y, &z);
            if bad.is_none() {
                if !big_u.is_finite() {
                    bad = Some("u_{i+1} + f dt");
                } else if !big_v.is_finite() {
                    bad = Some("g");
                }
            }
            e_u += weight * big_u;
            e_v += weight * big_v;
            for k in 0..d {
                e_uw[k] += weight * big_u * w[k];
                e_vw[k] += weight * big_v * w[k];
            }
        });
        if let Some(what) = bad {
            return Err(Error::NonFiniteLayer {
                layer: layer_index,
                node,
                x,
                what,
            });
        }
        let u = e_u + db_next * e_v;
        let v = (0..d)
            .map(|k| (e_uw[k] + db_next * e_vw[k]) / dt_next)
            .collect();
        Ok((u, v))
    })?;

    let mut u_vals = Vec::with_capacity(nodes);
    let mut v_vals = vec![Vec::with_capacity(nodes); d];
    for (u, v) in per_node {
        u_vals.push(u);
        for (col, val) in v_vals.iter_mut().zip(v) {
            col.push(val);
        }
    }
    let wrap = |vals: Vec<f64>, what| {
        GridFunction::from_values(spatial.clone(), vals).map_err(|_| Error::NonFiniteLayer {
            layer: layer_index,
            node: usize::MAX,
            x: vec![],
            what,
        })
    };
    Ok(BackwardLayer {
        index: layer_index,
        u: wrap(u_vals, "u")?,
        v: v_vals
            .into_iter()
            .map(|vals| wrap(vals, "v"))
            .collect::<Result<_>>()?,
    })
}

/// Full backward sweep for one frozen path of `ΔB` (`db[k]` is the increment
/// over `(t_k, t_{k+1}]`).
pub fn solve_backward(
    problem: &BdsdeProblem,
    grid: &Arc<TimeGrid>,
    db: &[f64],
    spatial: &SpatialGrid,
    rule: &QuadratureRule,
    exec: Execution,
) -> Result<SchemeSolution> {
    let n = grid.n();
    if db.len() != n {
        return Err(Error::GridMismatch(format!(
            "{} backward increments for {n} intervals",
            db.len()
        )));
    }
    let mut layers = Vec::with_capacity(n + 1);
    let mut current = terminal_layer(problem, spatial)?;
    current.index = n;
    for i in (0..n).rev() {
        let prev = backward_step(
            &current,
            db[i],
            grid.dt(i + 1),
            grid.time(i + 1),
            problem,
            rule,
            exec,
        )?;
        layers.push(current);
        current = prev;
    }
    layers.push(current);
    layers.reverse();
    Ok(SchemeSolution {
        layers,
        frozen_db: db.to_vec(),
        grid: grid.clone(),
        problem: problem.clone(),
    })
}

/// Reads `(Y^π_{t_i}, Z^{π,1}_{t_i})` off the layers along `traj`. Only
/// `traj.state(i)` is used for index `i`.
pub fn evaluate_scheme(
    solution: &SchemeSolution,
    traj: &ForwardTrajectory,
) -> Result<SchemeEvaluation> {
    if traj.grid().times() != solution.grid.times() {
        return Err(Error::GridMismatch(
            "trajectory and solution live on different time grids".into(),
        ));
    }
    let d = solution.problem.dim();
    if traj.dim() != d {
        return Err(Error::GridMismatch(format!(
            "trajectory dimension {} differs from problem dimension {d}",
            traj.dim()
        )));
    }
    let n = solution.grid.n();
    let mut y = Vec::with_capacity(n + 1);
    let mut z = vec![0.0; (n + 1) * d];
    for i in 0..n {
        let layer = &solution.layers[i];
        let x = traj.state(i);
        y.push(layer.u.interpolate(x));
        for (k, vk) in layer.v.iter().enumerate() {
            z[i * d + k] = vk.interpolate(x);
        }
    }
    y.push(solution.problem.coefficients().terminal(traj.state(n)));
    Ok(SchemeEvaluation { y, z, dim: d })
}

/// Debug dump: one row per node and layer, `layer,x_1..x_d,u,v_1..v_d`.
pub fn write_layers(path: &Path, solution: &SchemeSolution) -> Result<()> {
    let d = solution.problem.dim();
    let mut out = String::from("layer");
    for k in 0..d {
        let _ = write!(out, ",x{k}");
    }
    out.push_str(",u");
    for k in 0..d {
        let _ = write!(out, ",v{k}");
    }
    out.push('\n');
    let mut x = vec![0.0; d];
    for layer in &solution.layers {
        let grid = layer.u.grid();
        for node in 0..grid.len() {
            grid.node(node, &mut x);
            let _ = write!(out, "{}", layer.index);
            for v in &x {
                let _ = write!(out, ",{v}");
            }
            let _ = write!(out, ",{}", layer.u.values()[node]);
            for vk in &layer.v {
                let _ = write!(out, ",{}", vk.values()[node]);
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
