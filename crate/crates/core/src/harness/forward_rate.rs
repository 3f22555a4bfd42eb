use std::fmt::Write as _;
use std::sync::Arc;

use super::convergence::{fit_rate, RateFit};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forward::{exact_forward, simulate_forward, ExactFamily};
use crate::model::build_uniform_grid;
use crate::rng::BrownianSampler;
use crate::stats::mean_se;

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRow {
    pub mesh: f64,
    pub n: usize,
    /// `max_i E|X_{t_i} − X^π_{t_i}|²`
    pub err: f64,
    pub err_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRateReport {
    pub rows: Vec<ForwardRow>,
    pub slope: Option<RateFit>,
    pub seed: u64,
}

impl ForwardRateReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mesh,n,err,err_se\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:e},{:e}", r.mesh, r.n, r.err, r.err_se);
        }
        if !self.rows.is_empty() {
            let slope = self
                .slope
                .map_or_else(|| "na".to_string(), |s| s.to_string());
            let _ = writeln!(out, "# slope={slope} seed={}", self.seed);
        }
        out
    }
}

/// Strong mean-square error of the Euler scheme against the exact solution
/// of `family`. Paths are drawn once on the finest mesh and summed onto the
/// coarser ones, so every mesh sees the same Brownian paths.
pub fn run_forward_rate(
    family: ExactFamily,
    x0: f64,
    horizon: f64,
    meshes: &[usize],
    paths: usize,
    seed: u64,
    exec: Execution,
) -> Result<ForwardRateReport> {
    if paths == 0 {
        return Err(Error::invalid("at least one path is required"));
    }
    let Some(&finest) = meshes.iter().max() else {
        return Ok(ForwardRateReport {
            rows: vec![],
            slope: None,
            seed,
        });
    };
    if let Some(&n) = meshes.iter().find(|&&n| n == 0 || finest % n != 0) {
        return Err(Error::invalid(format!(
            "mesh size {n} does not divide the finest size {finest}"
        )));
    }
    let problem = family.problem(vec![x0])?;
    let fine_grid = Arc::new(build_uniform_grid(finest, horizon)?);
    let grids: Vec<_> = meshes
        .iter()
        .map(|&n| build_uniform_grid(n, horizon).map(Arc::new))
        .collect::<Result<_>>()?;
    let sampler = BrownianSampler::new(fine_grid, seed, 1);

    // per path, per mesh: squared error at each grid index
    let per_path = exec.try_map(paths, |p| -> Result<Vec<Vec<f64>>> {
        let fine = sampler.bundle(p as u64);
        grids
            .iter()
            .map(|grid| {
                let bundle = if grid.n() == finest {
                    fine.clone()
                } else {
                    fine.coarsen(grid.clone(), finest / grid.n())?
                };
                let exact = exact_forward(family, &[x0], grid, &bundle)?;
                let euler = simulate_forward(&problem, grid, &bundle)?;
                Ok((0..=grid.n())
                    .map(|i| (exact.state(i)[0] - euler.state(i)[0]).powi(2))
                    .collect())
            })
            .collect()
    })?;

    let rows: Vec<ForwardRow> = grids
        .iter()
        .enumerate()
        .map(|(g, grid)| {
            let mut worst = 0;
            let mut err = f64::NEG_INFINITY;
            for i in 0..=grid.n() {
                let mean = per_path.iter().map(|p| p[g][i]).sum::<f64>() / paths as f64;
                if mean > err {
                    err = mean;
                    worst = i;
                }
            }
            let at_worst: Vec<f64> = per_path.iter().map(|p| p[g][worst]).collect();
            ForwardRow {
                mesh: grid.mesh(),
                n: grid.n(),
                err,
                err_se: mean_se(&at_worst).1,
            }
        })
        .collect();
    let slope = if rows.len() >= 3 {
        Some(fit_rate(
            &rows.iter().map(|r| (r.mesh, r.err)).collect::<Vec<_>>(),
        )?)
    } else {
        None
    };
    Ok(ForwardRateReport { rows, slope, seed })
}
