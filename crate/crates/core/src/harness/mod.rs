//! Experiments behind the command-line tool: convergence of the scheme
//! against closed forms or refined references, rate fitting, the Euler
//! forward rate, the `Z` oscillation table, and single solves.

mod config;
mod convergence;
mod forward_rate;
mod regularity;

use std::fmt::Write as _;
use std::path::Path;

pub use config::{CaseSpec, ExperimentConfig};
pub use convergence::{
    emit_report, fit_rate, run_convergence, ErrorReport, MeshErrors, RateFit, EXACTNESS_FLOOR,
    MIN_SAMPLES,
};
pub use forward_rate::{run_forward_rate, ForwardRateReport, ForwardRow};
pub use regularity::{run_regularity, RegularityRow, RegularityTable};

use crate::backward::{
    evaluate_scheme, solve_backward, write_layers, SchemeEvaluation, SchemeSolution,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forward::simulate_forward;
use crate::rng::{derive_seed, write_bundles, BrownianSampler};

/// One backward sweep and one forward path on a single mesh.
#[derive(Debug, Clone)]
pub struct SingleSolve {
    pub solution: SchemeSolution,
    pub evaluation: SchemeEvaluation,
}

impl SingleSolve {
    /// CSV with columns `i,t,Y,Z` (one `Z` column per forward coordinate).
    pub fn to_csv(&self) -> String {
        let d = self.evaluation.dim;
        let mut out = String::from("i,t,Y");
        if d == 1 {
            out.push_str(",Z");
        } else {
            for k in 0..d {
                let _ = write!(out, ",Z{k}");
            }
        }
        out.push('\n');
        let grid = self.solution.grid();
        for i in 0..=grid.n() {
            let _ = write!(out, "{},{},{:e}", i, grid.time(i), self.evaluation.y[i]);
            for z in self.evaluation.z_at(i) {
                let _ = write!(out, ",{z:e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Solves on the first mesh of `config` along path 0, writing the layer and
/// bundle dumps when requested.
pub fn run_single(config: &ExperimentConfig, exec: Execution) -> Result<SingleSolve> {
    config.check()?;
    let &n = config
        .meshes
        .first()
        .ok_or_else(|| Error::Config("`solve` needs a mesh size (`n` or `meshes`)".into()))?;
    let problem = config.problem()?;
    let spatial = config.spatial(&problem)?;
    let rule = config.rule()?;
    let grid = config.uniform_grid(n)?;
    let bundle = BrownianSampler::new(
        grid.clone(),
        derive_seed(config.seed, n as u64),
        problem.dim(),
    )
    .bundle(0);
    let solution = solve_backward(&problem, &grid, bundle.db_all(), &spatial, &rule, exec)?;
    let traj = simulate_forward(&problem, &grid, &bundle)?;
    let evaluation = evaluate_scheme(&solution, &traj)?;
    if let Some(path) = &config.layers_out {
        write_layers(Path::new(path), &solution)?;
    }
    if let Some(path) = &config.bundles_out {
        write_bundles(Path::new(path), std::slice::from_ref(&bundle))?;
    }
    Ok(SingleSolve {
        solution,
        evaluation,
    })
}
