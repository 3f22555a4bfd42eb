use std::fmt::Write as _;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::oracle::{z_l2_regularity, CaseId, RegularityStat};
use crate::rng::{derive_seed, sample_bundles};

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityRow {
    pub mesh: f64,
    pub n: usize,
    pub stat: RegularityStat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityTable {
    pub rows: Vec<RegularityRow>,
    pub seed: u64,
}

impl RegularityTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mesh,n,stat,stat_se,overlap,overlap_se,stat_over_mesh\n");
        for r in &self.rows {
            let s = &r.stat;
            let _ = writeln!(
                out,
                "{},{},{:e},{:e},{:e},{:e},{:e}",
                r.mesh,
                r.n,
                s.value,
                s.se,
                s.overlapping,
                s.overlapping_se,
                s.value / r.mesh
            );
        }
        out
    }
}

/// Oscillation statistic of the exact `Z` for each mesh, with the time
/// integral on the mesh refined by `config.refine` and `config.paths` paths.
pub fn run_regularity(config: &ExperimentConfig, exec: Execution) -> Result<RegularityTable> {
    config.check()?;
    let mut case = config
        .closed_case()?
        .ok_or_else(|| Error::Config("the regularity table needs a closed-form case".into()))?;
    if case.id() == CaseId::ExponentialG {
        let grid = config.uniform_grid(config.calib_n)?;
        let bundles: Vec<_> = sample_bundles(
            &grid,
            derive_seed(config.seed, super::convergence::CALIBRATION_STREAM),
            config.calib_paths,
            1,
        )
        .collect();
        case.calibrate_sign(&grid, &bundles, exec)?;
    }
    if config.refine == 0 {
        return Err(Error::Config("`refine` must be at least 1".into()));
    }
    let rows = config
        .meshes
        .iter()
        .map(|&n| {
            let coarse = config.uniform_grid(n)?;
            let fine = config.uniform_grid(n * config.refine)?;
            let bundles: Vec<_> =
                sample_bundles(&fine, derive_seed(config.seed, n as u64), config.paths, 1)
                    .collect();
            let stat = z_l2_regularity(&case, &coarse, &fine, &bundles, exec)?;
            Ok(RegularityRow {
                mesh: coarse.mesh(),
                n,
                stat,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RegularityTable {
        rows,
        seed: config.seed,
    })
}
