use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use super::config::ExperimentConfig;
use crate::backward::{evaluate_scheme, solve_backward};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forward::simulate_forward;
use crate::oracle::{reference_along, refined_solution, SignCalibration};
use crate::rng::{derive_seed, sample_bundles, BrownianSampler};
use crate::stats::mean_se;

/// Errors below this are treated as exact zeros when fitting rates.
pub const EXACTNESS_FLOOR: f64 = 1e-12;
/// Smallest accepted `M·K`.
pub const MIN_SAMPLES: usize = 16;

/// Seed stream of the exponential sign calibration; mesh sizes use their own
/// value as stream.
pub(crate) const CALIBRATION_STREAM: u64 = u64::MAX;
/// Seed stream of the bridge refinements of reference solves.
const REFERENCE_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateFit {
    Slope(f64),
    /// Every error is below [`EXACTNESS_FLOOR`].
    Exact,
}

impl RateFit {
    pub fn slope(self) -> Option<f64> {
        match self {
            RateFit::Slope(s) => Some(s),
            RateFit::Exact => None,
        }
    }
}

impl std::fmt::Display for RateFit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RateFit::Slope(s) => write!(f, "{s:.6}"),
            RateFit::Exact => f.write_str("exact"),
        }
    }
}

/// Least-squares slope of `log(error)` against `log(mesh)`, ignoring points
/// below the exactness floor.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: points.len(),
        });
    }
    if let Some(p) = points
        .iter()
        .find(|p| !(p.0 > 0.0 && p.0.is_finite()) || p.1.is_nan() || p.1 < 0.0)
    {
        return Err(Error::invalid(format!(
            "invalid rate point ({}, {})",
            p.0, p.1
        )));
    }
    let kept: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.1 >= EXACTNESS_FLOOR)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    match kept.len() {
        0 => return Ok(RateFit::Exact),
        1 => return Err(Error::InsufficientPoints { needed: 2, got: 1 }),
        _ => {}
    }
    let n = kept.len() as f64;
    let mx = kept.iter().map(|p| p.0).sum::<f64>() / n;
    let my = kept.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = kept.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = kept.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all meshes are equal"));
    }
    Ok(RateFit::Slope(sxy / sxx))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshErrors {
    pub mesh: f64,
    pub n: usize,
    /// `max_i E|Y_{t_i} − Y^π_{t_i}|²`
    pub err_y: f64,
    pub err_y_se: f64,
    /// Grid index of the maximum in `err_y`.
    pub worst_index: usize,
    /// `E Σ_i Δt_{i+1}|Z_{t_i} − Z^{π,1}_{t_i}|²`
    pub err_z: f64,
    pub err_z_se: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub rows: Vec<MeshErrors>,
    pub slope_y: Option<RateFit>,
    pub slope_z: Option<RateFit>,
    pub seed: u64,
    pub calibration: Option<SignCalibration>,
}

impl ErrorReport {
    /// `(errY + errZ)/|π|` per mesh.
    pub fn bound_ratios(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| (r.err_y + r.err_z) / r.mesh)
            .collect()
    }

    /// Largest over smallest bound ratio.
    pub fn ratio_spread(&self) -> f64 {
        let r = self.bound_ratios();
        let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }

    /// CSV text; the `wall_ms` column is left empty unless `include_timing`.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut out = String::from("mesh,n,errY,errY_se,errZ,errZ_se,wall_ms\n");
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{:e},{:e},{:e},{:e},",
                r.mesh, r.n, r.err_y, r.err_y_se, r.err_z, r.err_z_se
            );
            if include_timing {
                let _ = write!(out, "{:.3}", r.wall_ms);
            }
            out.push('\n');
        }
        if !self.rows.is_empty() {
            let fmt = |s: Option<RateFit>| s.map_or_else(|| "na".to_string(), |s| s.to_string());
            let _ = writeln!(
                out,
                "# slopeY={} slopeZ={} seed={}",
                fmt(self.slope_y),
                fmt(self.slope_z),
                self.seed
            );
        }
        out
    }
}

pub fn emit_report(report: &ErrorReport, path: &Path, include_timing: bool) -> Result<()> {
    std::fs::write(path, report.to_csv(include_timing)).map_err(|e| Error::io(path, e))
}

/// Slope over the rows, or `None` with fewer than three rows.
fn rows_fit(rows: &[MeshErrors], err: impl Fn(&MeshErrors) -> f64) -> Result<Option<RateFit>> {
    if rows.len() < 3 {
        return Ok(None);
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.mesh, err(r))).collect();
    match fit_rate(&pts) {
        Ok(fit) => Ok(Some(fit)),
        Err(Error::InsufficientPoints { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Per outer path: mean over inner paths of the squared `Y` error at each
/// grid index, and of the weighted squared `Z` error.
struct OuterErrors {
    y_sq: Vec<f64>,
    z_sq: f64,
}

/// For every mesh: `M` backward-noise paths, one backward sweep each, then
/// `K` forward paths evaluated against the reference.
pub fn run_convergence(config: &ExperimentConfig, exec: Execution) -> Result<ErrorReport> {
    config.check()?;
    let (m_paths, k_paths) = (config.outer, config.inner);
    if m_paths * k_paths < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "M·K = {} is below the minimum of {MIN_SAMPLES} samples",
            m_paths * k_paths
        )));
    }
    let problem = config.problem()?;
    let spatial = config.spatial(&problem)?;
    let rule = config.rule()?;
    let mut closed = config.closed_case()?;
    let mut calibration = None;
    if let Some(case) = closed.as_mut() {
        if case.id() == crate::oracle::CaseId::ExponentialG {
            let grid = config.uniform_grid(config.calib_n)?;
            let seed = derive_seed(config.seed, CALIBRATION_STREAM);
            let bundles: Vec<_> = sample_bundles(&grid, seed, config.calib_paths, 1).collect();
            calibration = Some(case.calibrate_sign(&grid, &bundles, exec)?);
        }
    }
    let ref_seed = derive_seed(config.seed, REFERENCE_STREAM);

    let mut rows = Vec::with_capacity(config.meshes.len());
    for &n in &config.meshes {
        let start = Instant::now();
        let grid = config.uniform_grid(n)?;
        let sampler = BrownianSampler::new(
            grid.clone(),
            derive_seed(config.seed, n as u64),
            problem.dim(),
        );
        let per_outer = exec.try_map(m_paths, |m| -> Result<OuterErrors> {
            let b_src = sampler.bundle(m as u64);
            let sol = solve_backward(&problem, &grid, b_src.db_all(), &spatial, &rule, exec)?;
            let fine = match closed {
                Some(_) => None,
                None => Some(refined_solution(
                    &problem,
                    &b_src,
                    config.refine,
                    &spatial,
                    &rule,
                    ref_seed,
                    exec,
                )?),
            };
            let tail = b_src.b_tail();
            let mut y_sq = vec![0.0; n + 1];
            let mut z_sq = 0.0;
            for k in 0..k_paths {
                let w_src = sampler.bundle((m * k_paths + k) as u64);
                let traj = simulate_forward(&problem, &grid, &w_src)?;
                let ev = evaluate_scheme(&sol, &traj)?;
                let (y_ref, z_ref) = match (&closed, &fine) {
                    (Some(case), _) => {
                        let mut y = Vec::with_capacity(n + 1);
                        let mut z = Vec::with_capacity(n + 1);
                        for (i, &b) in tail.iter().enumerate().take(n + 1) {
                            let (t, x) = (grid.time(i), traj.state(i)[0]);
                            y.push(case.y(t, x, b)?);
                            z.push(case.z(t, x, b)?);
                        }
                        (y, z)
                    }
                    (None, Some(fine)) => {
                        let r = reference_along(fine, &w_src, config.refine, ref_seed)?;
                        (r.y, r.z)
                    }
                    (None, None) => unreachable!("reference solve exists when no closed form does"),
                };
                for ((acc, r), e) in y_sq.iter_mut().zip(&y_ref).zip(&ev.y) {
                    *acc += (r - e).powi(2);
                }
                for (i, (r, e)) in z_ref.iter().zip(&ev.z).take(n).enumerate() {
                    z_sq += grid.dt(i + 1) * (r - e).powi(2);
                }
            }
            let inv = 1.0 / k_paths as f64;
            y_sq.iter_mut().for_each(|v| *v *= inv);
            Ok(OuterErrors {
                y_sq,
                z_sq: z_sq * inv,
            })
        })?;

        let mut worst_index = 0;
        let mut err_y = f64::NEG_INFINITY;
        for i in 0..=n {
            let mean = per_outer.iter().map(|o| o.y_sq[i]).sum::<f64>() / m_paths as f64;
            if mean > err_y {
                err_y = mean;
                worst_index = i;
            }
        }
        let at_worst: Vec<f64> = per_outer.iter().map(|o| o.y_sq[worst_index]).collect();
        let (_, err_y_se) = mean_se(&at_worst);
        let zs: Vec<f64> = per_outer.iter().map(|o| o.z_sq).collect();
        let (err_z, err_z_se) = mean_se(&zs);
        rows.push(MeshErrors {
            mesh: grid.mesh(),
            n,
            err_y,
            err_y_se,
            worst_index,
            err_z,
            err_z_se,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(ErrorReport {
        slope_y: rows_fit(&rows, |r| r.err_y)?,
        slope_z: rows_fit(&rows, |r| r.err_z)?,
        rows,
        seed: config.seed,
        calibration,
    })
}
