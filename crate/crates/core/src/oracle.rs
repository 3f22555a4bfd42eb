//! Ground truth: closed-form solutions for a few scalar problems, a
//! fine-grid reference solver for everything else, and the mean-square
//! oscillation statistic of `Z` between grid times.

use crate::backward::{evaluate_scheme, solve_backward, SchemeSolution};
use crate::condexp::{QuadratureRule, SpatialGrid};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forward::simulate_forward;
use crate::model::{BdsdeProblem, PolynomialFamily, TimeGrid};
use crate::rng::{refine_bundle, PathBundle};
use crate::stats::mean_se;
use std::fmt;
use std::str::FromStr;

/// Smallest refinement factor accepted by [`fine_grid_reference`].
pub const MIN_REFINE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseId {
    /// `φ(x) = x`, zero drivers: `Y = X`, `Z = 1`.
    Identity,
    /// `g ≡ g0`: `Y_t = X_t + g0·(B_T − B_t)`, `Z = 1`.
    AdditiveG,
    /// `f = c·y`: `Y_t = e^{c(T−t)} X_t`, `Z_t = e^{c(T−t)}`.
    LinearF,
    /// `φ(x) = x²`: `Y_t = X_t² + (T − t)`, `Z_t = 2 X_t`.
    QuadraticPhi,
    /// `g = β·y`: `Y_t = X_t·E_t`, `Z_t = E_t` with
    /// `E_t = exp(β(B_T − B_t) + s·β²(T − t)/2)` and a calibrated sign `s`.
    ExponentialG,
}

impl CaseId {
    pub const ALL: [CaseId; 5] = [
        CaseId::Identity,
        CaseId::AdditiveG,
        CaseId::LinearF,
        CaseId::QuadraticPhi,
        CaseId::ExponentialG,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::Identity => "identity",
            CaseId::AdditiveG => "additive_g",
            CaseId::LinearF => "linear_f",
            CaseId::QuadraticPhi => "quadratic_phi",
            CaseId::ExponentialG => "exponential_g",
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        CaseId::ALL
            .into_iter()
            .find(|c| c.name() == key)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseParams {
    pub x0: f64,
    pub horizon: f64,
    pub g0: f64,
    pub c: f64,
    pub beta: f64,
}

impl Default for CaseParams {
    fn default() -> Self {
        CaseParams {
            x0: 1.0,
            horizon: 1.0,
            g0: 0.7,
            c: 0.5,
            beta: 0.5,
        }
    }
}

/// A problem together with its exact `(Y, Z)`.
#[derive(Debug, Clone)]
pub struct ClosedFormCase {
    id: CaseId,
    params: CaseParams,
    problem: BdsdeProblem,
    sign: Option<f64>,
}

/// Outcome of choosing the sign of the exponential correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignCalibration {
    pub sign: f64,
    pub residual_minus: f64,
    pub residual_plus: f64,
}

pub fn closed_form(id: CaseId, params: CaseParams) -> Result<ClosedFormCase> {
    if !(params.horizon > 0.0 && params.horizon.is_finite()) {
        return Err(Error::invalid(format!(
            "horizon must be positive, got {}",
            params.horizon
        )));
    }
    let mut fam = PolynomialFamily::default();
    match id {
        CaseId::Identity => {}
        CaseId::AdditiveG => fam.g.constant = params.g0,
        CaseId::LinearF => fam.f.y = params.c,
        CaseId::QuadraticPhi => fam.terminal = vec![0.0, 0.0, 1.0],
        CaseId::ExponentialG => fam.g.y = params.beta,
    }
    Ok(ClosedFormCase {
        id,
        params,
        problem: fam.into_problem(params.x0)?,
        sign: None,
    })
}

impl ClosedFormCase {
    pub fn id(&self) -> CaseId {
        self.id
    }

    pub fn params(&self) -> &CaseParams {
        &self.params
    }

    pub fn problem(&self) -> &BdsdeProblem {
        &self.problem
    }

    /// The calibrated sign of the exponential correction, if any.
    pub fn sign(&self) -> Option<f64> {
        self.sign
    }

    fn ready(&self) -> Result<Option<f64>> {
        match (self.id, self.sign) {
            (CaseId::ExponentialG, None) => Err(Error::Uncalibrated("exponential_g")),
            (_, s) => Ok(s),
        }
    }

    /// `Y_t` given `X_t = x` and `b_tail = B_T − B_t`.
    pub fn y(&self, t: f64, x: f64, b_tail: f64) -> Result<f64> {
        let s = self.ready()?;
        Ok(self.y_with(s.unwrap_or(0.0), t, x, b_tail))
    }

    /// `Z_t` given `X_t = x` and `b_tail = B_T − B_t`.
    pub fn z(&self, t: f64, x: f64, b_tail: f64) -> Result<f64> {
        let s = self.ready()?;
        Ok(self.z_with(s.unwrap_or(0.0), t, x, b_tail))
    }

    fn exp_factor(&self, sign: f64, t: f64, b_tail: f64) -> f64 {
        let beta = self.params.beta;
        (beta * b_tail + sign * beta * beta * (self.params.horizon - t) / 2.0).exp()
    }

    fn y_with(&self, sign: f64, t: f64, x: f64, b_tail: f64) -> f64 {
        let p = &self.params;
        match self.id {
            CaseId::Identity => x,
            CaseId::AdditiveG => x + p.g0 * b_tail,
            CaseId::LinearF => (p.c * (p.horizon - t)).exp() * x,
            CaseId::QuadraticPhi => x * x + (p.horizon - t),
            CaseId::ExponentialG => x * self.exp_factor(sign, t, b_tail),
        }
    }

    fn z_with(&self, sign: f64, t: f64, x: f64, b_tail: f64) -> f64 {
        let p = &self.params;
        match self.id {
            CaseId::Identity | CaseId::AdditiveG => 1.0,
            CaseId::LinearF => (p.c * (p.horizon - t)).exp(),
            CaseId::QuadraticPhi => 2.0 * x,
            CaseId::ExponentialG => self.exp_factor(sign, t, b_tail),
        }
    }

    /// Picks the sign of the exponential correction with the smaller
    /// mean-square residual on `bundles`. Only meaningful for
    /// [`CaseId::ExponentialG`].
    pub fn calibrate_sign(
        &mut self,
        grid: &TimeGrid,
        bundles: &[PathBundle],
        exec: Execution,
    ) -> Result<SignCalibration> {
        if self.id != CaseId::ExponentialG {
            return Err(Error::invalid(format!(
                "case {} has no sign to calibrate",
                self.id
            )));
        }
        let residual_minus = mean_square_residual(self, -1.0, grid, bundles, exec)?;
        let residual_plus = mean_square_residual(self, 1.0, grid, bundles, exec)?;
        let sign = if residual_minus <= residual_plus {
            -1.0
        } else {
            1.0
        };
        self.sign = Some(sign);
        Ok(SignCalibration {
            sign,
            residual_minus,
            residual_plus,
        })
    }

    /// Sets the sign from a previous calibration.
    pub fn with_calibration(mut self, calibration: &SignCalibration) -> Self {
        if self.id == CaseId::ExponentialG {
            self.sign = Some(calibration.sign);
        }
        self
    }
}

fn check_bundles(grid: &TimeGrid, bundles: &[PathBundle]) -> Result<()> {
    if bundles.is_empty() {
        return Err(Error::invalid("at least one bundle is required"));
    }
    if bundles.iter().any(|b| b.grid().times() != grid.times()) {
        return Err(Error::GridMismatch("bundle not on the given grid".into()));
    }
    Ok(())
}

/// Discretised integral equation along one path, started at `t_0`:
/// `Y_0 − φ(X_T) − Σ f(t_i, Θ_{t_i})Δt − Σ g(t_{i+1}, Θ_{t_{i+1}})ΔB + Σ Z_{t_i}ΔW`.
fn path_residual(case: &ClosedFormCase, sign: f64, bundle: &PathBundle) -> Result<f64> {
    let grid = bundle.grid();
    let n = grid.n();
    let traj = simulate_forward(&case.problem, bundle.grid_arc(), bundle)?;
    let tail = bundle.b_tail();
    let coeffs = case.problem.coefficients();
    let x = |i: usize| traj.state(i)[0];
    let y = |i: usize| case.y_with(sign, grid.time(i), x(i), tail[i]);
    let z = |i: usize| case.z_with(sign, grid.time(i), x(i), tail[i]);
    let mut r = y(0) - coeffs.terminal(traj.state(n));
    for i in 0..n {
        let dt = grid.dt(i + 1);
        r -= coeffs.driver_f(grid.time(i), traj.state(i), y(i), &[z(i)]) * dt;
        r -= coeffs.driver_g(grid.time(i + 1), traj.state(i + 1), y(i + 1), &[z(i + 1)])
            * bundle.db(i + 1);
        r += z(i) * bundle.dw(i + 1)[0];
    }
    Ok(r)
}

fn mean_square_residual(
    case: &ClosedFormCase,
    sign: f64,
    grid: &TimeGrid,
    bundles: &[PathBundle],
    exec: Execution,
) -> Result<f64> {
    check_bundles(grid, bundles)?;
    let r = exec.try_map(bundles.len(), |k| path_residual(case, sign, &bundles[k]))?;
    Ok(r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64)
}

/// Mean-square residual of the closed form in the integral equation on a
/// (fine) grid. `f` and `ZΔW` use left endpoints, `gΔB` right endpoints.
pub fn residual_check(
    case: &ClosedFormCase,
    grid: &TimeGrid,
    bundles: &[PathBundle],
    exec: Execution,
) -> Result<f64> {
    let sign = case.ready()?.unwrap_or(0.0);
    mean_square_residual(case, sign, grid, bundles, exec)
}

/// `Y` and `Z` of a reference solve at the coarse grid times.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceValues {
    pub y: Vec<f64>,
    /// `(n + 1) × d` row-major.
    pub z: Vec<f64>,
}

/// Backward sweep on the grid refined by `factor`, along the bridge
/// refinement of `b_source`'s backward increments.
pub fn refined_solution(
    problem: &BdsdeProblem,
    b_source: &PathBundle,
    factor: usize,
    spatial: &SpatialGrid,
    rule: &QuadratureRule,
    seed: u64,
    exec: Execution,
) -> Result<SchemeSolution> {
    if factor < MIN_REFINE {
        return Err(Error::invalid(format!(
            "reference refinement factor must be at least {MIN_REFINE}, got {factor}"
        )));
    }
    let fine = refine_bundle(b_source, factor, seed)?;
    solve_backward(problem, fine.grid_arc(), fine.db_all(), spatial, rule, exec)
}

/// Evaluates a refined solution along the bridge refinement of `w_source`'s
/// forward increments and keeps every `factor`-th time.
pub fn reference_along(
    solution: &SchemeSolution,
    w_source: &PathBundle,
    factor: usize,
    seed: u64,
) -> Result<ReferenceValues> {
    let fine = refine_bundle(w_source, factor, seed)?;
    if fine.grid().times() != solution.grid().times() {
        return Err(Error::GridMismatch(
            "refined path does not match the reference grid".into(),
        ));
    }
    let traj = simulate_forward(solution.problem(), fine.grid_arc(), &fine)?;
    let ev = evaluate_scheme(solution, &traj)?;
    let n = w_source.n();
    let y = (0..=n).map(|i| ev.y[i * factor]).collect();
    let z = (0..=n).flat_map(|i| ev.z_at(i * factor).to_vec()).collect();
    Ok(ReferenceValues { y, z })
}

/// Reference `(Y, Z)` at the coarse times for every bundle, from the scheme
/// on the grid refined by `factor` along the same Brownian paths.
#[allow(clippy::too_many_arguments)]
pub fn fine_grid_reference(
    problem: &BdsdeProblem,
    coarse: &TimeGrid,
    factor: usize,
    bundles: &[PathBundle],
    spatial: &SpatialGrid,
    rule: &QuadratureRule,
    seed: u64,
    exec: Execution,
) -> Result<Vec<ReferenceValues>> {
    check_bundles(coarse, bundles)?;
    exec.try_map(bundles.len(), |k| {
        let b = &bundles[k];
        let sol = refined_solution(
            problem,
            b,
            factor,
            spatial,
            rule,
            seed,
            Execution::Sequential,
        )?;
        reference_along(&sol, b, factor, seed)
    })
}

/// Monte-Carlo estimates of the mean-square oscillation of `Z` between
/// grid times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityStat {
    /// `Σ_i E∫_{t_{i−1}}^{t_i} |Z_t − Z_{t_{i−1}}|² + |Z_t − Z_{t_i}|² dt`
    pub value: f64,
    pub se: f64,
    /// `Σ_{i=1}^{n−1} E∫_{t_{i−1}}^{t_{i+1}} |Z_t − Z_{t_i}|² dt`
    pub overlapping: f64,
    pub overlapping_se: f64,
    pub paths: usize,
}

/// Oscillation statistic of the exact `Z` on `coarse`, with the time
/// integrals taken by the trapezoid rule on `fine` (which must contain every
/// coarse time) and the expectation over `bundles` (on `fine`).
pub fn z_l2_regularity(
    case: &ClosedFormCase,
    coarse: &TimeGrid,
    fine: &TimeGrid,
    bundles: &[PathBundle],
    exec: Execution,
) -> Result<RegularityStat> {
    case.ready()?;
    let marks = coarse
        .embedding_in(fine)
        .ok_or_else(|| Error::GridMismatch("coarse grid is not nested in the fine grid".into()))?;
    check_bundles(fine, bundles)?;
    let n = coarse.n();
    let per_path = exec.try_map(bundles.len(), |k| -> Result<(f64, f64)> {
        let b = &bundles[k];
        let traj = simulate_forward(&case.problem, b.grid_arc(), b)?;
        let tail = b.b_tail();
        let zs: Vec<f64> = (0..=fine.n())
            .map(|j| case.z(fine.time(j), traj.state(j)[0], tail[j]))
            .collect::<Result<_>>()?;
        // ∫ over fine indices [a, b] of |Z − anchor|² by the trapezoid rule
        let integral = |a: usize, b: usize, anchor: f64| -> f64 {
            (a..b)
                .map(|j| {
                    0.5 * fine.dt(j + 1) * ((zs[j] - anchor).powi(2) + (zs[j + 1] - anchor).powi(2))
                })
                .sum()
        };
        let mut value = 0.0;
        for i in 1..=n {
            let (a, b) = (marks[i - 1], marks[i]);
            value += integral(a, b, zs[a]) + integral(a, b, zs[b]);
        }
        let mut overlapping = 0.0;
        for i in 1..n {
            overlapping += integral(marks[i - 1], marks[i + 1], zs[marks[i]]);
        }
        Ok((value, overlapping))
    })?;
    let values: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let overlaps: Vec<f64> = per_path.iter().map(|p| p.1).collect();
    let (value, se) = mean_se(&values);
    let (overlapping, overlapping_se) = mean_se(&overlaps);
    Ok(RegularityStat {
        value,
        se,
        overlapping,
        overlapping_se,
        paths: bundles.len(),
    })
}

/// `E|Y_{t_j} − Y_{t_0}|²` for each grid index `j` in `lags`, from the closed
/// form along `bundles`.
pub fn y_increment_moments(
    case: &ClosedFormCase,
    grid: &TimeGrid,
    bundles: &[PathBundle],
    lags: &[usize],
    exec: Execution,
) -> Result<Vec<(f64, f64)>> {
    case.ready()?;
    check_bundles(grid, bundles)?;
    if let Some(&j) = lags.iter().find(|&&j| j == 0 || j > grid.n()) {
        return Err(Error::invalid(format!("lag {j} outside 1..={}", grid.n())));
    }
    let per_path = exec.try_map(bundles.len(), |k| -> Result<Vec<f64>> {
        let b = &bundles[k];
        let traj = simulate_forward(&case.problem, b.grid_arc(), b)?;
        let tail = b.b_tail();
        let y = |i: usize| case.y(grid.time(i), traj.state(i)[0], tail[i]);
        let y0 = y(0)?;
        lags.iter().map(|&j| Ok((y(j)? - y0).powi(2))).collect()
    })?;
    Ok(lags
        .iter()
        .enumerate()
        .map(|(l, &j)| {
            let sum: f64 = per_path.iter().map(|p| p[l]).sum();
            (grid.time(j) - grid.time(0), sum / per_path.len() as f64)
        })
        .collect())
}
