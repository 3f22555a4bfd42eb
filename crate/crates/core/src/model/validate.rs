//! Sampled checks of the standing assumptions on a problem.
//!
//! Exact verification of the Lipschitz conditions is impossible for black-box
//! coefficients, so the sampled checks are advisory: a failure refutes the
//! declared constants, a pass proves nothing.

use std::fmt;

use super::grid::TimeGrid;
use super::problem::{BdsdeProblem, Coefficients};
use crate::error::{Error, Result};

/// Step of the central differences used for `∂g/∂z`.
const FD_STEP: f64 = 1.0 / 65536.0;
/// Finite-difference estimates within this distance of 1 count as `>= 1`.
const FD_TOL: f64 = 1e-6;
/// Relative slack on the sampled Lipschitz inequalities.
const LIP_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Advisory checks can only refute, not prove.
    pub advisory: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub overall: bool,
}

impl ValidationReport {
    fn from_checks(checks: Vec<Check>) -> Self {
        let overall = checks.iter().all(|c| c.passed);
        ValidationReport { checks, overall }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "[{}] {}{}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                if c.advisory { " (advisory)" } else { "" },
                c.detail
            )?;
        }
        write!(f, "overall: {}", if self.overall { "PASS" } else { "FAIL" })
    }
}

/// Box from which `(x, y, z)` probe points are drawn; `t` ranges over the
/// time grid's horizon. The same `[lo, hi]` is used for every coordinate of
/// `x` and of `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeBox {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub z: (f64, f64),
}

impl ProbeBox {
    /// Symmetric box of half-width `radius` around `x0` for `x` and around 0
    /// for `y` and `z`.
    pub fn around(x0: f64, radius: f64) -> Self {
        ProbeBox {
            x: (x0 - radius, x0 + radius),
            y: (-radius, radius),
            z: (-radius, radius),
        }
    }
}

/// Additive recurrence with the generalised golden ratio (the `R_s`
/// sequence): deterministic and low-discrepancy in any dimension.
struct Lattice {
    alphas: Vec<f64>,
}

impl Lattice {
    fn new(dim: usize) -> Self {
        // phi_s is the unique positive root of x^{s+1} = x + 1.
        let mut phi = 2.0f64;
        for _ in 0..64 {
            phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
        }
        let alphas = (1..=dim).map(|k| phi.powi(-(k as i32)).fract()).collect();
        Lattice { alphas }
    }

    fn point(&self, k: usize, out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(&self.alphas) {
            *o = (0.5 + a * (k as f64 + 1.0)).fract();
        }
    }
}

struct Probe {
    t: f64,
    x: Vec<f64>,
    y: f64,
    z: Vec<f64>,
}

impl Probe {
    fn describe(&self) -> String {
        format!("t={}, x={:?}, y={}, z={:?}", self.t, self.x, self.y, self.z)
    }
}

fn probes(count: usize, dim: usize, horizon: f64, bounds: &ProbeBox, offset: usize) -> Vec<Probe> {
    let lattice = Lattice::new(2 + 2 * dim);
    let mut u = vec![0.0; 2 + 2 * dim];
    let lerp = |(lo, hi): (f64, f64), s: f64| lo + (hi - lo) * s;
    (0..count)
        .map(|k| {
            lattice.point(k + offset, &mut u);
            Probe {
                t: horizon * u[0],
                x: (0..dim).map(|j| lerp(bounds.x, u[1 + j])).collect(),
                y: lerp(bounds.y, u[1 + dim]),
                z: (0..dim).map(|j| lerp(bounds.z, u[2 + dim + j])).collect(),
            }
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum()
}

/// Runs the structural and sampled checks for `problem` used on `grid`.
pub fn validate_problem(
    problem: &BdsdeProblem,
    grid: &TimeGrid,
    probe_count: usize,
    bounds: &ProbeBox,
) -> Result<ValidationReport> {
    if probe_count == 0 {
        return Err(Error::invalid("probe_count must be at least 1"));
    }
    let coeffs = problem.coefficients();
    let d = problem.dim();
    let lip = problem.lipschitz();
    let kappa = grid.kappa();
    let mut checks = Vec::new();

    checks.push(Check {
        name: "alpha_range",
        passed: (0.0..1.0).contains(&lip.alpha),
        advisory: false,
        detail: format!("alpha = {}", lip.alpha),
    });
    checks.push(Check {
        name: "alpha_kappa",
        passed: lip.alpha * kappa < 1.0,
        advisory: false,
        detail: format!(
            "alpha*kappa = {} * {} = {}",
            lip.alpha,
            kappa,
            lip.alpha * kappa
        ),
    });

    let pts = probes(probe_count, d, grid.horizon(), bounds, 0);
    let partners = probes(probe_count, d, grid.horizon(), bounds, probe_count);

    checks.push(finite_check(coeffs, &pts));

    // sup |∂g/∂z| by central differences; for d > 1 the Euclidean norm of the
    // gradient in z.
    let mut sup = 0.0f64;
    let mut worst = None;
    let mut zp = vec![0.0; d];
    let mut zm = vec![0.0; d];
    for p in &pts {
        let mut norm2 = 0.0;
        for j in 0..d {
            zp.copy_from_slice(&p.z);
            zm.copy_from_slice(&p.z);
            zp[j] += FD_STEP;
            zm[j] -= FD_STEP;
            let h = zp[j] - zm[j];
            let diff = coeffs.driver_g(p.t, &p.x, p.y, &zp) - coeffs.driver_g(p.t, &p.x, p.y, &zm);
            norm2 += (diff / h).powi(2);
        }
        let est = norm2.sqrt();
        if est.is_finite() && est > sup {
            sup = est;
            worst = Some(p.describe());
        }
    }
    checks.push(Check {
        name: "dg_dz_sup",
        passed: sup < 1.0 - FD_TOL,
        advisory: true,
        detail: format!(
            "max estimate {sup:.9} over {probe_count} probes{}",
            worst.map(|w| format!(" (at {w})")).unwrap_or_default()
        ),
    });

    // Sampled Lipschitz inequalities on lattice pairs.
    let mut f_worst: Option<(f64, String)> = None;
    let mut g_worst: Option<(f64, String)> = None;
    for (p, q) in pts.iter().zip(&partners) {
        let dt = (p.t - q.t).abs();
        let dx2 = sq_dist(&p.x, &q.x);
        let dy2 = (p.y - q.y).powi(2);
        let dz2 = sq_dist(&p.z, &q.z);
        let df2 =
            (coeffs.driver_f(p.t, &p.x, p.y, &p.z) - coeffs.driver_f(q.t, &q.x, q.y, &q.z)).powi(2);
        let dg2 =
            (coeffs.driver_g(p.t, &p.x, p.y, &p.z) - coeffs.driver_g(q.t, &q.x, q.y, &q.z)).powi(2);
        let f_bound = lip.l_f * (dt + dx2 + dy2 + dz2);
        let g_bound = lip.l_g * (dt + dx2 + dy2) + lip.alpha * dz2;
        let excess = |lhs: f64, rhs: f64| lhs - rhs * (1.0 + LIP_RTOL) - 1e-12;
        for (lhs, rhs, slot) in [(df2, f_bound, &mut f_worst), (dg2, g_bound, &mut g_worst)] {
            let e = excess(lhs, rhs);
            if e > 0.0 && slot.as_ref().is_none_or(|(w, _)| e > *w) {
                *slot = Some((e, format!("{} vs {}", p.describe(), q.describe())));
            }
        }
    }
    for (name, worst, declared) in [
        ("lipschitz_f", f_worst, format!("L_f = {}", lip.l_f)),
        (
            "lipschitz_g",
            g_worst,
            format!("L_g = {}, alpha = {}", lip.l_g, lip.alpha),
        ),
    ] {
        checks.push(Check {
            name,
            passed: worst.is_none(),
            advisory: true,
            detail: match worst {
                None => format!("{declared}: no violation on {probe_count} pairs"),
                Some((e, at)) => format!("{declared}: violated by {e:.3e} at {at}"),
            },
        });
    }

    Ok(ValidationReport::from_checks(checks))
}

fn finite_check(coeffs: &dyn Coefficients, pts: &[Probe]) -> Check {
    let d = coeffs.dim();
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * d];
    for p in pts {
        coeffs.drift(&p.x, &mut b);
        coeffs.diffusion(&p.x, &mut s);
        let bad = if b.iter().any(|v| !v.is_finite()) {
            Some("drift")
        } else if s.iter().any(|v| !v.is_finite()) {
            Some("diffusion")
        } else if !coeffs.driver_f(p.t, &p.x, p.y, &p.z).is_finite() {
            Some("driver f")
        } else if !coeffs.driver_g(p.t, &p.x, p.y, &p.z).is_finite() {
            Some("driver g")
        } else if !coeffs.terminal(&p.x).is_finite() {
            Some("terminal")
        } else {
            None
        };
        if let Some(what) = bad {
            return Check {
                name: "finite_coefficients",
                passed: false,
                advisory: false,
                detail: format!("non-finite {what} at {}", p.describe()),
            };
        }
    }
    Check {
        name: "finite_coefficients",
        passed: true,
        advisory: false,
        detail: format!("all coefficients finite on {} probes", pts.len()),
    }
}
