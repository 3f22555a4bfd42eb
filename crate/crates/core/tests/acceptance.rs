//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use bdsde::backward::{evaluate_scheme, solve_backward};
use bdsde::condexp::{expect, gauss_hermite, Axis, Interpolation, QuadratureRule, SpatialGrid};
use bdsde::config::KeyValues;
use bdsde::forward::{simulate_forward, ExactFamily};
use bdsde::harness::{
    run_convergence, run_forward_rate, ExperimentConfig, RateFit, EXACTNESS_FLOOR,
};
use bdsde::model::{build_uniform_grid, AffineDriver, BdsdeProblem, PolynomialFamily, TimeGrid};
use bdsde::oracle::{closed_form, residual_check, z_l2_regularity, CaseId, CaseParams};
use bdsde::rng::{sample_bundles, BrownianSampler, PathBundle};
use bdsde::Execution;

const EXACT_TOL: f64 = 1e-10;
const RATE_BAND: (f64, f64) = (0.8, 1.3);
const RATIO_SPREAD_MAX: f64 = 3.0;
const MC_SIGMAS: f64 = 3.0;
const CROSS_CHECK_TOL: f64 = 1e-9;
const MOMENT_RTOL: f64 = 1e-10;
const RESIDUAL_DROP_MIN: f64 = 3.0;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> Result<Outcome, String>;

fn config(text: &str) -> Result<ExperimentConfig, String> {
    let kv = KeyValues::parse(text).map_err(|e| e.to_string())?;
    ExperimentConfig::from_kv(&kv).map_err(|e| e.to_string())
}

fn in_band(v: f64, band: (f64, f64)) -> bool {
    v >= band.0 && v <= band.1
}

fn affine_exactness() -> Result<Outcome, String> {
    let c = config("case=identity\nmeshes=4,8,16,32\nM=16\nK=16\nseed=1")?;
    let r = run_convergence(&c, Execution::Sequential).map_err(|e| e.to_string())?;
    let worst_y = r.rows.iter().map(|row| row.err_y).fold(0.0, f64::max);
    let worst_z = r.rows.iter().map(|row| row.err_z).fold(0.0, f64::max);
    Ok(Outcome::new(
        worst_y < EXACT_TOL && worst_z < EXACT_TOL,
        format!("identity: max errY {worst_y:.2e}, max errZ {worst_z:.2e} (< {EXACT_TOL:e})"),
    ))
}

fn convergence_rate() -> Result<Outcome, String> {
    let mut pass = true;
    let mut parts = Vec::new();
    for case in ["case=additive_g\ng0=0.7", "case=linear_f\nc=0.5"] {
        let c = config(&format!(
            "{case}\nT=1\nmeshes=4,8,16,32\nM=64\nK=64\nseed=2"
        ))?;
        let r = run_convergence(&c, Execution::Sequential).map_err(|e| e.to_string())?;
        let slope_ok = matches!(r.slope_y, Some(RateFit::Slope(s)) if in_band(s, RATE_BAND));
        let spread = r.ratio_spread();
        let spread_ok = spread < RATIO_SPREAD_MAX;
        pass &= slope_ok && spread_ok;
        let slope = r.slope_y.map_or("na".into(), |s| s.to_string());
        parts.push(format!(
            "{}: slopeY {slope} (band [{}, {}]), ratio spread {spread:.2} (< {RATIO_SPREAD_MAX})",
            c.case_name(),
            RATE_BAND.0,
            RATE_BAND.1
        ));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn z_regularity() -> Result<Outcome, String> {
    let case =
        closed_form(CaseId::QuadraticPhi, CaseParams::default()).map_err(|e| e.to_string())?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, target) in [(10usize, 0.4), (20, 0.2)] {
        let coarse = build_uniform_grid(n, 1.0).map_err(|e| e.to_string())?;
        let fine = Arc::new(build_uniform_grid(n * 8, 1.0).map_err(|e| e.to_string())?);
        let bundles: Vec<PathBundle> = sample_bundles(&fine, 3, 10_000, 1).collect();
        let s = z_l2_regularity(&case, &coarse, &fine, &bundles, Execution::default())
            .map_err(|e| e.to_string())?;
        let ok = (s.value - target).abs() <= MC_SIGMAS * s.se;
        pass &= ok;
        parts.push(format!("n={n}: {:.4} ± {:.4} vs {target}", s.value, s.se));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn forward_rate() -> Result<Outcome, String> {
    let r = run_forward_rate(
        ExactFamily::Geometric { mu: 0.2, nu: 0.3 },
        1.0,
        1.0,
        &[8, 16, 32, 64],
        10_000,
        4,
        Execution::default(),
    )
    .map_err(|e| e.to_string())?;
    let slope = r.slope.and_then(RateFit::slope).unwrap_or(f64::NAN);
    Ok(Outcome::new(
        in_band(slope, RATE_BAND),
        format!(
            "geometric: slope {slope:.3} (band [{}, {}])",
            RATE_BAND.0, RATE_BAND.1
        ),
    ))
}

fn scheme_reduction() -> Result<Outcome, String> {
    let fam = PolynomialFamily {
        drift: [0.1, -0.2],
        diffusion: [0.8, 0.1],
        f: AffineDriver {
            constant: 0.1,
            x: 0.2,
            y: 0.5,
            z: 0.2,
        },
        g: AffineDriver::default(),
        terminal: vec![0.0, 0.5, 1.0],
    };
    let problem = fam.into_problem(1.0).map_err(|e| e.to_string())?;
    let grid = Arc::new(build_uniform_grid(16, 1.0).map_err(|e| e.to_string())?);
    let spatial = SpatialGrid::around(&[1.0], 1.0, 1.0, 201).map_err(|e| e.to_string())?;
    let rule = gauss_hermite(8).map_err(|e| e.to_string())?;
    let sampler = BrownianSampler::new(grid.clone(), 5, 1);
    let mut first = None;
    let mut identical = 0;
    for m in 0..8 {
        let b = sampler.bundle(m);
        let sol = solve_backward(
            &problem,
            &grid,
            b.db_all(),
            &spatial,
            &rule,
            Execution::default(),
        )
        .map_err(|e| e.to_string())?;
        match &first {
            None => {
                first = Some(sol);
                identical += 1;
            }
            Some(f) => {
                if f.layers() == sol.layers() {
                    identical += 1;
                }
            }
        }
    }
    Ok(Outcome::new(
        identical == 8,
        format!("{identical}/8 backward-noise paths give bitwise identical layers"),
    ))
}

/// Conditional means of the two-step scheme by direct nested quadrature,
/// without grid functions: returns `(Y_0, Z_0)` from `x0`.
fn nested_quadrature(
    problem: &BdsdeProblem,
    grid: &TimeGrid,
    db: &[f64],
    rule: &QuadratureRule,
) -> (f64, f64) {
    let c = problem.coefficients();
    let step = |x: f64, dt: f64, w: f64| {
        let mut b = [0.0];
        let mut s = [0.0];
        c.drift(&[x], &mut b);
        c.diffusion(&[x], &mut s);
        x + b[0] * dt + s[0] * w
    };
    // (Y, Z) at t_1 from the state there
    let at_t1 = |x1: f64| -> (f64, f64) {
        let (dt, t2) = (grid.dt(2), grid.time(2));
        let integrand = |w: &[f64]| {
            let x2 = step(x1, dt, w[0]);
            let y2 = c.terminal(&[x2]);
            y2 + c.driver_f(t2, &[x2], y2, &[0.0]) * dt + c.driver_g(t2, &[x2], y2, &[0.0]) * db[1]
        };
        let y = expect(rule, dt, 1, integrand).unwrap();
        let z = expect(rule, dt, 1, |w| integrand(w) * w[0]).unwrap() / dt;
        (y, z)
    };
    let (dt, t1) = (grid.dt(1), grid.time(1));
    let x0 = problem.x0()[0];
    let integrand = |w: &[f64]| {
        let x1 = step(x0, dt, w[0]);
        let (y1, z1) = at_t1(x1);
        y1 + c.driver_f(t1, &[x1], y1, &[z1]) * dt + c.driver_g(t1, &[x1], y1, &[z1]) * db[0]
    };
    let y = expect(rule, dt, 1, integrand).unwrap();
    let z = expect(rule, dt, 1, |w| integrand(w) * w[0]).unwrap() / dt;
    (y, z)
}

fn representation_cross_check() -> Result<Outcome, String> {
    let grid = Arc::new(build_uniform_grid(2, 1.0).map_err(|e| e.to_string())?);
    let rule = gauss_hermite(8).map_err(|e| e.to_string())?;
    let db = [0.37, -0.52];
    let bundle = PathBundle::from_parts(grid.clone(), 1, vec![0.0, 0.0], db.to_vec(), 0, 0)
        .map_err(|e| e.to_string())?;
    let instances = [
        (
            "affine data, multilinear layers",
            PolynomialFamily {
                drift: [0.1, -0.2],
                diffusion: [0.8, 0.1],
                f: AffineDriver {
                    constant: 0.1,
                    x: 0.3,
                    y: 0.5,
                    z: -0.2,
                },
                g: AffineDriver {
                    constant: 0.2,
                    x: -0.1,
                    y: 0.3,
                    z: 0.4,
                },
                terminal: vec![0.5, 1.2],
            },
            Interpolation::Multilinear,
        ),
        (
            "quadratic terminal, cubic layers",
            PolynomialFamily {
                drift: [0.1, 0.0],
                diffusion: [0.8, 0.0],
                f: AffineDriver {
                    constant: 0.1,
                    x: 0.3,
                    y: 0.5,
                    z: -0.2,
                },
                g: AffineDriver {
                    constant: 0.2,
                    x: -0.1,
                    y: 0.3,
                    z: 0.4,
                },
                terminal: vec![0.5, 1.2, 0.7],
            },
            Interpolation::Cubic,
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, fam, interp) in instances {
        let problem = fam.into_problem(1.0).map_err(|e| e.to_string())?;
        let spatial = SpatialGrid::new(
            vec![Axis::new(-15.0, 17.0, 321).map_err(|e| e.to_string())?],
            interp,
        )
        .map_err(|e| e.to_string())?;
        let sol = solve_backward(&problem, &grid, &db, &spatial, &rule, Execution::Sequential)
            .map_err(|e| e.to_string())?;
        let traj = simulate_forward(&problem, &grid, &bundle).map_err(|e| e.to_string())?;
        let ev = evaluate_scheme(&sol, &traj).map_err(|e| e.to_string())?;
        let (y, z) = nested_quadrature(&problem, &grid, &db, &rule);
        let (dy, dz) = ((ev.y[0] - y).abs(), (ev.z[0] - z).abs());
        pass &= dy <= CROSS_CHECK_TOL && dz <= CROSS_CHECK_TOL;
        parts.push(format!("{label}: |ΔY| {dy:.1e}, |ΔZ| {dz:.1e}"));
    }
    Ok(Outcome::new(
        pass,
        format!("{} (tol {CROSS_CHECK_TOL:e})", parts.join("; ")),
    ))
}

fn quadrature_exactness() -> Result<Outcome, String> {
    let rule = gauss_hermite(8).map_err(|e| e.to_string())?;
    let moment = |k: i32| -> f64 {
        if k % 2 == 1 {
            0.0
        } else {
            (1..k).step_by(2).map(f64::from).product()
        }
    };
    let mut worst: f64 = 0.0;
    for k in 0..=14 {
        let q = expect(&rule, 1.0, 1, |w| w[0].powi(k)).map_err(|e| e.to_string())?;
        let exact = moment(k);
        // odd moments vanish; measure them against E|w|^(k+1)
        let err = if exact == 0.0 {
            q.abs() / moment(k + 1)
        } else {
            (q / exact - 1.0).abs()
        };
        worst = worst.max(err);
    }
    let e8 = expect(&rule, 1.0, 1, |w| w[0].powi(8)).map_err(|e| e.to_string())?;
    Ok(Outcome::new(
        worst <= MOMENT_RTOL,
        format!("order 8, moments 0..=14: worst relative error {worst:.1e}; E w^8 = {e8}"),
    ))
}

fn residual_decay() -> Result<Outcome, String> {
    let fine = Arc::new(build_uniform_grid(512, 1.0).map_err(|e| e.to_string())?);
    let coarse = Arc::new(build_uniform_grid(256, 1.0).map_err(|e| e.to_string())?);
    let fine_b: Vec<PathBundle> = sample_bundles(&fine, 6, 2000, 1).collect();
    let coarse_b: Vec<PathBundle> = fine_b
        .iter()
        .map(|b| b.coarsen(coarse.clone(), 2))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let exec = Execution::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for id in CaseId::ALL {
        let mut case = closed_form(id, CaseParams::default()).map_err(|e| e.to_string())?;
        if id == CaseId::ExponentialG {
            case.calibrate_sign(&fine, &fine_b, exec)
                .map_err(|e| e.to_string())?;
        }
        let r1 = residual_check(&case, &coarse, &coarse_b, exec).map_err(|e| e.to_string())?;
        let r2 = residual_check(&case, &fine, &fine_b, exec).map_err(|e| e.to_string())?;
        if r1 < EXACTNESS_FLOOR && r2 < EXACTNESS_FLOOR {
            parts.push(format!("{id}: exact ({r1:.1e}, {r2:.1e})"));
        } else {
            let drop = r1 / r2;
            pass &= drop >= RESIDUAL_DROP_MIN;
            parts.push(format!("{id}: {r1:.2e} -> {r2:.2e} (x{drop:.2})"));
        }
    }
    Ok(Outcome::new(
        pass,
        format!(
            "n=256 -> 512, drop >= {RESIDUAL_DROP_MIN}: {}",
            parts.join("; ")
        ),
    ))
}

fn determinism() -> Result<Outcome, String> {
    let dir = std::env::temp_dir().join(format!("bdsde-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let cfg = dir.join("converge.cfg");
    std::fs::write(
        &cfg,
        "case=quadratic_phi\nmeshes=4,8,16\nM=8\nK=8\nseed=42\n",
    )
    .map_err(|e| e.to_string())?;
    let run = |name: &str, threads: &str| -> Result<Vec<u8>, String> {
        let out = dir.join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_bdsde"))
            .args(["converge", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--threads", threads])
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("converge exited with {status}"));
        }
        std::fs::read(&out).map_err(|e| e.to_string())
    };
    let a = run("a.csv", "1")?;
    let b = run("b.csv", "1")?;
    let c = run("c.csv", "3")?;
    std::fs::remove_dir_all(&dir).ok();
    Ok(Outcome::new(
        a == b && a == c && !a.is_empty(),
        format!(
            "{} bytes; rerun identical: {}; 3 threads identical: {}",
            a.len(),
            a == b,
            a == c
        ),
    ))
}

fn main() {
    let checks: [(u32, &str, Check, Option<Duration>); 9] = [
        (
            1,
            "affine exactness",
            affine_exactness,
            Some(Duration::from_secs(10)),
        ),
        (
            2,
            "convergence rate",
            convergence_rate,
            Some(Duration::from_secs(300)),
        ),
        (
            3,
            "Z regularity statistic",
            z_regularity,
            Some(Duration::from_secs(60)),
        ),
        (
            4,
            "forward rate",
            forward_rate,
            Some(Duration::from_secs(60)),
        ),
        (5, "scheme reduction", scheme_reduction, None),
        (
            6,
            "representation cross-check",
            representation_cross_check,
            None,
        ),
        (7, "quadrature exactness", quadrature_exactness, None),
        (8, "residual decay", residual_decay, None),
        (9, "determinism", determinism, None),
    ];
    let mut failed = 0;
    for (id, name, check, budget) in checks {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= b);
        let (pass, detail) = match result {
            Ok(o) => (o.pass && in_time, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        let budget_note = budget.map_or(String::new(), |b| format!(", budget {}s", b.as_secs()));
        println!(
            "{} criterion {id} ({name}): {detail} [{:.2}s{budget_note}]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {}/{} criteria passed", 9 - failed, 9);
    if failed > 0 {
        std::process::exit(1);
    }
}
