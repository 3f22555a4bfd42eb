use crate::error::{Error, Result};

/// Relative slack used when comparing step sizes, so that a uniform grid built
/// from `T * i / n` is recognised as 1-uniform despite last-bit rounding in
/// the individual differences.
const STEP_RTOL: f64 = 1e-12;

/// A subdivision `0 = t_0 < t_1 < ... < t_n = T` of the time horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    mesh: f64,
    kappa: f64,
    uniform: bool,
}

impl TimeGrid {
    /// `n` equally spaced intervals on `[0, horizon]`.
    pub fn uniform(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("time grid needs at least one interval"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!(
                "time horizon must be positive and finite, got {horizon}"
            )));
        }
        let times = (0..=n)
            .map(|i| {
                if i == n {
                    horizon
                } else {
                    horizon * i as f64 / n as f64
                }
            })
            .collect();
        Ok(TimeGrid {
            times,
            mesh: horizon / n as f64,
            kappa: 1.0,
            uniform: true,
        })
    }

    /// Arbitrary subdivision. `kappa` is set to the smallest admissible value
    /// `|π| / min Δt_i`.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("time grid needs at least two points"));
        }
        if times[0] != 0.0 {
            return Err(Error::invalid(format!(
                "time grid must start at 0, got {}",
                times[0]
            )));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("time grid contains non-finite points"));
        }
        let mut mesh: f64 = 0.0;
        let mut min_step = f64::INFINITY;
        for w in times.windows(2) {
            let dt = w[1] - w[0];
            if dt <= 0.0 {
                return Err(Error::invalid(format!(
                    "time grid must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
            mesh = mesh.max(dt);
            min_step = min_step.min(dt);
        }
        let uniform = (mesh - min_step) <= STEP_RTOL * mesh;
        Ok(TimeGrid {
            times,
            mesh,
            kappa: if uniform { 1.0 } else { mesh / min_step },
            uniform,
        })
    }

    /// Number of intervals `n`.
    pub fn n(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.n()]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    /// Length of interval `i`, i.e. `t_i - t_{i-1}` for `1 <= i <= n`.
    pub fn dt(&self, i: usize) -> f64 {
        assert!(i >= 1 && i <= self.n(), "interval index {i} out of range");
        if self.uniform {
            self.mesh
        } else {
            self.times[i] - self.times[i - 1]
        }
    }

    /// `|π| = max_i Δt_i`.
    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    /// Smallest κ for which this grid is κ-uniform.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn min_step(&self) -> f64 {
        (1..=self.n())
            .map(|i| self.dt(i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Splits every interval into `factor` equal pieces.
    pub fn refine(&self, factor: usize) -> Result<TimeGrid> {
        if factor == 0 {
            return Err(Error::invalid("refinement factor must be positive"));
        }
        if self.uniform {
            return TimeGrid::uniform(self.n() * factor, self.horizon());
        }
        let mut times = Vec::with_capacity(self.n() * factor + 1);
        for w in self.times.windows(2) {
            for k in 0..factor {
                times.push(w[0] + (w[1] - w[0]) * k as f64 / factor as f64);
            }
        }
        times.push(self.horizon());
        TimeGrid::from_times(times)
    }

    /// If every point of `self` is a point of `fine`, returns for each point
    /// of `self` its index in `fine`.
    pub fn embedding_in(&self, fine: &TimeGrid) -> Option<Vec<usize>> {
        let tol = 1e-12 * self.horizon().max(1.0);
        let mut out = Vec::with_capacity(self.times.len());
        let mut j = 0;
        for &t in &self.times {
            while j < fine.times.len() && fine.times[j] < t - tol {
                j += 1;
            }
            if j == fine.times.len() || (fine.times[j] - t).abs() > tol {
                return None;
            }
            out.push(j);
        }
        Some(out)
    }
}

/// `n` equally spaced intervals on `[0, horizon]`; 1-uniform by construction.
pub fn build_uniform_grid(n: usize, horizon: f64) -> Result<TimeGrid> {
    TimeGrid::uniform(n, horizon)
}

/// True iff `kappa * Δt_i >= |π|` for every interval (up to last-bit rounding
/// of the steps).
pub fn validate_kappa_uniform(grid: &TimeGrid, kappa: f64) -> bool {
    let mesh = grid.mesh();
    (1..=grid.n()).all(|i| kappa * grid.dt(i) >= mesh * (1.0 - STEP_RTOL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_four_intervals() {
        let g = build_uniform_grid(4, 1.0).unwrap();
        assert_eq!(g.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.mesh(), 0.25);
    }

    #[test]
    fn uniform_single_interval() {
        let g = build_uniform_grid(1, 2.0).unwrap();
        assert_eq!(g.times(), &[0.0, 2.0]);
        assert_eq!(g.mesh(), 2.0);
    }

    #[test]
    fn uniform_ten_is_one_uniform() {
        let g = build_uniform_grid(10, 1.0).unwrap();
        assert!((g.mesh() - 0.1).abs() < 1e-15);
        assert_eq!(g.kappa(), 1.0);
        assert!(validate_kappa_uniform(&g, 1.0));
    }

    #[test]
    fn rejects_bad_uniform_input() {
        assert!(build_uniform_grid(0, 1.0).is_err());
        assert!(build_uniform_grid(4, 0.0).is_err());
        assert!(build_uniform_grid(4, -1.0).is_err());
    }

    #[test]
    fn kappa_uniform_examples() {
        let g = TimeGrid::from_times(vec![0.0, 0.1, 0.5, 1.0]).unwrap();
        assert_eq!(g.mesh(), 0.5);
        assert!(!validate_kappa_uniform(&g, 1.0));
        assert!(validate_kappa_uniform(&g, 5.0));
        assert!(validate_kappa_uniform(&g, g.kappa()));
        assert!(validate_kappa_uniform(
            &build_uniform_grid(4, 1.0).unwrap(),
            1.0
        ));
    }

    #[test]
    fn rejects_malformed_times() {
        assert!(TimeGrid::from_times(vec![0.0]).is_err());
        assert!(TimeGrid::from_times(vec![0.1, 1.0]).is_err());
        assert!(TimeGrid::from_times(vec![0.0, 0.5, 0.5, 1.0]).is_err());
    }

    #[test]
    fn embedding() {
        let coarse = build_uniform_grid(10, 1.0).unwrap();
        let fine = coarse.refine(7).unwrap();
        let idx = coarse.embedding_in(&fine).unwrap();
        assert_eq!(idx, (0..=10).map(|i| 7 * i).collect::<Vec<_>>());
        let other = build_uniform_grid(15, 1.0).unwrap();
        assert!(coarse.embedding_in(&other).is_none());
    }

    fn arb_grid() -> impl Strategy<Value = TimeGrid> {
        prop::collection::vec(0.01f64..1.0, 1..20).prop_map(|steps| {
            let mut t = 0.0;
            let mut times = vec![0.0];
            for s in steps {
                t += s;
                times.push(t);
            }
            TimeGrid::from_times(times).unwrap()
        })
    }

    proptest! {
        #[test]
        fn uniform_grids_are_one_uniform(n in 1usize..500, horizon in 0.01f64..50.0) {
            let g = build_uniform_grid(n, horizon).unwrap();
            prop_assert!(validate_kappa_uniform(&g, 1.0));
            prop_assert_eq!(g.times()[n], horizon);
        }

        #[test]
        fn kappa_predicate_is_monotone(g in arb_grid(), k in 1.0f64..20.0, extra in 0.0f64..20.0) {
            if validate_kappa_uniform(&g, k) {
                prop_assert!(validate_kappa_uniform(&g, k + extra));
            }
        }

        #[test]
        fn smallest_admissible_kappa(g in arb_grid()) {
            prop_assert!(validate_kappa_uniform(&g, g.mesh() / g.min_step()));
            prop_assert!(validate_kappa_uniform(&g, g.kappa()));
        }
    }
}
