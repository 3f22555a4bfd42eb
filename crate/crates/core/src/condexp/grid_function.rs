use crate::error::{Error, Result};

/// Uniform nodes `lo, lo + h, ..., hi` along one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::invalid(format!(
                "axis needs at least 2 nodes, got {count}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("invalid axis bounds [{lo}, {hi}]")));
        }
        Ok(Axis { lo, hi, count })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.count - 1) as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k + 1 == self.count {
            self.hi
        } else {
            self.lo + k as f64 * self.spacing()
        }
    }

    /// Fractional node coordinate of `x`, clamped to `[0, count - 1]` and
    /// snapped to an integer when within rounding of one.
    fn position(&self, x: f64) -> f64 {
        let s = ((x - self.lo) / self.spacing()).clamp(0.0, (self.count - 1) as f64);
        let r = s.round();
        if (s - r).abs() <= 1e-11 * (self.count as f64) {
            r
        } else {
            s
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Tensor-product linear; exact on affine functions.
    #[default]
    Multilinear,
    /// Tensor-product 4-point Lagrange (one-sided at the boundary); exact on
    /// cubic polynomials. Falls back to linear on axes with fewer than 4
    /// nodes.
    Cubic,
}

/// Tensor spatial grid specification shared by every layer of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    pub axes: Vec<Axis>,
    pub interpolation: Interpolation,
}

pub const DEFAULT_NODES: usize = 201;
pub const DOMAIN_STD_DEVS: f64 = 6.0;
pub const MAX_DIM: usize = 3;

impl SpatialGrid {
    pub fn new(axes: Vec<Axis>, interpolation: Interpolation) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIM {
            return Err(Error::invalid(format!(
                "spatial grids support 1..={MAX_DIM} dimensions, got {}",
                axes.len()
            )));
        }
        Ok(SpatialGrid {
            axes,
            interpolation,
        })
    }

    /// `[x0 - 6·scale·√T, x0 + 6·scale·√T]` on every axis with `nodes`
    /// points per axis.
    pub fn around(x0: &[f64], scale: f64, horizon: f64, nodes: usize) -> Result<Self> {
        let half = DOMAIN_STD_DEVS * scale * horizon.sqrt();
        let axes = x0
            .iter()
            .map(|&c| Axis::new(c - half, c + half, nodes))
            .collect::<Result<Vec<_>>>()?;
        SpatialGrid::new(axes, Interpolation::default())
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of flat node `index`; the last axis varies fastest.
    pub fn node(&self, mut index: usize, out: &mut [f64]) {
        for (a, axis) in self.axes.iter().enumerate().rev() {
            out[a] = axis.node(index % axis.count);
            index /= axis.count;
        }
    }

    /// Samples `f` at every node.
    pub fn sample(&self, mut f: impl FnMut(&[f64]) -> f64) -> GridFunction {
        let mut x = vec![0.0; self.dim()];
        let values = (0..self.len())
            .map(|k| {
                self.node(k, &mut x);
                f(&x)
            })
            .collect();
        GridFunction {
            grid: self.clone(),
            values,
        }
    }
}

/// Values on the nodes of a [`SpatialGrid`], evaluated off-grid by
/// interpolation and clamped to the boundary outside the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn from_values(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at node {k}")));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn constant(grid: &SpatialGrid, value: f64) -> Self {
        GridFunction {
            values: vec![value; grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let axes = &self.grid.axes;
        let d = axes.len();
        debug_assert_eq!(x.len(), d);
        // Per-axis stencil start and weights; at most 4 points per axis.
        let mut start = [0usize; MAX_DIM];
        let mut len = [0usize; MAX_DIM];
        let mut weights = [[0.0f64; 4]; MAX_DIM];
        for a in 0..d {
            let axis = &axes[a];
            let s = axis.position(x[a]);
            let cubic = self.grid.interpolation == Interpolation::Cubic && axis.count >= 4;
            if s.fract() == 0.0 {
                // on a node: exact value, no stencil arithmetic
                start[a] = s as usize;
                len[a] = 1;
                weights[a][0] = 1.0;
            } else if cubic {
                let cell = (s.floor() as usize).min(axis.count - 2);
                let st = cell.saturating_sub(1).min(axis.count - 4);
                let u = s - st as f64;
                // Lagrange basis on local nodes 0, 1, 2, 3.
                weights[a] = [
                    -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
                    u * (u - 2.0) * (u - 3.0) / 2.0,
                    -u * (u - 1.0) * (u - 3.0) / 2.0,
                    u * (u - 1.0) * (u - 2.0) / 6.0,
                ];
                start[a] = st;
                len[a] = 4;
            } else {
                let cell = (s.floor() as usize).min(axis.count - 2);
                let frac = s - cell as f64;
                start[a] = cell;
                len[a] = 2;
                weights[a][0] = 1.0 - frac;
                weights[a][1] = frac;
            }
        }
        let mut total = 0.0;
        let mut idx = [0usize; MAX_DIM];
        loop {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..d {
                w *= weights[a][idx[a]];
                flat = flat * axes[a].count + start[a] + idx[a];
            }
            total += w * self.values[flat];
            let mut a = 0;
            loop {
                if a == d {
                    return total;
                }
                idx[a] += 1;
                if idx[a] < len[a] {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid1(lo: f64, hi: f64, n: usize) -> SpatialGrid {
        SpatialGrid::new(
            vec![Axis::new(lo, hi, n).unwrap()],
            Interpolation::Multilinear,
        )
        .unwrap()
    }

    #[test]
    fn exact_at_nodes() {
        let g = grid1(-5.0, 7.0, 201);
        let f = g.sample(|x| (x[0] * 1.3).sin() + x[0] * x[0]);
        let mut x = [0.0];
        for k in 0..g.len() {
            g.node(k, &mut x);
            assert_eq!(f.interpolate(&x), f.values()[k]);
        }
        let fc = g
            .clone()
            .with_interpolation(Interpolation::Cubic)
            .sample(|x| x[0].exp());
        for k in 0..g.len() {
            g.node(k, &mut x);
            assert_eq!(fc.interpolate(&x), fc.values()[k]);
        }
    }

    #[test]
    fn clamps_outside() {
        let g = grid1(0.0, 1.0, 11);
        let f = g.sample(|x| 2.0 * x[0] + 1.0);
        assert_eq!(f.interpolate(&[5.0]), 3.0);
        assert_eq!(f.interpolate(&[-5.0]), 1.0);
    }

    #[test]
    fn cubic_reproduces_cubics() {
        let g = grid1(-2.0, 3.0, 9).with_interpolation(Interpolation::Cubic);
        let p = |x: f64| 0.5 - x + 2.0 * x * x - 0.3 * x * x * x;
        let f = g.sample(|x| p(x[0]));
        for q in [-1.97, -1.1, 0.0123, 1.7, 2.99] {
            assert!((f.interpolate(&[q]) - p(q)).abs() < 1e-12, "at {q}");
        }
    }

    #[test]
    fn multilinear_in_three_dims() {
        let axes = vec![
            Axis::new(-1.0, 1.0, 5).unwrap(),
            Axis::new(0.0, 2.0, 4).unwrap(),
            Axis::new(-3.0, 3.0, 7).unwrap(),
        ];
        let g = SpatialGrid::new(axes, Interpolation::Multilinear).unwrap();
        // multilinear (not just affine) functions are reproduced exactly
        let h = |x: &[f64]| 1.0 + x[0] - 2.0 * x[1] + 0.5 * x[2] + x[0] * x[1] * x[2];
        let f = g.sample(h);
        let q = [0.33, 1.21, -2.4];
        assert!((f.interpolate(&q) - h(&q)).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(Axis::new(0.0, 1.0, 1).is_err());
        assert!(Axis::new(1.0, 0.0, 5).is_err());
        assert!(SpatialGrid::new(vec![], Interpolation::Multilinear).is_err());
        let g = grid1(0.0, 1.0, 3);
        assert!(GridFunction::from_values(g.clone(), vec![1.0, 2.0]).is_err());
        assert!(GridFunction::from_values(g, vec![1.0, f64::NAN, 2.0]).is_err());
    }

    #[test]
    fn default_domain() {
        let g = SpatialGrid::around(&[1.0], 0.5, 4.0, DEFAULT_NODES).unwrap();
        assert_eq!(g.axes[0].lo, 1.0 - 6.0);
        assert_eq!(g.axes[0].hi, 1.0 + 6.0);
        assert_eq!(g.len(), 201);
    }

    proptest! {
        #[test]
        fn affine_exact_inside(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
                               x in -4.99f64..6.99, y in -1.0f64..1.0) {
            let axes = vec![Axis::new(-5.0, 7.0, 201).unwrap(), Axis::new(-1.0, 1.0, 11).unwrap()];
            for interp in [Interpolation::Multilinear, Interpolation::Cubic] {
                let g = SpatialGrid::new(axes.clone(), interp).unwrap();
                let f = g.sample(|p| a * p[0] + b * p[1] + c);
                let exact = a * x + b * y + c;
                prop_assert!((f.interpolate(&[x, y]) - exact).abs() < 1e-12 * (1.0 + exact.abs()) * 10.0);
            }
        }
    }
}
