//! Reproducible Brownian increments for the forward noise `W` (R^d valued)
//! and the backward noise `B` (scalar).
//!
//! Every Gaussian draw is a pure function of
//! `(seed, role, path_index, interval_index, component)`: the key is hashed to
//! a uniform in (0, 1) and mapped through the inverse normal CDF. `W` and `B`
//! use different roles, so they come from disjoint substreams, and bundles can
//! be materialised in any order on any number of threads.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::model::TimeGrid;

const ROLE_W: u64 = 0x57;
const ROLE_B: u64 = 0x42;
const ROLE_BRIDGE_W: u64 = 0x5742_5257;
const ROLE_BRIDGE_B: u64 = 0x5742_5242;
const ROLE_SEED: u64 = 0x5345_4544;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn hash_key(seed: u64, role: u64, path: u64, interval: u64, component: u64) -> u64 {
    let mut h = splitmix(seed);
    for v in [role, path, interval, component] {
        h = splitmix(h ^ splitmix(v));
    }
    h
}

/// Uniform in the open interval (0, 1) with 52 bits of resolution.
#[inline]
fn uniform(key: u64) -> f64 {
    ((key >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

#[inline]
fn std_normal(key: u64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * uniform(key))
}

/// Independent child seed for sub-experiment `stream` (a mesh size, say).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    hash_key(seed, ROLE_SEED, stream, 0, 0)
}

/// Standard normal draw for the given key; exposed for callers that need
/// extra reproducible streams.
pub fn keyed_normal(seed: u64, role: u64, path: u64, interval: u64, component: u64) -> f64 {
    std_normal(hash_key(seed, role, path, interval, component))
}

/// Increments of one `(W, B)` sample path on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    grid: Arc<TimeGrid>,
    dim: usize,
    /// `n × d`, row `k` is the increment over `(t_k, t_{k+1}]`.
    dw: Vec<f64>,
    db: Vec<f64>,
    seed: u64,
    path_index: u64,
}

impl PathBundle {
    pub fn from_parts(
        grid: Arc<TimeGrid>,
        dim: usize,
        dw: Vec<f64>,
        db: Vec<f64>,
        seed: u64,
        path_index: u64,
    ) -> Result<Self> {
        let n = grid.n();
        if dim == 0 || dw.len() != n * dim || db.len() != n {
            return Err(Error::GridMismatch(format!(
                "bundle arrays ({} dW, {} dB) do not match n={n}, d={dim}",
                dw.len(),
                db.len()
            )));
        }
        Ok(PathBundle {
            grid,
            dim,
            dw,
            db,
            seed,
            path_index,
        })
    }

    /// `dW` from `w_source` and `dB` from `b_source`; the result carries the
    /// seed and index of `w_source`.
    pub fn compose(w_source: &PathBundle, b_source: &PathBundle) -> Result<Self> {
        if w_source.grid.times() != b_source.grid.times() {
            return Err(Error::GridMismatch(
                "cannot compose bundles on different grids".into(),
            ));
        }
        Ok(PathBundle {
            db: b_source.db.clone(),
            ..w_source.clone()
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    /// `ΔW` over `(t_{i-1}, t_i]`, `1 <= i <= n`.
    pub fn dw(&self, i: usize) -> &[f64] {
        &self.dw[(i - 1) * self.dim..i * self.dim]
    }

    /// `ΔB` over `(t_{i-1}, t_i]`, `1 <= i <= n`.
    pub fn db(&self, i: usize) -> f64 {
        self.db[i - 1]
    }

    pub fn dw_all(&self) -> &[f64] {
        &self.dw
    }

    pub fn db_all(&self) -> &[f64] {
        &self.db
    }

    /// `B_T - B_{t_i}` for every `i` (length `n + 1`, last entry 0).
    pub fn b_tail(&self) -> Vec<f64> {
        let n = self.n();
        let mut tail = vec![0.0; n + 1];
        for i in (0..n).rev() {
            tail[i] = tail[i + 1] + self.db[i];
        }
        tail
    }

    /// Sums blocks of `factor` consecutive increments. Returns the bundle on
    /// `coarse`, which must be the grid of every `factor`-th point.
    pub fn coarsen(&self, coarse: Arc<TimeGrid>, factor: usize) -> Result<PathBundle> {
        if factor == 0 || coarse.n() * factor != self.n() {
            return Err(Error::GridMismatch(format!(
                "cannot coarsen {} intervals by {factor} onto {}",
                self.n(),
                coarse.n()
            )));
        }
        let d = self.dim;
        let mut dw = vec![0.0; coarse.n() * d];
        let mut db = vec![0.0; coarse.n()];
        for j in 0..coarse.n() {
            for k in 0..factor {
                let fine = j * factor + k;
                for c in 0..d {
                    dw[j * d + c] += self.dw[fine * d + c];
                }
                db[j] += self.db[fine];
            }
        }
        PathBundle::from_parts(coarse, d, dw, db, self.seed, self.path_index)
    }
}

/// Stateless generator of [`PathBundle`]s on a fixed grid.
#[derive(Debug, Clone)]
pub struct BrownianSampler {
    grid: Arc<TimeGrid>,
    seed: u64,
    dim: usize,
}

impl BrownianSampler {
    pub fn new(grid: Arc<TimeGrid>, seed: u64, dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        BrownianSampler { grid, seed, dim }
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn bundle(&self, path_index: u64) -> PathBundle {
        let n = self.grid.n();
        let d = self.dim;
        let mut dw = Vec::with_capacity(n * d);
        let mut db = Vec::with_capacity(n);
        for i in 1..=n {
            let sd = self.grid.dt(i).sqrt();
            for c in 0..d {
                dw.push(sd * keyed_normal(self.seed, ROLE_W, path_index, i as u64, c as u64));
            }
            db.push(sd * keyed_normal(self.seed, ROLE_B, path_index, i as u64, 0));
        }
        PathBundle {
            grid: self.grid.clone(),
            dim: d,
            dw,
            db,
            seed: self.seed,
            path_index,
        }
    }

    pub fn bundles(&self, range: std::ops::Range<u64>) -> impl Iterator<Item = PathBundle> + '_ {
        range.map(move |k| self.bundle(k))
    }
}

/// `count` bundles with path indices `0..count`.
pub fn sample_bundles(
    grid: &Arc<TimeGrid>,
    seed: u64,
    count: usize,
    dim: usize,
) -> impl Iterator<Item = PathBundle> {
    let sampler = BrownianSampler::new(grid.clone(), seed, dim);
    (0..count as u64).map(move |k| sampler.bundle(k))
}

/// Splits one interval increment `total` over `factor` equal sub-steps of
/// length `step` by sequential Brownian-bridge sampling.
///
/// The last two pieces are then adjusted by a few ulps so that the
/// left-to-right floating point sum reproduces `total` bit for bit. When the
/// final addition cancels (every piece much larger than `total`) no such
/// adjustment may exist; the sum then matches `total` up to the rounding of
/// the summation.
fn bridge_split(
    total: f64,
    step: f64,
    factor: usize,
    mut draw: impl FnMut(usize) -> f64,
    out: &mut [f64],
) {
    let mut remaining = total;
    for (k, slot) in out.iter_mut().enumerate().take(factor - 1) {
        let left = (factor - k) as f64;
        let mean = remaining / left;
        let var = step * (left - 1.0) / left;
        let inc = mean + var.sqrt() * draw(k);
        *slot = inc;
        remaining -= inc;
    }
    let head: f64 = out[..factor - 2].iter().fold(0.0, |acc, v| acc + v);
    let prev = out[factor - 2];
    let ulps = |v: f64, k: i32| -> f64 {
        let mut v = v;
        for _ in 0..k.unsigned_abs() {
            v = if k > 0 { v.next_up() } else { v.next_down() };
        }
        v
    };
    for j in [0, 1, -1, 2, -2, 3, -3] {
        let candidate_prev = ulps(prev, j);
        let partial = head + candidate_prev;
        let base = total - partial;
        for i in [0, 1, -1, 2, -2] {
            let last = ulps(base, i);
            if partial + last == total {
                out[factor - 2] = candidate_prev;
                out[factor - 1] = last;
                return;
            }
        }
    }
    out[factor - 1] = total - (head + prev);
}

/// Refines a bundle on a uniform grid by `factor`, keeping the same Brownian
/// paths: the sum of each block of `factor` fine increments reproduces the
/// coarse increment bit for bit.
pub fn refine_bundle(coarse: &PathBundle, factor: usize, seed: u64) -> Result<PathBundle> {
    if factor < 2 {
        return Err(Error::invalid(format!(
            "refinement factor must be at least 2, got {factor}"
        )));
    }
    if !coarse.grid.is_uniform() {
        return Err(Error::invalid(
            "bridge refinement requires a uniform coarse grid",
        ));
    }
    let fine_grid = Arc::new(coarse.grid.refine(factor)?);
    let step = fine_grid.mesh();
    let n = coarse.n();
    let d = coarse.dim;
    let path = coarse.path_index;
    let mut dw = vec![0.0; n * factor * d];
    let mut db = vec![0.0; n * factor];
    let mut block = vec![0.0; factor];
    for j in 0..n {
        let base = (j * factor) as u64;
        for c in 0..d {
            bridge_split(
                coarse.dw[j * d + c],
                step,
                factor,
                |k| keyed_normal(seed, ROLE_BRIDGE_W, path, base + k as u64, c as u64),
                &mut block,
            );
            for (k, v) in block.iter().enumerate() {
                dw[(j * factor + k) * d + c] = *v;
            }
        }
        bridge_split(
            coarse.db[j],
            step,
            factor,
            |k| keyed_normal(seed, ROLE_BRIDGE_B, path, base + k as u64, 0),
            &mut db[j * factor..(j + 1) * factor],
        );
    }
    PathBundle::from_parts(fine_grid, d, dw, db, coarse.seed, path)
}

/// Writes bundles as little-endian `u64` header `seed, n, d, count` followed
/// by, per bundle, the `n·d` increments of `W` (row-major by interval) then
/// the `n` increments of `B`, all little-endian `f64`.
pub fn write_bundles(path: &Path, bundles: &[PathBundle]) -> Result<()> {
    let (seed, n, d) = match bundles.first() {
        Some(b) => (b.seed, b.n(), b.dim),
        None => (0, 0, 0),
    };
    if bundles.iter().any(|b| b.n() != n || b.dim != d) {
        return Err(Error::invalid("all dumped bundles must share n and d"));
    }
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for v in [seed, n as u64, d as u64, bundles.len() as u64] {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for b in bundles {
        for v in b.dw.iter().chain(&b.db) {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Reads a dump written by [`write_bundles`]. Path indices are assigned in
/// file order starting at 0.
pub fn read_bundles(path: &Path, grid: &Arc<TimeGrid>) -> Result<Vec<PathBundle>> {
    let io = |e| Error::io(path, e);
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut word = [0u8; 8];
    let mut header = [0u64; 4];
    for h in &mut header {
        r.read_exact(&mut word).map_err(io)?;
        *h = u64::from_le_bytes(word);
    }
    let [seed, n, d, count] = header;
    if count > 0 && n as usize != grid.n() {
        return Err(Error::GridMismatch(format!(
            "dump has n={n}, grid has n={}",
            grid.n()
        )));
    }
    let (n, d) = (n as usize, d as usize);
    let mut read_vec = |len: usize| -> Result<Vec<f64>> {
        (0..len)
            .map(|_| {
                r.read_exact(&mut word).map_err(io)?;
                Ok(f64::from_le_bytes(word))
            })
            .collect()
    };
    (0..count)
        .map(|k| {
            let dw = read_vec(n * d)?;
            let db = read_vec(n)?;
            PathBundle::from_parts(grid.clone(), d, dw, db, seed, k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_uniform_grid;
    use proptest::prelude::*;

    fn grid(n: usize, t: f64) -> Arc<TimeGrid> {
        Arc::new(build_uniform_grid(n, t).unwrap())
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn uniform_is_open_unit_interval() {
        assert!(uniform(0) > 0.0);
        assert!(uniform(u64::MAX) < 1.0);
        assert!(std_normal(0).is_finite() && std_normal(u64::MAX).is_finite());
        assert!(std_normal(u64::MAX) > 8.0);
    }

    #[test]
    fn forward_increment_mean() {
        let g = grid(1, 1.0);
        let xs: Vec<f64> = sample_bundles(&g, 7, 100_000, 1)
            .map(|b| b.dw(1)[0])
            .collect();
        let (m, _) = mean_var(&xs);
        assert!(m.abs() < 0.02, "mean {m}");
    }

    #[test]
    fn backward_increment_variance() {
        let g = grid(1, 0.25);
        let xs: Vec<f64> = sample_bundles(&g, 11, 100_000, 1)
            .map(|b| b.db(1))
            .collect();
        let (_, v) = mean_var(&xs);
        assert!(v > 0.24 && v < 0.26, "variance {v}");
    }

    #[test]
    fn deterministic_and_order_independent() {
        let g = grid(5, 1.0);
        let a: Vec<PathBundle> = sample_bundles(&g, 3, 20, 2).collect();
        let b: Vec<PathBundle> = sample_bundles(&g, 3, 20, 2).collect();
        assert_eq!(a, b);
        let s = BrownianSampler::new(g.clone(), 3, 2);
        assert_eq!(s.bundle(13), a[13]);
        let other: Vec<PathBundle> = sample_bundles(&g, 4, 20, 2).collect();
        assert_ne!(a[0].dw_all(), other[0].dw_all());
    }

    #[test]
    fn w_and_b_uncorrelated() {
        let g = grid(1, 1.0);
        let n = 100_000;
        let pairs: Vec<(f64, f64, f64)> = sample_bundles(&g, 5, n, 2)
            .map(|b| (b.dw(1)[0], b.dw(1)[1], b.db(1)))
            .collect();
        let cov = |f: fn(&(f64, f64, f64)) -> (f64, f64)| {
            pairs.iter().map(|p| f(p).0 * f(p).1).sum::<f64>() / n as f64
        };
        let bound = 3.0 / (n as f64).sqrt();
        assert!(cov(|p| (p.0, p.2)).abs() < bound);
        assert!(cov(|p| (p.1, p.2)).abs() < bound);
        assert!(cov(|p| (p.0, p.1)).abs() < bound);
    }

    #[test]
    fn refine_two_sums_exactly() {
        let g = grid(2, 1.0);
        let coarse = PathBundle::from_parts(g, 1, vec![0.3, -0.1], vec![0.2, 0.7], 1, 0).unwrap();
        let fine = refine_bundle(&coarse, 2, 99).unwrap();
        assert_eq!(fine.n(), 4);
        assert_eq!(fine.dw(1)[0] + fine.dw(2)[0], 0.3);
        assert_eq!(fine.db(3) + fine.db(4), 0.7);
    }

    #[test]
    fn refine_then_coarsen_roundtrip() {
        let g = grid(6, 2.0);
        for b in sample_bundles(&g, 21, 50, 2) {
            let fine = refine_bundle(&b, 4, 8).unwrap();
            let back = fine.coarsen(g.clone(), 4).unwrap();
            for (f, c) in [(&back.dw_all(), &b.dw_all()), (&back.db_all(), &b.db_all())] {
                for (x, y) in f.iter().zip(c.iter()) {
                    assert!((x - y).abs() <= 8.0 * f64::EPSILON * (1.0 + y.abs()));
                }
            }
        }
    }

    #[test]
    fn refined_variance() {
        let g = grid(1, 1.0);
        let factor = 4;
        let fine: Vec<f64> = sample_bundles(&g, 2, 100_000, 1)
            .map(|b| refine_bundle(&b, factor, 17).unwrap().dw(2)[0])
            .collect();
        let (_, v) = mean_var(&fine);
        let target = 1.0 / factor as f64;
        assert!((v - target).abs() < 0.05 * target, "variance {v}");
    }

    #[test]
    fn refine_rejects_bad_input() {
        let g = grid(2, 1.0);
        let b = BrownianSampler::new(g, 0, 1).bundle(0);
        assert!(refine_bundle(&b, 1, 0).is_err());
        let ng = Arc::new(TimeGrid::from_times(vec![0.0, 0.2, 1.0]).unwrap());
        let nb = BrownianSampler::new(ng, 0, 1).bundle(0);
        assert!(refine_bundle(&nb, 2, 0).is_err());
    }

    #[test]
    fn dump_and_load() {
        let g = grid(3, 1.0);
        let bundles: Vec<PathBundle> = sample_bundles(&g, 42, 5, 2).collect();
        let dir = std::env::temp_dir().join(format!("bdsde-rng-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bundles.bin");
        write_bundles(&path, &bundles).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 32 + 5 * (3 * 2 + 3) * 8);
        assert_eq!(u64::from_le_bytes(bytes[0..8].try_into().unwrap()), 42);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 5);
        let loaded = read_bundles(&path, &g).unwrap();
        assert_eq!(loaded, bundles);
        assert!(read_bundles(&path, &grid(4, 1.0)).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    fn block_sum_error(block: &[f64], total: f64) -> (f64, f64) {
        let sum = block.iter().fold(0.0, |acc, v| acc + v);
        let scale: f64 = block.iter().map(|v| v.abs()).sum::<f64>() + total.abs();
        ((sum - total).abs(), scale)
    }

    #[test]
    fn bridge_sums_are_mostly_bit_exact() {
        // cancellation in the final addition makes ~10% of blocks unreachable bit for bit
        let g = grid(1, 1.0);
        let mut exact = 0;
        let trials = 2000;
        for b in sample_bundles(&g, 31, trials, 1) {
            for factor in [2, 8] {
                let fine = refine_bundle(&b, factor, 5).unwrap();
                let (err, _) = block_sum_error(fine.dw_all(), b.dw(1)[0]);
                exact += (err == 0.0) as usize;
            }
        }
        assert!(
            exact as f64 > 0.85 * (2 * trials) as f64,
            "{exact} of {}",
            2 * trials
        );
    }

    proptest! {
        #[test]
        fn bridge_block_sums_match(
            totals in prop::collection::vec(-5.0f64..5.0, 1..6),
            factor in 2usize..12,
            seed in any::<u64>(),
        ) {
            let n = totals.len();
            let g = grid(n, 1.0);
            let coarse = PathBundle::from_parts(g, 1, totals.clone(), totals.clone(), 0, 3).unwrap();
            let fine = refine_bundle(&coarse, factor, seed).unwrap();
            for j in 0..n {
                for all in [fine.dw_all(), fine.db_all()] {
                    let (err, scale) = block_sum_error(&all[j * factor..(j + 1) * factor], totals[j]);
                    prop_assert!(err <= 2.0 * factor as f64 * f64::EPSILON * scale, "err {err}");
                }
            }
        }
    }
}
