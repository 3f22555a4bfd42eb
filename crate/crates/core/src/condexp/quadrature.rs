use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 64;

/// Gauss–Hermite rule for the standard normal density (probabilists'
/// normalisation): `E[h(ξ)] ≈ Σ_k weights[k]·h(nodes[k])` for `ξ ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Orthonormal Hermite polynomials `p_0..=p_{n}` at `x`, w.r.t. `N(0, 1)`.
fn orthonormal_hermite(n: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if n >= 1 {
        out[1] = x;
    }
    for j in 2..=n {
        out[j] = (x * out[j - 1] - ((j - 1) as f64).sqrt() * out[j - 2]) / (j as f64).sqrt();
    }
}

/// Rule of the given order, exact for polynomials of degree `<= 2·order - 1`.
///
/// Nodes are the eigenvalues of the Jacobi matrix of the Hermite recurrence,
/// polished by Newton steps on `p_order`; weights are Christoffel numbers
/// `1 / Σ_{j<order} p_j(x)^2`. Nodes and weights are symmetrised so odd
/// moments vanish exactly.
pub fn gauss_hermite(order: usize) -> Result<QuadratureRule> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::invalid(format!(
            "quadrature order must be in 1..={MAX_ORDER}, got {order}"
        )));
    }
    let m = order;
    let jacobi = DMatrix::from_fn(m, m, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    nodes.sort_by(f64::total_cmp);

    let mut p = vec![0.0; m + 1];
    for x in &mut nodes {
        for _ in 0..3 {
            orthonormal_hermite(m, *x, &mut p);
            let deriv = (m as f64).sqrt() * p[m - 1];
            if deriv == 0.0 {
                break;
            }
            *x -= p[m] / deriv;
        }
    }
    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            orthonormal_hermite(m, x, &mut p);
            1.0 / p[..m].iter().map(|v| v * v).sum::<f64>()
        })
        .collect();

    for k in 0..m / 2 {
        let mirror = m - 1 - k;
        let x = 0.5 * (nodes[mirror] - nodes[k]);
        let w = 0.5 * (weights[k] + weights[mirror]);
        nodes[k] = -x;
        nodes[mirror] = x;
        weights[k] = w;
        weights[mirror] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Visits every point of the `dim`-fold tensor product rule scaled to
    /// `N(0, dt·I)`: `visit(point, weight)`.
    pub(crate) fn for_each_point(&self, dt: f64, dim: usize, mut visit: impl FnMut(&[f64], f64)) {
        let m = self.order();
        let sd = dt.sqrt();
        let mut idx = vec![0usize; dim];
        let mut point = vec![0.0; dim];
        loop {
            let mut w = 1.0;
            for (a, &k) in idx.iter().enumerate() {
                point[a] = sd * self.nodes[k];
                w *= self.weights[k];
            }
            visit(&point, w);
            // odometer increment
            let mut a = 0;
            loop {
                if a == dim {
                    return;
                }
                idx[a] += 1;
                if idx[a] < m {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
        }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("dt must be positive, got {dt}")))
    }
}

/// `E[h(Δw)]` for `Δw ~ N(0, dt·I_dim)` by the tensor-product rule.
pub fn expect(
    rule: &QuadratureRule,
    dt: f64,
    dim: usize,
    mut h: impl FnMut(&[f64]) -> f64,
) -> Result<f64> {
    check_dt(dt)?;
    let mut acc = 0.0;
    let mut bad = None;
    rule.for_each_point(dt, dim, |w, weight| {
        let v = h(w);
        if !v.is_finite() && bad.is_none() {
            bad = Some(w.to_vec());
        }
        acc += weight * v;
    });
    match bad {
        Some(w) => Err(Error::NonFiniteIntegrand(w)),
        None => Ok(acc),
    }
}

/// `E[h(Δw)·Δw_component]` for `Δw ~ N(0, dt·I_dim)`.
pub fn expect_weighted(
    rule: &QuadratureRule,
    dt: f64,
    dim: usize,
    component: usize,
    mut h: impl FnMut(&[f64]) -> f64,
) -> Result<f64> {
    if component >= dim {
        return Err(Error::invalid(format!(
            "component {component} out of range for dimension {dim}"
        )));
    }
    expect(rule, dt, dim, |w| h(w) * w[component])
}
