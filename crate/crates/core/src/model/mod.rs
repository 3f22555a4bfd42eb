//! Problem data: time grids, coefficients and validation of the standing
//! assumptions.

mod family;
mod grid;
mod problem;
mod validate;

pub use family::{AffineDriver, PolynomialFamily};
pub use grid::{build_uniform_grid, validate_kappa_uniform, TimeGrid};
pub use problem::{BdsdeProblem, Coefficients, FnCoefficients, Lipschitz};
pub use validate::{validate_problem, Check, ProbeBox, ValidationReport};

use crate::config::KeyValues;
use crate::error::Result;

impl PolynomialFamily {
    /// Reads the family from config keys, starting from
    /// [`PolynomialFamily::default`]:
    ///
    /// `b0,b1` drift, `s0,s1` diffusion, `f0,fx,fy,fz` and `g0,gx,gy,gz`
    /// drivers, `phi` comma-separated terminal polynomial coefficients.
    pub fn from_config(kv: &KeyValues) -> Result<Self> {
        let mut fam = PolynomialFamily {
            drift: [kv.parsed_or("b0", 0.0)?, kv.parsed_or("b1", 0.0)?],
            diffusion: [kv.parsed_or("s0", 1.0)?, kv.parsed_or("s1", 0.0)?],
            f: AffineDriver {
                constant: kv.parsed_or("f0", 0.0)?,
                x: kv.parsed_or("fx", 0.0)?,
                y: kv.parsed_or("fy", 0.0)?,
                z: kv.parsed_or("fz", 0.0)?,
            },
            g: AffineDriver {
                constant: kv.parsed_or("g0", 0.0)?,
                x: kv.parsed_or("gx", 0.0)?,
                y: kv.parsed_or("gy", 0.0)?,
                z: kv.parsed_or("gz", 0.0)?,
            },
            ..PolynomialFamily::default()
        };
        if let Some(phi) = kv.list("phi")? {
            fam.terminal = phi;
        }
        Ok(fam)
    }
}

/// Declared constants from `L_f`, `L_g`, `alpha` keys, falling back to
/// `implied`.
pub fn lipschitz_from_config(kv: &KeyValues, implied: Lipschitz) -> Result<Lipschitz> {
    Ok(Lipschitz {
        l_f: kv.parsed_or("L_f", implied.l_f)?,
        l_g: kv.parsed_or("L_g", implied.l_g)?,
        alpha: kv.parsed_or("alpha", implied.alpha)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_from_config() {
        let kv = KeyValues::parse("b1=0.2\ns0=0\ns1=0.3\nfy=0.5\ngz=0.1\nphi=0,0,1").unwrap();
        let fam = PolynomialFamily::from_config(&kv).unwrap();
        assert_eq!(fam.drift, [0.0, 0.2]);
        assert_eq!(fam.diffusion, [0.0, 0.3]);
        assert_eq!(fam.f.y, 0.5);
        assert_eq!(fam.g.z, 0.1);
        assert_eq!(fam.terminal, vec![0.0, 0.0, 1.0]);
        let lip = lipschitz_from_config(&kv, fam.implied_lipschitz()).unwrap();
        assert_eq!(lip, fam.implied_lipschitz());
        let kv = KeyValues::parse("alpha=0.3").unwrap();
        assert_eq!(
            lipschitz_from_config(&kv, Lipschitz::default())
                .unwrap()
                .alpha,
            0.3
        );
    }
}
