use std::path::Path;
use std::sync::Arc;

use crate::condexp::{
    gauss_hermite, Interpolation, QuadratureRule, SpatialGrid, DEFAULT_NODES, DEFAULT_ORDER,
};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::forward::ExactFamily;
use crate::model::{lipschitz_from_config, BdsdeProblem, Lipschitz, PolynomialFamily};
use crate::oracle::{closed_form, CaseId, CaseParams, ClosedFormCase, MIN_REFINE};

/// Every key an experiment file may contain.
const KNOWN_KEYS: &[&str] = &[
    "case",
    "x0",
    "T",
    "g0",
    "c",
    "beta",
    "meshes",
    "n",
    "M",
    "K",
    "quad_order",
    "space_nodes",
    "space_scale",
    "interpolation",
    "refine",
    "seed",
    "timing",
    "paths",
    "family",
    "mu",
    "nu",
    "drift",
    "vol",
    "calib_n",
    "calib_paths",
    "probes",
    "probe_radius",
    "layers_out",
    "bundles_out",
    "b0",
    "b1",
    "s0",
    "s1",
    "f0",
    "fx",
    "fy",
    "fz",
    "gx",
    "gy",
    "gz",
    "phi",
    "L_f",
    "L_g",
    "alpha",
];

/// What is being solved and where its reference values come from.
#[derive(Debug, Clone)]
pub enum CaseSpec {
    /// A problem with a closed-form solution.
    Closed(CaseId),
    /// A member of the scalar polynomial family, referenced against the
    /// scheme on a refined grid.
    Polynomial {
        family: PolynomialFamily,
        lipschitz: Lipschitz,
    },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub case: CaseSpec,
    pub params: CaseParams,
    pub meshes: Vec<usize>,
    /// Outer sample count (backward-noise paths).
    pub outer: usize,
    /// Inner sample count (forward-noise paths per outer path).
    pub inner: usize,
    pub quad_order: usize,
    pub space_nodes: usize,
    /// Width unit of the spatial domain; defaults to `|σ(x0)|`.
    pub space_scale: Option<f64>,
    pub interpolation: Interpolation,
    /// Refinement factor of reference grids.
    pub refine: usize,
    pub seed: u64,
    pub timing: bool,
    /// Monte-Carlo paths for the forward-rate and regularity experiments.
    pub paths: usize,
    pub forward_family: ExactFamily,
    /// Grid size and path count for the exponential sign calibration.
    pub calib_n: usize,
    pub calib_paths: usize,
    pub probes: usize,
    pub probe_radius: f64,
    pub layers_out: Option<String>,
    pub bundles_out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            case: CaseSpec::Closed(CaseId::Identity),
            params: CaseParams::default(),
            meshes: vec![4, 8, 16, 32],
            outer: 64,
            inner: 64,
            quad_order: DEFAULT_ORDER,
            space_nodes: DEFAULT_NODES,
            space_scale: None,
            interpolation: Interpolation::Multilinear,
            refine: MIN_REFINE,
            seed: 0,
            timing: false,
            paths: 10_000,
            forward_family: ExactFamily::Geometric { mu: 0.2, nu: 0.3 },
            calib_n: 256,
            calib_paths: 1000,
            probes: 256,
            probe_radius: 3.0,
            layers_out: None,
            bundles_out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        if let Some(key) = kv.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        let d = ExperimentConfig::default();
        let params = CaseParams {
            x0: kv.parsed_or("x0", d.params.x0)?,
            horizon: kv.parsed_or("T", d.params.horizon)?,
            g0: kv.parsed_or("g0", d.params.g0)?,
            c: kv.parsed_or("c", d.params.c)?,
            beta: kv.parsed_or("beta", d.params.beta)?,
        };
        let case = match kv.get("case").unwrap_or("identity").trim() {
            "polynomial" => {
                let family = PolynomialFamily::from_config(kv)?;
                let lipschitz = lipschitz_from_config(kv, family.implied_lipschitz())?;
                CaseSpec::Polynomial { family, lipschitz }
            }
            name => CaseSpec::Closed(name.parse()?),
        };
        let meshes = match (kv.list::<usize>("meshes")?, kv.parsed::<usize>("n")?) {
            (Some(m), _) => m,
            (None, Some(n)) => vec![n],
            (None, None) => d.meshes.clone(),
        };
        let interpolation = match kv.get("interpolation").map(str::trim) {
            None | Some("linear") | Some("multilinear") => Interpolation::Multilinear,
            Some("cubic") => Interpolation::Cubic,
            Some(other) => return Err(Error::Config(format!("unknown interpolation `{other}`"))),
        };
        let forward_family = match kv.get("family").map(str::trim) {
            None | Some("geometric") => ExactFamily::Geometric {
                mu: kv.parsed_or("mu", 0.2)?,
                nu: kv.parsed_or("nu", 0.3)?,
            },
            Some("additive") => ExactFamily::Additive {
                drift: kv.parsed_or("drift", 0.0)?,
                vol: kv.parsed_or("vol", 1.0)?,
            },
            Some(other) => return Err(Error::UnknownFamily(other.to_string())),
        };
        let cfg = ExperimentConfig {
            case,
            params,
            meshes,
            outer: kv.parsed_or("M", d.outer)?,
            inner: kv.parsed_or("K", d.inner)?,
            quad_order: kv.parsed_or("quad_order", d.quad_order)?,
            space_nodes: kv.parsed_or("space_nodes", d.space_nodes)?,
            space_scale: kv.parsed("space_scale")?,
            interpolation,
            refine: kv.parsed_or("refine", d.refine)?,
            seed: kv.parsed_or("seed", d.seed)?,
            timing: kv.parsed_or("timing", d.timing)?,
            paths: kv.parsed_or("paths", d.paths)?,
            forward_family,
            calib_n: kv.parsed_or("calib_n", d.calib_n)?,
            calib_paths: kv.parsed_or("calib_paths", d.calib_paths)?,
            probes: kv.parsed_or("probes", d.probes)?,
            probe_radius: kv.parsed_or("probe_radius", d.probe_radius)?,
            layers_out: kv.get("layers_out").map(str::to_string),
            bundles_out: kv.get("bundles_out").map(str::to_string),
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        ExperimentConfig::from_kv(&KeyValues::from_file(path)?)
    }

    /// Count and range checks shared by every experiment.
    pub fn check(&self) -> Result<()> {
        let positive = [
            ("M", self.outer),
            ("K", self.inner),
            ("space_nodes", self.space_nodes),
            ("paths", self.paths),
            ("calib_n", self.calib_n),
            ("calib_paths", self.calib_paths),
            ("probes", self.probes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{name}` must be at least 1")));
        }
        if self.meshes.contains(&0) {
            return Err(Error::Config("mesh sizes must be at least 1".into()));
        }
        if !(self.params.horizon > 0.0 && self.params.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "`T` must be positive, got {}",
                self.params.horizon
            )));
        }
        if let Some(s) = self.space_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!(
                    "`space_scale` must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }

    /// The closed-form case, or `None` for polynomial problems.
    pub fn closed_case(&self) -> Result<Option<ClosedFormCase>> {
        match self.case {
            CaseSpec::Closed(id) => closed_form(id, self.params).map(Some),
            CaseSpec::Polynomial { .. } => Ok(None),
        }
    }

    pub fn case_name(&self) -> &'static str {
        match self.case {
            CaseSpec::Closed(id) => id.name(),
            CaseSpec::Polynomial { .. } => "polynomial",
        }
    }

    pub fn problem(&self) -> Result<BdsdeProblem> {
        match &self.case {
            CaseSpec::Closed(id) => Ok(closed_form(*id, self.params)?.problem().clone()),
            CaseSpec::Polynomial { family, lipschitz } => Ok(family
                .clone()
                .into_problem(self.params.x0)?
                .with_lipschitz(*lipschitz)),
        }
    }

    pub fn rule(&self) -> Result<QuadratureRule> {
        gauss_hermite(self.quad_order)
    }

    pub fn spatial(&self, problem: &BdsdeProblem) -> Result<SpatialGrid> {
        let scale = match self.space_scale {
            Some(s) => s,
            None => {
                let d = problem.dim();
                let mut sigma = vec![0.0; d * d];
                problem.coefficients().diffusion(problem.x0(), &mut sigma);
                let s = sigma.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            }
        };
        Ok(
            SpatialGrid::around(problem.x0(), scale, self.params.horizon, self.space_nodes)?
                .with_interpolation(self.interpolation),
        )
    }

    pub(crate) fn uniform_grid(&self, n: usize) -> Result<Arc<crate::model::TimeGrid>> {
        Ok(Arc::new(crate::model::build_uniform_grid(
            n,
            self.params.horizon,
        )?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_example_file() {
        let kv = KeyValues::parse(
            "case=additive_g\ng0=0.7\nmeshes=4,8,16,32\nM=64\nK=64\nquad_order=8\nspace_nodes=201\nT=1.0\nx0=1.0\n",
        )
        .unwrap();
        let c = ExperimentConfig::from_kv(&kv).unwrap();
        assert!(matches!(c.case, CaseSpec::Closed(CaseId::AdditiveG)));
        assert_eq!(c.meshes, vec![4, 8, 16, 32]);
        assert_eq!((c.outer, c.inner), (64, 64));
        assert_eq!(c.params.g0, 0.7);
        let p = c.problem().unwrap();
        assert_eq!(p.coefficients().driver_g(0.0, &[0.0], 0.0, &[0.0]), 0.7);
        let s = c.spatial(&p).unwrap();
        assert_eq!((s.axes[0].lo, s.axes[0].hi), (-5.0, 7.0));
    }

    #[test]
    fn polynomial_case() {
        let kv = KeyValues::parse("case=polynomial\nfy=0.5\nphi=0,0,1\ns0=0.5\nn=10").unwrap();
        let c = ExperimentConfig::from_kv(&kv).unwrap();
        assert_eq!(c.meshes, vec![10]);
        assert!(c.closed_case().unwrap().is_none());
        let p = c.problem().unwrap();
        assert_eq!(p.coefficients().terminal(&[3.0]), 9.0);
        assert_eq!(c.spatial(&p).unwrap().axes[0].hi, 1.0 + 3.0);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "case=heat",
            "M=0",
            "meshes=4,0",
            "foo=1",
            "T=-1",
            "interpolation=spline",
            "K=x",
        ] {
            let kv = KeyValues::parse(text).unwrap();
            assert!(ExperimentConfig::from_kv(&kv).is_err(), "{text}");
        }
    }

    #[test]
    fn empty_mesh_list() {
        let kv = KeyValues::parse("meshes=").unwrap();
        let c = ExperimentConfig::from_kv(&kv).unwrap();
        assert!(c.meshes.is_empty());
    }
}
