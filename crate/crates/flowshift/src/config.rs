//! Scenario configuration: named fields, scalars, grids, pairs, cases, and
//! verification suites, read from a TOML file with strict key checking.
//!
//! Scalar definitions are instantiated lazily on the space of the field they
//! are paired with, so one definition serves both planar and torus suites.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fields::{
    builtin_field, builtin_scalar, polynomial_field, polynomial_scalar, PolynomialTerm, SampleGrid,
    ScalarFieldSpec, ScalarTerm, VectorFieldSpec,
};
use crate::flow::IntegratorConfig;
use crate::space::{AmbientSpace, SpaceKind};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDef {
    pub kind: String,
    pub dimension: usize,
    #[serde(default)]
    pub periods: Option<Vec<f64>>,
}

impl SpaceDef {
    fn build(&self) -> Result<AmbientSpace> {
        let kind = match self.kind.as_str() {
            "euclidean" => SpaceKind::Euclidean,
            "flat-torus" => SpaceKind::FlatTorus,
            other => return Err(Error::config(format!("unknown space kind '{other}'"))),
        };
        let space = AmbientSpace {
            kind,
            dimension: self.dimension,
            torus_periods: self.periods.clone(),
        };
        space.validate()?;
        Ok(space)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialDef {
    pub terms: Vec<PolynomialTerm>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDef {
    /// Catalog name; mutually exclusive with `polynomial`.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub polynomial: Option<PolynomialDef>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Rotation rates for the block catalog field.
    #[serde(default)]
    pub rates: Option<Vec<f64>>,
    #[serde(default)]
    pub zero_dim: Option<usize>,
    /// Required for polynomial fields; ignored for catalog fields.
    #[serde(default)]
    pub space: Option<SpaceDef>,
}

impl FieldDef {
    fn build(&self, label: &str) -> Result<VectorFieldSpec> {
        match (&self.name, &self.polynomial) {
            (Some(name), None) => {
                builtin_field(name, &self.params, self.rates.as_deref(), self.zero_dim)
            }
            (None, Some(poly)) => {
                let space = self
                    .space
                    .as_ref()
                    .ok_or_else(|| {
                        Error::config(format!("field '{label}': polynomial fields need a space"))
                    })?
                    .build()?;
                polynomial_field(space, label, poly.terms.clone())
            }
            (Some(_), Some(_)) => Err(Error::config(format!(
                "field '{label}': give either a catalog name or a polynomial, not both"
            ))),
            (None, None) => Err(Error::config(format!(
                "field '{label}': needs a catalog name or a polynomial"
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarPolynomialDef {
    pub terms: Vec<ScalarTerm>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarDef {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub polynomial: Option<ScalarPolynomialDef>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Claim strict positivity for polynomial scalars.
    #[serde(default)]
    pub positive: bool,
}

impl ScalarDef {
    /// Instantiate on a concrete space.
    pub fn build(&self, label: &str, space: AmbientSpace) -> Result<ScalarFieldSpec> {
        match (&self.name, &self.polynomial) {
            (Some(name), None) => builtin_scalar(name, space, &self.params),
            (None, Some(poly)) => {
                let mut s = polynomial_scalar(space, label, poly.terms.clone())?;
                if self.positive {
                    s = s.positive();
                }
                Ok(s)
            }
            (Some(_), Some(_)) => Err(Error::config(format!(
                "scalar '{label}': give either a catalog name or a polynomial, not both"
            ))),
            (None, None) => Err(Error::config(format!(
                "scalar '{label}': needs a catalog name or a polynomial"
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeDef {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirclesDef {
    pub radii: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDef {
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub lattice: Option<LatticeDef>,
    #[serde(default)]
    pub circles: Option<CirclesDef>,
    /// Jitter amplitude applied per coordinate (lattices) or per angle
    /// (circles); randomized by the run seed.
    #[serde(default)]
    pub jitter: f64,
    /// Defaults to Euclidean space of the evident dimension.
    #[serde(default)]
    pub space: Option<SpaceDef>,
}

impl GridDef {
    fn build(&self, label: &str, seed: u64) -> Result<SampleGrid> {
        let given = self.space.as_ref().map(|s| s.build()).transpose()?;
        let defined: usize = [
            self.points.is_some(),
            self.lattice.is_some(),
            self.circles.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count();
        if defined != 1 {
            return Err(Error::config(format!(
                "grid '{label}': define exactly one of points, lattice, circles"
            )));
        }
        if let Some(points) = &self.points {
            if points.is_empty() {
                return Err(Error::config(format!("grid '{label}': no points")));
            }
            let space = given.unwrap_or_else(|| AmbientSpace::euclidean(points[0].len()));
            return SampleGrid::from_points(space, points.clone(), label);
        }
        if let Some(lat) = &self.lattice {
            let space = given.unwrap_or_else(|| AmbientSpace::euclidean(lat.min.len()));
            return SampleGrid::lattice(space, &lat.min, &lat.max, &lat.counts, self.jitter, seed);
        }
        let circles = self.circles.as_ref().unwrap();
        if given.is_some() {
            return Err(Error::config(format!(
                "grid '{label}': circle grids are always planar Euclidean"
            )));
        }
        SampleGrid::circles(&circles.radii, circles.count, self.jitter, seed)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairDef {
    pub field: String,
    pub mu: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseDef {
    pub field: String,
    pub alpha: String,
    pub grid: String,
}

/// One suite invocation. `kind` selects the operation; the remaining keys
/// are per-kind parameters, validated at dispatch.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteDef {
    pub name: String,
    pub kind: String,
    #[serde(default)]
    pub field: Option<String>,
    #[serde(default)]
    pub pair: Option<String>,
    #[serde(default)]
    pub case: Option<String>,
    #[serde(default)]
    pub grid: Option<String>,
    #[serde(default)]
    pub gammas: Vec<String>,
    #[serde(default)]
    pub s_values: Vec<f64>,
    #[serde(default)]
    pub t_values: Vec<f64>,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub shortcut_tolerance: Option<f64>,
    /// "periodic" | "non-periodic" | "refused", per kind.
    #[serde(default)]
    pub expect: Option<String>,
    /// Oracle for the period function samples.
    #[serde(default)]
    pub period_scalar: Option<String>,
    #[serde(default)]
    pub mu_orbit_constant: bool,
    #[serde(default)]
    pub expect_constant: Option<f64>,
    #[serde(default)]
    pub expect_factor_const: Option<f64>,
    /// After a pushforward check, verify the induced field's image equality.
    #[serde(default)]
    pub chain_image_equality: bool,
    #[serde(default)]
    pub point: Option<Vec<f64>>,
    #[serde(default)]
    pub expected_rates: Vec<f64>,
    #[serde(default)]
    pub expected_zero_dim: Option<usize>,
}

/// Root of the scenario file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub fields: BTreeMap<String, FieldDef>,
    #[serde(default)]
    pub scalars: BTreeMap<String, ScalarDef>,
    #[serde(default)]
    pub grids: BTreeMap<String, GridDef>,
    #[serde(default)]
    pub pairs: BTreeMap<String, PairDef>,
    #[serde(default)]
    pub cases: BTreeMap<String, CaseDef>,
    #[serde(default)]
    pub suites: Vec<SuiteDef>,
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config '{}': {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("config parse error: {e}")))
    }

    /// Materialize all named definitions. Every name referenced by a pair,
    /// case, or suite must resolve.
    pub fn resolve(&self, seed: u64) -> Result<Resolved> {
        let mut fields = BTreeMap::new();
        for (label, def) in &self.fields {
            fields.insert(label.clone(), def.build(label)?);
        }
        let mut grids = BTreeMap::new();
        for (label, def) in &self.grids {
            grids.insert(label.clone(), def.build(label, seed)?);
        }
        let resolved = Resolved {
            integrator: self.integrator,
            output_dir: self
                .output_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("out")),
            fields,
            scalars: self.scalars.clone(),
            grids,
            pairs: self.pairs.clone(),
            cases: self.cases.clone(),
            suites: self.suites.clone(),
        };
        // Fail fast on dangling references.
        for (label, pair) in &resolved.pairs {
            resolved
                .field(&pair.field)
                .map_err(|e| prefix(label, "pair", e))?;
            resolved
                .scalar_def(&pair.mu)
                .map_err(|e| prefix(label, "pair", e))?;
        }
        for (label, case) in &resolved.cases {
            resolved
                .field(&case.field)
                .map_err(|e| prefix(label, "case", e))?;
            resolved
                .scalar_def(&case.alpha)
                .map_err(|e| prefix(label, "case", e))?;
            resolved
                .grid(&case.grid)
                .map_err(|e| prefix(label, "case", e))?;
        }
        Ok(resolved)
    }
}

fn prefix(label: &str, what: &str, e: Error) -> Error {
    Error::config(format!("{what} '{label}': {e}"))
}

/// Materialized scenario: constructed fields and grids plus lazy scalars.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub integrator: IntegratorConfig,
    pub output_dir: PathBuf,
    pub fields: BTreeMap<String, VectorFieldSpec>,
    scalars: BTreeMap<String, ScalarDef>,
    pub grids: BTreeMap<String, SampleGrid>,
    pub pairs: BTreeMap<String, PairDef>,
    pub cases: BTreeMap<String, CaseDef>,
    pub suites: Vec<SuiteDef>,
}

impl Resolved {
    pub fn field(&self, name: &str) -> Result<&VectorFieldSpec> {
        self.fields
            .get(name)
            .ok_or_else(|| Error::config(format!("unknown field '{name}'")))
    }

    pub fn grid(&self, name: &str) -> Result<&SampleGrid> {
        self.grids
            .get(name)
            .ok_or_else(|| Error::config(format!("unknown grid '{name}'")))
    }

    fn scalar_def(&self, name: &str) -> Result<&ScalarDef> {
        self.scalars
            .get(name)
            .ok_or_else(|| Error::config(format!("unknown scalar '{name}'")))
    }

    /// Instantiate a named scalar on a concrete space.
    pub fn scalar(&self, name: &str, space: &AmbientSpace) -> Result<ScalarFieldSpec> {
        self.scalar_def(name)?.build(name, space.clone())
    }

    pub fn suite(&self, name: &str) -> Result<&SuiteDef> {
        self.suites
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::config(format!("unknown suite '{name}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [fields.rot]
        name = "rotation"

        [scalars.mu]
        name = "one-plus-r-squared"

        [grids.circles]
        circles = { radii = [0.5, 1.0], count = 4 }

        [pairs.rot-mu]
        field = "rot"
        mu = "mu"

        [[suites]]
        name = "bridge"
        kind = "bridge"
        pair = "rot-mu"
        grid = "circles"
        s_values = [0.5]
        tolerance = 1e-6
    "#;

    #[test]
    fn minimal_config_resolves() {
        let cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        let res = cfg.resolve(0).unwrap();
        assert_eq!(res.field("rot").unwrap().name, "rotation");
        assert_eq!(res.grid("circles").unwrap().len(), 8);
        let mu = res.scalar("mu", &res.field("rot").unwrap().space).unwrap();
        assert!(mu.positive);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"
            [fields.rot]
            name = "rotation"
            typo_key = 3
        "#;
        assert!(matches!(
            ScenarioConfig::from_toml(bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dangling_pair_reference_fails_resolution() {
        let bad = r#"
            [pairs.p]
            field = "missing"
            mu = "also-missing"
        "#;
        let cfg = ScenarioConfig::from_toml(bad).unwrap();
        let err = cfg.resolve(0).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn polynomial_field_from_config() {
        let text = r#"
            [fields.poly]
            space = { kind = "euclidean", dimension = 2 }
            polynomial = { terms = [
                { coeffs = [-1.0, 0.0], exponents = [0, 1] },
                { coeffs = [0.0, 1.0], exponents = [1, 0] },
            ] }
        "#;
        let cfg = ScenarioConfig::from_toml(text).unwrap();
        let res = cfg.resolve(0).unwrap();
        let f = res.field("poly").unwrap();
        assert_eq!(f.evaluate(&[1.0, 0.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn torus_grid_from_config() {
        let text = r#"
            [grids.torus]
            lattice = { min = [0.5, 0.5], max = [5.5, 5.5], counts = [3, 3] }
            space = { kind = "flat-torus", dimension = 2, periods = [6.283185307179586, 6.283185307179586] }
        "#;
        let cfg = ScenarioConfig::from_toml(text).unwrap();
        let res = cfg.resolve(0).unwrap();
        let g = res.grid("torus").unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.space.kind, SpaceKind::FlatTorus);
    }

    #[test]
    fn jittered_grids_depend_on_seed_deterministically() {
        let text = r#"
            [grids.g]
            lattice = { min = [0.0], max = [1.0], counts = [4] }
            jitter = 0.01
        "#;
        let cfg = ScenarioConfig::from_toml(text).unwrap();
        let a = cfg.resolve(7).unwrap().grid("g").unwrap().points.clone();
        let b = cfg.resolve(7).unwrap().grid("g").unwrap().points.clone();
        let c = cfg.resolve(8).unwrap().grid("g").unwrap().points.clone();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
