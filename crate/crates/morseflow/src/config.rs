//! Run configuration: JSON with snake_case keys and a schema version tag.
//! All solver knobs default to the values baked into the numeric modules,
//! and every resolved value is echoed into the report.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr;
use crate::geometry::Catalog;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema version {0}, expected {SCHEMA_VERSION}")]
    SchemaVersion(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Geometric domain: a catalog shape, or explicit constraint expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifoldSpec {
    Catalog { catalog: Catalog },
    Explicit {
        ambient_dim: usize,
        constraints: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    ClassicalComplex,
    Duality,
    ExtendedComplex,
    Obstructions,
}

/// Solver tolerances; the defaults mirror the numeric modules and are
/// echoed verbatim into the report for auditability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub gradient_tol: f64,
    pub dedup_distance: f64,
    pub nondegeneracy_threshold: f64,
    pub constraint_tol: f64,
    pub integrator_rtol: f64,
    pub integrator_atol: f64,
    pub shoot_radius: f64,
    pub arrival_radius: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gradient_tol: crate::critical::GRADIENT_TOL,
            dedup_distance: crate::critical::DEDUP_DISTANCE,
            nondegeneracy_threshold: crate::critical::NONDEGENERACY_THRESHOLD,
            constraint_tol: crate::geometry::CONSTRAINT_TOL,
            integrator_rtol: 1e-10,
            integrator_atol: 1e-12,
            shoot_radius: crate::flow::R_SHOOT,
            arrival_radius: crate::flow::ARRIVAL_RADIUS,
        }
    }
}

/// One smoothability query on a pair of stable-stem residues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionQuery {
    pub k: usize,
    pub delta: Vec<i64>,
    pub delta_prime: Vec<i64>,
}

/// Escape hatch for extended-complex entries on manifolds whose loop
/// classes the catalog cannot label; monomial names in the chosen ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppliedClass {
    pub upper: usize,
    pub lower: usize,
    pub class: Vec<String>,
}

/// Fully synthetic extended complex: no geometry, points and entries
/// given outright.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticExtended {
    pub ring: String,
    /// (id, value, index) triples
    pub points: Vec<(usize, f64, usize)>,
    pub entries: Vec<SuppliedClass>,
}

fn default_budget() -> usize {
    400
}
fn default_resolution() -> usize {
    4096
}
fn default_moduli_samples() -> usize {
    64
}
fn default_degree_cap() -> usize {
    crate::loop_homology::DEFAULT_DEGREE_CAP
}
fn default_checks() -> Vec<Check> {
    vec![Check::ClassicalComplex]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub morseflow_schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifold: Option<ManifoldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_moduli_samples")]
    pub moduli_samples: usize,
    #[serde(default = "default_degree_cap")]
    pub degree_cap: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_checks")]
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obstruction_queries: Vec<ObstructionQuery>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub supplied_classes: Vec<SuppliedClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_extended: Option<SyntheticExtended>,
    /// Ring tag override for the extended complex; defaults from the
    /// catalog when possible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring: Option<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.morseflow_schema != SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion(self.morseflow_schema));
        }
        let geometric = self.checks.iter().any(|c| {
            matches!(
                c,
                Check::ClassicalComplex | Check::Duality | Check::ExtendedComplex
            )
        }) && self.synthetic_extended.is_none();
        let ambient = match &self.manifold {
            Some(ManifoldSpec::Catalog { catalog }) => {
                catalog.validate().map_err(ConfigError::Invalid)?;
                Some(catalog.ambient_dim())
            }
            Some(ManifoldSpec::Explicit {
                ambient_dim,
                constraints,
            }) => {
                if constraints.is_empty() {
                    return Err(ConfigError::Invalid("no constraint expressions".into()));
                }
                for c in constraints {
                    expr::parse(c, *ambient_dim)
                        .map_err(|e| ConfigError::Invalid(format!("constraint `{c}`: {e}")))?;
                }
                Some(*ambient_dim)
            }
            None => None,
        };
        match (&self.function, ambient) {
            (Some(f), Some(dim)) => {
                expr::parse(f, dim)
                    .map_err(|e| ConfigError::Invalid(format!("function `{f}`: {e}")))?;
            }
            (None, _) | (_, None) if geometric => {
                return Err(ConfigError::Invalid(
                    "geometric checks require both a manifold and a function".into(),
                ));
            }
            _ => {}
        }
        if self.checks.contains(&Check::ExtendedComplex)
            && self.synthetic_extended.is_none()
            && self.ring.is_none()
        {
            let has_tag = matches!(
                &self.manifold,
                Some(ManifoldSpec::Catalog { catalog }) if catalog.ring_tag().is_some()
            );
            let torus_like = matches!(
                &self.manifold,
                Some(ManifoldSpec::Catalog { .. })
            );
            if !has_tag && !torus_like && self.supplied_classes.is_empty() {
                return Err(ConfigError::Invalid(
                    "extended complex requires a catalog manifold, a ring tag, or supplied classes"
                        .into(),
                ));
            }
        }
        if self.checks.contains(&Check::Obstructions) && self.obstruction_queries.is_empty() {
            return Err(ConfigError::Invalid(
                "obstructions check requested but no obstruction_queries given".into(),
            ));
        }
        Ok(())
    }
}
