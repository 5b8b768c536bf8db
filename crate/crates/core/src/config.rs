//! TOML instance files.
//!
//! ```toml
//! sigma = 1.0
//!
//! [costs]
//! K = 1.0
//! k = 0.5
//! L = 1.0
//! l = 0.5
//!
//! [holding]
//! family = "linear"        # or "power" (coef, exponent) or "table" (points)
//! slope = 1.0
//!
//! [drift_menu]
//! kind = "finite"
//! pairs = [{ mu = -1.0, cost = 1.0 }, { mu = 0.0, cost = 0.0 }, { mu = 1.0, cost = 1.0 }]
//! # kind = "interval", lo = -1.0, hi = 1.0, cost = { family = "quadratic", a = 1.0 }
//!
//! [tolerances]             # optional
//! root = 1e-9
//!
//! [sim]                    # optional
//! dt = 1e-3
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::freeboundary::{SolverOptions, Tolerances};
use crate::hamiltonian::{CostFn, DriftMenu, DEFAULT_GRID};
use crate::model::{HoldingCost, ImpulseCost, ProblemSpec};
use crate::sim::{BoundaryRule, SimConfig};

#[allow(non_snake_case)]
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CostsConfig {
    pub K: f64,
    pub k: f64,
    pub L: f64,
    pub l: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum HoldingConfig {
    Linear { slope: f64 },
    Power { coef: f64, exponent: f64 },
    Table { points: Vec<[f64; 2]> },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DriftPair {
    pub mu: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum CostExpr {
    /// `a mu^2 + b mu + d`
    Quadratic {
        a: f64,
        #[serde(default)]
        b: f64,
        #[serde(default)]
        d: f64,
    },
    /// `a |mu|`
    Absolute { a: f64 },
    Table { points: Vec<[f64; 2]> },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MenuConfig {
    Finite {
        pairs: Vec<DriftPair>,
    },
    Interval {
        lo: f64,
        hi: f64,
        cost: CostExpr,
        grid: Option<usize>,
    },
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesConfig {
    pub root: Option<f64>,
    pub ode: Option<f64>,
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub w0_floor: Option<f64>,
    pub descent_start: Option<f64>,
    pub descent_factor: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub burn_in: Option<f64>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub x0: Option<f64>,
    pub boundary: Option<BoundaryRule>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Certification window as a multiple of `S*` (default 3).
    pub x_max_factor: Option<f64>,
    pub n_grid: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub sigma: f64,
    pub costs: CostsConfig,
    pub holding: HoldingConfig,
    pub drift_menu: MenuConfig,
    #[serde(default)]
    pub tolerances: TolerancesConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub verify: VerifySection,
}

fn field_err(field: &str, e: Error) -> Error {
    match e {
        Error::InvalidInstance(message) => Error::InvalidConfig {
            field: field.into(),
            message,
        },
        other => other,
    }
}

/// Name the field when the path is known, otherwise the line and column.
fn toml_err(text: &str, path: &str, e: toml::de::Error) -> Error {
    let field = match (path, e.span()) {
        (".", Some(span)) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("line {line}, column {col}")
        }
        (".", None) => "document".into(),
        (p, _) => p.into(),
    };
    Error::InvalidConfig {
        field,
        message: e.message().to_string(),
    }
}

fn points(p: &[[f64; 2]]) -> Vec<(f64, f64)> {
    p.iter().map(|&[a, b]| (a, b)).collect()
}

impl InstanceConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| toml_err(text, ".", e))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            toml_err(text, &path, e.into_inner())
        })
    }

    pub fn to_spec(&self) -> Result<ProblemSpec> {
        let menu = match &self.drift_menu {
            MenuConfig::Finite { pairs } => {
                let pairs: Vec<(f64, f64)> = pairs.iter().map(|p| (p.mu, p.cost)).collect();
                DriftMenu::finite(&pairs)
            }
            MenuConfig::Interval { lo, hi, cost, grid } => {
                let cost = match cost {
                    CostExpr::Quadratic { a, b, d } => CostFn::Quadratic { a: *a, b: *b, d: *d },
                    CostExpr::Absolute { a } => CostFn::Absolute { a: *a },
                    CostExpr::Table { points: p } => CostFn::Table(points(p)),
                };
                DriftMenu::interval_with_grid(*lo, *hi, cost, grid.unwrap_or(DEFAULT_GRID))
            }
        }
        .map_err(|e| field_err("drift_menu", e))?;
        let holding = match &self.holding {
            HoldingConfig::Linear { slope } => HoldingCost::Linear { slope: *slope },
            HoldingConfig::Power { coef, exponent } => HoldingCost::Power {
                coef: *coef,
                exponent: *exponent,
            },
            HoldingConfig::Table { points: p } => HoldingCost::Table(points(p)),
        };
        let c = &self.costs;
        for (name, v) in [("costs.K", c.K), ("costs.k", c.k), ("costs.L", c.L), ("costs.l", c.l)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig {
                    field: name.into(),
                    message: format!("must be strictly positive, got {v}"),
                });
            }
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidConfig {
                field: "sigma".into(),
                message: format!("must be strictly positive, got {}", self.sigma),
            });
        }
        ProblemSpec::new(
            self.sigma,
            ImpulseCost::new(c.K, c.k),
            ImpulseCost::new(c.L, c.l),
            holding,
            menu,
        )
        .map_err(|e| field_err("holding", e))
    }

    pub fn tolerances(&self) -> Result<Tolerances> {
        let d = Tolerances::default();
        let t = Tolerances {
            root: self.tolerances.root.unwrap_or(d.root),
            ode: self.tolerances.ode.unwrap_or(d.ode),
            residual: self.tolerances.residual.unwrap_or(d.residual),
        };
        for (name, v) in [("tolerances.root", t.root), ("tolerances.ode", t.ode), ("tolerances.residual", t.residual)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig {
                    field: name.into(),
                    message: format!("must be positive, got {v}"),
                });
            }
        }
        Ok(t)
    }

    pub fn solver_options(&self) -> Result<SolverOptions> {
        let d = SolverOptions::default();
        let o = SolverOptions {
            tol: self.tolerances()?,
            w0_floor: self.solver.w0_floor,
            descent_start: self.solver.descent_start.unwrap_or(d.descent_start),
            descent_factor: self.solver.descent_factor.unwrap_or(d.descent_factor),
        };
        if !(o.descent_start > 0.0) {
            return Err(Error::InvalidConfig {
                field: "solver.descent_start".into(),
                message: format!("must be positive, got {}", o.descent_start),
            });
        }
        if !(o.descent_factor > 1.0) {
            return Err(Error::InvalidConfig {
                field: "solver.descent_factor".into(),
                message: format!("must exceed 1, got {}", o.descent_factor),
            });
        }
        Ok(o)
    }

    pub fn sim_config(&self) -> SimConfig {
        let d = SimConfig::default();
        let s = &self.sim;
        SimConfig {
            dt: s.dt.unwrap_or(d.dt),
            horizon: s.horizon.unwrap_or(d.horizon),
            burn_in: s.burn_in.unwrap_or(d.burn_in),
            replications: s.replications.unwrap_or(d.replications),
            seed: s.seed.unwrap_or(d.seed),
            x0: s.x0.unwrap_or(d.x0),
            strict: false,
            boundary: s.boundary.unwrap_or(d.boundary),
        }
    }
}

/// A parsed instance file and the SHA-256 of its bytes.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: InstanceConfig,
    pub hash: String,
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let bytes = std::fs::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::InvalidConfig {
        field: "document".into(),
        message: format!("not UTF-8: {e}"),
    })?;
    Ok(LoadedConfig {
        config: InstanceConfig::from_toml_str(text)?,
        hash: hash_bytes(&bytes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = r#"
sigma = 1.0
[costs]
K = 1.0
k = 0.5
L = 1.0
l = 0.5
[holding]
family = "linear"
slope = 1.0
[drift_menu]
kind = "finite"
pairs = [
  { mu = -1.0, cost = 1.0 },
  { mu = -0.5, cost = 0.25 },
  { mu = 0.0, cost = 0.0 },
  { mu = 0.5, cost = 0.25 },
  { mu = 1.0, cost = 1.0 },
]
"#;

    #[test]
    fn parses_canonical() {
        let c = InstanceConfig::from_toml_str(CANONICAL).unwrap();
        let spec = c.to_spec().unwrap();
        let reference = ProblemSpec::canonical();
        for w in [-3.0, -0.5, 0.1, 2.0] {
            assert_eq!(spec.pi(w), reference.pi(w));
        }
        assert_eq!(c.tolerances().unwrap(), Tolerances::default());
    }

    #[test]
    fn field_level_diagnostics() {
        let bad = CANONICAL.replace("K = 1.0", "K = -1.0");
        let e = InstanceConfig::from_toml_str(&bad).unwrap().to_spec().unwrap_err();
        assert!(matches!(e, Error::InvalidConfig { ref field, .. } if field == "costs.K"), "{e}");
        let missing = CANONICAL.replace("l = 0.5\n", "");
        let e = InstanceConfig::from_toml_str(&missing).unwrap_err();
        assert!(matches!(e, Error::InvalidConfig { ref field, ref message }
            if field == "costs" && message.contains("missing field `l`")), "{e}");
        let typo = CANONICAL.replace("sigma = 1.0", "sigma = \"one\"");
        let e = InstanceConfig::from_toml_str(&typo).unwrap_err();
        assert!(matches!(e, Error::InvalidConfig { ref field, .. } if field == "sigma"), "{e}");
        let e = InstanceConfig::from_toml_str("sigma = = 1").unwrap_err();
        assert!(matches!(e, Error::InvalidConfig { ref field, .. } if field.starts_with("line 1")), "{e}");
        let unsorted = CANONICAL.replace("mu = -0.5", "mu = -1.5");
        let e = InstanceConfig::from_toml_str(&unsorted).unwrap().to_spec().unwrap_err();
        assert!(matches!(e, Error::InvalidConfig { ref field, .. } if field == "drift_menu"));
    }

    #[test]
    fn interval_and_table_families() {
        let text = r#"
sigma = 0.8
[costs]
K = 1.0
k = 0.5
L = 2.0
l = 0.25
[holding]
family = "table"
points = [[0.0, 0.0], [1.0, 1.0], [2.0, 3.0]]
[drift_menu]
kind = "interval"
lo = -1.0
hi = 1.0
cost = { family = "quadratic", a = 1.0 }
"#;
        let spec = InstanceConfig::from_toml_str(text).unwrap().to_spec().unwrap();
        assert!((spec.pi(1.0) + 0.25).abs() < 1e-12);
        assert_eq!(spec.h(1.5), 2.0);
    }

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(
            hash_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
