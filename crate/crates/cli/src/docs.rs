//! JSON documents written by the commands.

use std::fs;
use std::path::Path;

use driftband::freeboundary::{Residuals, Tolerances};
use driftband::{DriftProfile, FreeBoundarySolution, ProblemSpec};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

impl Tool {
    pub fn current() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// Common header plus a command-specific body.
#[derive(Debug, Serialize)]
pub struct Document<'a, T: Serialize> {
    pub tool: Tool,
    pub command: &'a str,
    pub config_path: String,
    pub config_hash: &'a str,
    #[serde(flatten)]
    pub body: T,
}

/// What `solve` writes and `verify`, `eval --from-solution` read back.
#[allow(non_snake_case)]
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveSummary {
    pub tool: Tool,
    pub config_path: String,
    pub config_hash: String,
    pub w0_star: f64,
    pub gamma_star: f64,
    pub q_star: f64,
    pub Q_star: f64,
    pub S_star: f64,
    pub x_star: f64,
    pub residuals: Residuals,
    pub tolerances: Tolerances,
    /// `gamma2* - gamma1*` at the returned `w0*`.
    #[serde(default)]
    pub gap: Option<f64>,
    /// `(x, mu*)` where the optimal drift switches; empty for interval menus.
    #[serde(default)]
    pub mu_switches: Vec<(f64, f64)>,
    pub curve_csv: String,
}

impl SolveSummary {
    pub fn new(
        spec: &ProblemSpec,
        sol: &FreeBoundarySolution,
        config_path: &Path,
        config_hash: &str,
        curve_csv: &str,
    ) -> Self {
        let mu_switches = match DriftProfile::from_curve(&sol.curve, &spec.menu) {
            DriftProfile::Steps { breaks, values } => breaks.into_iter().zip(values.into_iter().skip(1)).collect(),
            _ => Vec::new(),
        };
        Self {
            tool: Tool::current(),
            config_path: config_path.display().to_string(),
            config_hash: config_hash.into(),
            w0_star: sol.w0_star,
            gamma_star: sol.gamma_star,
            q_star: sol.q_star,
            Q_star: sol.Q_star,
            S_star: sol.S_star,
            x_star: sol.x_star,
            residuals: sol.residuals,
            tolerances: sol.tolerances,
            gap: sol.gap.is_finite().then_some(sol.gap),
            mu_switches,
            curve_csv: curve_csv.into(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read solution file {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("malformed solution file {}: {e}", path.display())))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::from(e).context(&path.display().to_string()))
}
