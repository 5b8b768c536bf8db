//! Control band policies `(0, q, Q, S)` with a state-feedback drift profile.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::freeboundary::FreeBoundarySolution;
use crate::hamiltonian::{interpolate, DriftMenu};
use crate::model::ProblemSpec;
use crate::ode::SolutionCurve;

/// Drift as a function of the inventory level.
#[derive(Clone)]
pub enum DriftProfile {
    Constant(f64),
    /// Piecewise constant: `values[i]` on `[breaks[i-1], breaks[i])`, so
    /// `values.len() == breaks.len() + 1`.
    Steps { breaks: Vec<f64>, values: Vec<f64> },
    /// Piecewise-linear through sorted `(x, mu)` knots, flat outside.
    Table(Vec<(f64, f64)>),
    /// `mu(w(x))` for a stored curve; `x` past the end of the curve uses its last value.
    Feedback {
        curve: Arc<SolutionCurve>,
        menu: DriftMenu,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for DriftProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftProfile::Constant(m) => write!(f, "Constant({m})"),
            DriftProfile::Steps { breaks, values } => f
                .debug_struct("Steps")
                .field("breaks", breaks)
                .field("values", values)
                .finish(),
            DriftProfile::Table(t) => f.debug_tuple("Table").field(t).finish(),
            DriftProfile::Feedback { curve, .. } => {
                write!(f, "Feedback(w0 = {}, gamma = {})", curve.w0, curve.gamma)
            }
            DriftProfile::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl DriftProfile {
    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        match self {
            DriftProfile::Constant(m) => *m,
            DriftProfile::Steps { breaks, values } => values[breaks.partition_point(|&b| b <= x)],
            DriftProfile::Table(knots) => {
                if x <= knots[0].0 {
                    knots[0].1
                } else if x >= knots[knots.len() - 1].0 {
                    knots[knots.len() - 1].1
                } else {
                    interpolate(knots, x)
                }
            }
            DriftProfile::Feedback { curve, menu } => menu.mu(curve.w(x.min(curve.x_end()))),
            DriftProfile::Custom(f) => f(x),
        }
    }

    /// Points where the profile may be non-smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            DriftProfile::Steps { breaks, .. } => breaks.clone(),
            DriftProfile::Table(knots) => knots.iter().map(|k| k.0).collect(),
            DriftProfile::Feedback { curve, menu } => {
                let mut xs: Vec<f64> = menu
                    .switch_levels()
                    .into_iter()
                    .flat_map(|s| curve.find_crossings(s).into_iter().map(|(x, _)| x))
                    .collect();
                xs.sort_by(f64::total_cmp);
                xs
            }
            _ => Vec::new(),
        }
    }

    /// Same profile shifted right by `s`: the result at `x` is the original at `x - s`.
    pub fn shifted(&self, s: f64) -> DriftProfile {
        match self {
            DriftProfile::Constant(m) => DriftProfile::Constant(*m),
            DriftProfile::Steps { breaks, values } => DriftProfile::Steps {
                breaks: breaks.iter().map(|b| b + s).collect(),
                values: values.clone(),
            },
            DriftProfile::Table(knots) => {
                DriftProfile::Table(knots.iter().map(|&(x, m)| (x + s, m)).collect())
            }
            other => {
                let inner = other.clone();
                DriftProfile::Custom(Arc::new(move |x| inner.at((x - s).max(0.0))))
            }
        }
    }

    /// Step-function form of `mu(w(x))` on `[0, x_end]` when the menu is finite;
    /// otherwise a [`DriftProfile::Feedback`].
    pub fn from_curve(curve: &SolutionCurve, menu: &DriftMenu) -> DriftProfile {
        if matches!(menu, DriftMenu::Finite(_)) {
            let mut breaks: Vec<f64> = menu
                .switch_levels()
                .into_iter()
                .flat_map(|s| curve.find_crossings(s).into_iter().map(|(x, _)| x))
                .filter(|&x| x > 0.0 && x < curve.x_end())
                .collect();
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            let mut edges = vec![0.0];
            edges.extend(&breaks);
            edges.push(curve.x_end());
            let mut values: Vec<f64> = edges
                .windows(2)
                .map(|e| menu.mu(curve.w(0.5 * (e[0] + e[1]))))
                .collect();
            // merge neighbours that picked the same drift
            let mut merged_breaks = Vec::new();
            let mut merged_values = vec![values[0]];
            for (b, v) in breaks.iter().zip(values.drain(1..)) {
                if v != *merged_values.last().unwrap() {
                    merged_breaks.push(*b);
                    merged_values.push(v);
                }
            }
            DriftProfile::Steps {
                breaks: merged_breaks,
                values: merged_values,
            }
        } else {
            DriftProfile::Feedback {
                curve: Arc::new(curve.clone()),
                menu: menu.clone(),
            }
        }
    }
}

/// Band policy: up to `q` at 0, down to `Q` at `S`, drift `profile(x)` in between.
#[allow(non_snake_case)]
#[derive(Clone, Debug)]
pub struct BandPolicy {
    pub q: f64,
    pub Q: f64,
    pub S: f64,
    pub profile: DriftProfile,
}

#[allow(non_snake_case)]
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BandLevels {
    pub q: f64,
    pub Q: f64,
    pub S: f64,
}

impl BandPolicy {
    #[allow(non_snake_case)]
    pub fn new(q: f64, Q: f64, S: f64, profile: DriftProfile) -> Result<Self> {
        if !(q.is_finite() && Q.is_finite() && S.is_finite() && 0.0 < q && q <= Q && Q < S) {
            return Err(Error::InvalidConfig {
                field: "policy".into(),
                message: format!("need 0 < q <= Q < S, got q = {q}, Q = {Q}, S = {S}"),
            });
        }
        Ok(Self { q, Q, S, profile })
    }

    /// The band and drift of a solved instance.
    pub fn optimal(spec: &ProblemSpec, sol: &FreeBoundarySolution) -> Result<Self> {
        Self::new(
            sol.q_star,
            sol.Q_star,
            sol.S_star,
            DriftProfile::from_curve(&sol.curve, &spec.menu),
        )
    }

    pub fn levels(&self) -> BandLevels {
        BandLevels {
            q: self.q,
            Q: self.Q,
            S: self.S,
        }
    }

    #[allow(non_snake_case)]
    pub fn with_levels(&self, q: f64, Q: f64, S: f64) -> Result<Self> {
        Self::new(q, Q, S, self.profile.clone())
    }

    /// Check that the profile stays in the menu on a grid over `[0, S]`.
    pub fn validate(&self, menu: &DriftMenu) -> Result<()> {
        let n = 2000;
        for i in 0..=n {
            let x = self.S * i as f64 / n as f64;
            let mu = self.profile.at(x);
            if !menu.contains(mu) {
                return Err(Error::InvalidConfig {
                    field: "policy.mu".into(),
                    message: format!("drift {mu} at x = {x} is not in the menu"),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_lookup() {
        let p = DriftProfile::Steps {
            breaks: vec![1.0, 2.0],
            values: vec![1.0, 0.5, -1.0],
        };
        assert_eq!(p.at(0.0), 1.0);
        assert_eq!(p.at(0.999), 1.0);
        assert_eq!(p.at(1.0), 0.5);
        assert_eq!(p.at(7.0), -1.0);
        assert_eq!(p.shifted(0.5).at(1.2), 1.0);
    }

    #[test]
    fn rejects_bad_band() {
        let c = DriftProfile::Constant(0.0);
        assert!(BandPolicy::new(0.0, 1.0, 2.0, c.clone()).is_err());
        assert!(BandPolicy::new(1.5, 1.0, 2.0, c.clone()).is_err());
        assert!(BandPolicy::new(0.5, 2.0, 2.0, c.clone()).is_err());
        assert!(BandPolicy::new(1.0, 1.0, 2.0, c).is_ok());
    }

    #[test]
    fn validate_checks_menu() {
        let menu = DriftMenu::finite(&[(-1.0, 1.0), (1.0, 1.0)]).unwrap();
        let p = BandPolicy::new(0.5, 1.0, 2.0, DriftProfile::Constant(0.3)).unwrap();
        assert!(p.validate(&menu).is_err());
        let p = BandPolicy::new(0.5, 1.0, 2.0, DriftProfile::Constant(1.0)).unwrap();
        assert!(p.validate(&menu).is_ok());
    }
}
