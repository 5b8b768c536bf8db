//! Problem instance: volatility, impulse costs, holding cost and drift menu.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hamiltonian::{interpolate, lipschitz_constant, DriftMenu};

/// Fixed plus proportional charge for one impulse: `fixed + per_unit * amount`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImpulseCost {
    pub fixed: f64,
    pub per_unit: f64,
}

impl ImpulseCost {
    pub fn new(fixed: f64, per_unit: f64) -> Self {
        Self { fixed, per_unit }
    }

    pub fn charge(&self, amount: f64) -> f64 {
        self.fixed + self.per_unit * amount
    }
}

/// Holding-cost rate as a function of the inventory level.
#[derive(Clone)]
pub enum HoldingCost {
    /// `slope * x`
    Linear { slope: f64 },
    /// `coef * x^exponent`
    Power { coef: f64, exponent: f64 },
    /// Piecewise-linear through sorted `(x, h)` knots starting at `(0, 0)`,
    /// extended linearly past the last knot.
    Table(Vec<(f64, f64)>),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for HoldingCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HoldingCost::Linear { slope } => write!(f, "Linear({slope})"),
            HoldingCost::Power { coef, exponent } => write!(f, "Power({coef}, {exponent})"),
            HoldingCost::Table(t) => f.debug_tuple("Table").field(t).finish(),
            HoldingCost::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl HoldingCost {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            HoldingCost::Linear { slope } => slope * x,
            HoldingCost::Power { coef, exponent } => coef * x.powf(*exponent),
            HoldingCost::Table(knots) => interpolate(knots, x),
            HoldingCost::Custom(f) => f(x),
        }
    }

    pub fn scaled(&self, factor: f64) -> HoldingCost {
        match self {
            HoldingCost::Linear { slope } => HoldingCost::Linear {
                slope: slope * factor,
            },
            HoldingCost::Power { coef, exponent } => HoldingCost::Power {
                coef: coef * factor,
                exponent: *exponent,
            },
            HoldingCost::Table(knots) => {
                HoldingCost::Table(knots.iter().map(|&(x, h)| (x, h * factor)).collect())
            }
            HoldingCost::Custom(f) => {
                let f = Arc::clone(f);
                HoldingCost::Custom(Arc::new(move |x| factor * f(x)))
            }
        }
    }

    /// Smallest `x >= 0` with `h(x) >= level` (bisection; `h` is increasing).
    pub fn inverse(&self, level: f64) -> f64 {
        if level <= 0.0 {
            return 0.0;
        }
        let mut hi = 1.0;
        let mut n = 0;
        while self.eval(hi) < level {
            hi *= 2.0;
            n += 1;
            if n > 1100 {
                return f64::INFINITY;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid) >= level {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        match self {
            HoldingCost::Linear { slope } if !(slope.is_finite() && *slope > 0.0) => {
                return bad(format!("linear holding slope must be positive, got {slope}"))
            }
            HoldingCost::Power { coef, exponent }
                if !(coef.is_finite() && *coef > 0.0 && exponent.is_finite() && *exponent > 0.0) =>
            {
                return bad(format!(
                    "power holding cost needs coef > 0 and exponent > 0, got ({coef}, {exponent})"
                ))
            }
            HoldingCost::Table(knots) => {
                if knots.len() < 2 {
                    return bad("holding table needs at least two knots".into());
                }
                if knots[0] != (0.0, 0.0) {
                    return bad(format!("holding table must start at (0, 0), got {:?}", knots[0]));
                }
                for w in knots.windows(2) {
                    if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                        return bad(format!(
                            "holding table must be strictly increasing in x and h: {:?} then {:?}",
                            w[0], w[1]
                        ));
                    }
                }
            }
            _ => {}
        }
        let h0 = self.eval(0.0);
        if h0 != 0.0 {
            return bad(format!("holding cost must vanish at 0, got h(0) = {h0}"));
        }
        let mut prev = h0;
        for i in 1..=2000 {
            let x = 0.05 * i as f64;
            let v = self.eval(x);
            if !v.is_finite() || v <= prev {
                return bad(format!(
                    "holding cost must be finite and strictly increasing; fails at x = {x} (h = {v})"
                ));
            }
            prev = v;
        }
        if !self.inverse(1e6).is_finite() {
            return bad("holding cost appears bounded; it must grow without bound".into());
        }
        Ok(())
    }
}

/// A complete problem instance.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub sigma: f64,
    /// Upward impulse cost `(K, k)`.
    pub up: ImpulseCost,
    /// Downward impulse cost `(L, l)`.
    pub down: ImpulseCost,
    pub holding: HoldingCost,
    pub menu: DriftMenu,
}

impl ProblemSpec {
    pub fn new(
        sigma: f64,
        up: ImpulseCost,
        down: ImpulseCost,
        holding: HoldingCost,
        menu: DriftMenu,
    ) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidInstance(format!("sigma must be positive, got {sigma}")));
        }
        for (name, v) in [
            ("K", up.fixed),
            ("k", up.per_unit),
            ("L", down.fixed),
            ("l", down.per_unit),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "impulse cost {name} must be strictly positive, got {v}"
                )));
            }
        }
        holding.validate()?;
        Ok(Self {
            sigma,
            up,
            down,
            holding,
            menu,
        })
    }

    /// The reference instance: sigma = 1, h(x) = x, c(mu) = mu^2 on
    /// U = {-1, -0.5, 0, 0.5, 1}, K = L = 1, k = l = 0.5.
    pub fn canonical() -> Self {
        let pairs: Vec<(f64, f64)> = [-1.0, -0.5, 0.0, 0.5, 1.0]
            .iter()
            .map(|&m| (m, m * m))
            .collect();
        Self::new(
            1.0,
            ImpulseCost::new(1.0, 0.5),
            ImpulseCost::new(1.0, 0.5),
            HoldingCost::Linear { slope: 1.0 },
            DriftMenu::finite(&pairs).expect("canonical menu"),
        )
        .expect("canonical instance")
    }

    #[inline]
    pub fn h(&self, x: f64) -> f64 {
        self.holding.eval(x)
    }

    #[inline]
    pub fn pi(&self, w: f64) -> f64 {
        self.menu.pi(w)
    }

    pub fn lipschitz(&self) -> f64 {
        lipschitz_constant(&self.menu)
    }

    /// Right-hand side `w' = (2 / sigma^2) (gamma - pi(w) - h(x))`.
    #[inline]
    pub fn slope(&self, x: f64, w: f64, gamma: f64) -> f64 {
        2.0 / (self.sigma * self.sigma) * (gamma - self.pi(w) - self.h(x))
    }

    /// Same instance with `h`, `c`, `K`, `k`, `L`, `l` all multiplied by `factor`.
    pub fn scaled_costs(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.sigma,
            ImpulseCost::new(self.up.fixed * factor, self.up.per_unit * factor),
            ImpulseCost::new(self.down.fixed * factor, self.down.per_unit * factor),
            self.holding.scaled(factor),
            self.menu.scaled(factor),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::CostFn;

    fn menu() -> DriftMenu {
        DriftMenu::finite(&[(-1.0, 1.0), (1.0, 1.0)]).unwrap()
    }

    #[test]
    fn rejects_nonpositive_costs() {
        let h = HoldingCost::Linear { slope: 1.0 };
        let ok = ImpulseCost::new(1.0, 1.0);
        assert!(ProblemSpec::new(1.0, ImpulseCost::new(0.0, 1.0), ok, h.clone(), menu()).is_err());
        assert!(ProblemSpec::new(1.0, ok, ImpulseCost::new(1.0, -1.0), h.clone(), menu()).is_err());
        assert!(ProblemSpec::new(0.0, ok, ok, h, menu()).is_err());
    }

    #[test]
    fn rejects_bad_holding_costs() {
        let ok = ImpulseCost::new(1.0, 1.0);
        let bounded = HoldingCost::Custom(Arc::new(|x: f64| x / (1.0 + x)));
        assert!(ProblemSpec::new(1.0, ok, ok, bounded, menu()).is_err());
        let offset = HoldingCost::Custom(Arc::new(|x: f64| x + 1.0));
        assert!(ProblemSpec::new(1.0, ok, ok, offset, menu()).is_err());
        let flat = HoldingCost::Table(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 1.0)]);
        assert!(ProblemSpec::new(1.0, ok, ok, flat, menu()).is_err());
        let table = HoldingCost::Table(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 3.0)]);
        assert!(ProblemSpec::new(1.0, ok, ok, table, menu()).is_ok());
    }

    #[test]
    fn holding_inverse() {
        let h = HoldingCost::Power {
            coef: 2.0,
            exponent: 2.0,
        };
        assert!((h.inverse(8.0) - 2.0).abs() < 1e-12);
        let t = HoldingCost::Table(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 3.0)]);
        assert!((t.eval(3.0) - 5.0).abs() < 1e-15);
        assert!((t.inverse(2.0) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn scaling_multiplies_every_cost() {
        let spec = ProblemSpec::canonical();
        let s2 = spec.scaled_costs(2.0).unwrap();
        assert_eq!(s2.up, ImpulseCost::new(2.0, 1.0));
        assert_eq!(s2.h(1.5), 3.0);
        assert_eq!(s2.pi(0.7 * 2.0), 2.0 * spec.pi(0.7));
        let q = DriftMenu::interval(-1.0, 1.0, CostFn::Quadratic { a: 1.0, b: 0.0, d: 0.0 })
            .unwrap();
        assert!((q.scaled(2.0).pi(2.0) - 2.0 * q.pi(1.0)).abs() < 1e-15);
    }
}
