//! The reduced running cost `pi(w) = min_{mu in U} (mu * w + c(mu))` and its
//! feedback drift `mu(w)`.
//!
//! Among several minimizers the smallest drift is selected. Candidates whose
//! value is within [`TIE_TOLERANCE`] of the minimum count as tied.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Absolute tolerance under which two candidate values are treated as equal.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Default number of grid points for interval menus with an opaque cost.
pub const DEFAULT_GRID: usize = 1025;

/// Result of one Hamiltonian evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianValue {
    pub pi: f64,
    pub mu: f64,
}

/// Control-cost rate over an interval of drifts.
#[derive(Clone)]
pub enum CostFn {
    /// `a * mu^2 + b * mu + d`
    Quadratic { a: f64, b: f64, d: f64 },
    /// `a * |mu|`
    Absolute { a: f64 },
    /// Piecewise-linear interpolation of sorted `(mu, cost)` knots.
    Table(Vec<(f64, f64)>),
    /// Arbitrary cost; minimized by grid scan plus golden-section refinement.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for CostFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostFn::Quadratic { a, b, d } => write!(f, "Quadratic({a}, {b}, {d})"),
            CostFn::Absolute { a } => write!(f, "Absolute({a})"),
            CostFn::Table(t) => f.debug_tuple("Table").field(t).finish(),
            CostFn::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl CostFn {
    pub fn eval(&self, mu: f64) -> f64 {
        match self {
            CostFn::Quadratic { a, b, d } => a * mu * mu + b * mu + d,
            CostFn::Absolute { a } => a * mu.abs(),
            CostFn::Table(knots) => interpolate(knots, mu),
            CostFn::Custom(f) => f(mu),
        }
    }

    pub fn scaled(&self, factor: f64) -> CostFn {
        match self {
            CostFn::Quadratic { a, b, d } => CostFn::Quadratic {
                a: a * factor,
                b: b * factor,
                d: d * factor,
            },
            CostFn::Absolute { a } => CostFn::Absolute { a: a * factor },
            CostFn::Table(knots) => {
                CostFn::Table(knots.iter().map(|&(m, c)| (m, c * factor)).collect())
            }
            CostFn::Custom(f) => {
                let f = Arc::clone(f);
                CostFn::Custom(Arc::new(move |mu| factor * f(mu)))
            }
        }
    }
}

/// Piecewise-linear interpolation with linear extrapolation from the end segments.
pub(crate) fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    match knots.len() {
        0 => f64::NAN,
        1 => knots[0].1,
        n => {
            let i = match knots.iter().position(|&(k, _)| k > x) {
                Some(0) => 0,
                Some(i) => i - 1,
                None => n - 2,
            }
            .min(n - 2);
            let (x0, y0) = knots[i];
            let (x1, y1) = knots[i + 1];
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    }
}

/// One affine piece `mu * w + cost` of the lower envelope, active for `w >= from`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopePiece {
    pub from: f64,
    pub mu: f64,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct FiniteMenu {
    drifts: Vec<f64>,
    costs: Vec<f64>,
    envelope: Vec<EnvelopePiece>,
}

#[derive(Clone, Debug)]
pub struct IntervalMenu {
    lo: f64,
    hi: f64,
    cost: CostFn,
    grid: usize,
}

/// The admissible drift set `U` together with its control cost `c`.
#[derive(Clone, Debug)]
pub enum DriftMenu {
    Finite(FiniteMenu),
    Interval(IntervalMenu),
}

impl DriftMenu {
    /// Finite menu of `(drift, cost)` pairs. Drifts must be strictly increasing.
    pub fn finite(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidInstance("drift menu is empty".into()));
        }
        for (i, &(mu, c)) in pairs.iter().enumerate() {
            if !mu.is_finite() || !c.is_finite() {
                return Err(Error::InvalidInstance(format!(
                    "drift menu entry {i} is not finite: ({mu}, {c})"
                )));
            }
            if i > 0 && pairs[i - 1].0 >= mu {
                return Err(Error::InvalidInstance(format!(
                    "drift menu must be strictly increasing, entry {i} ({mu}) follows {}",
                    pairs[i - 1].0
                )));
            }
        }
        let drifts: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let costs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let envelope = lower_envelope(&drifts, &costs);
        Ok(DriftMenu::Finite(FiniteMenu {
            drifts,
            costs,
            envelope,
        }))
    }

    pub fn interval(lo: f64, hi: f64, cost: CostFn) -> Result<Self> {
        Self::interval_with_grid(lo, hi, cost, DEFAULT_GRID)
    }

    pub fn interval_with_grid(lo: f64, hi: f64, cost: CostFn, grid: usize) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::InvalidInstance(format!(
                "drift interval [{lo}, {hi}] is not a finite nonempty interval"
            )));
        }
        if grid < 2 {
            return Err(Error::InvalidInstance("interval grid needs at least 2 points".into()));
        }
        if let CostFn::Table(knots) = &cost {
            if knots.is_empty() {
                return Err(Error::InvalidInstance("cost table is empty".into()));
            }
            if knots.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::InvalidInstance(
                    "cost table abscissae must be strictly increasing".into(),
                ));
            }
        }
        let menu = IntervalMenu { lo, hi, cost, grid };
        for j in 0..grid {
            let mu = menu.grid_point(j);
            let c = menu.cost.eval(mu);
            if !c.is_finite() {
                return Err(Error::InvalidInstance(format!(
                    "control cost is not evaluable at mu = {mu} (got {c})"
                )));
            }
        }
        Ok(DriftMenu::Interval(menu))
    }

    pub fn min_drift(&self) -> f64 {
        match self {
            DriftMenu::Finite(m) => m.drifts[0],
            DriftMenu::Interval(m) => m.lo,
        }
    }

    pub fn max_drift(&self) -> f64 {
        match self {
            DriftMenu::Finite(m) => *m.drifts.last().unwrap(),
            DriftMenu::Interval(m) => m.hi,
        }
    }

    pub fn contains(&self, mu: f64) -> bool {
        match self {
            DriftMenu::Finite(m) => m.drifts.contains(&mu),
            DriftMenu::Interval(m) => mu >= m.lo && mu <= m.hi,
        }
    }

    /// Control cost `c(mu)`; `None` when `mu` is not in the menu.
    pub fn cost(&self, mu: f64) -> Option<f64> {
        match self {
            DriftMenu::Finite(m) => m
                .drifts
                .iter()
                .position(|&d| d == mu)
                .map(|i| m.costs[i]),
            DriftMenu::Interval(m) => (mu >= m.lo && mu <= m.hi).then(|| m.cost.eval(mu)),
        }
    }

    /// Elements of a finite menu, or `n` evenly spaced samples of an interval.
    pub fn sample_drifts(&self, n: usize) -> Vec<f64> {
        match self {
            DriftMenu::Finite(m) => m.drifts.clone(),
            DriftMenu::Interval(m) => {
                let n = n.max(2);
                (0..n)
                    .map(|j| m.lo + (m.hi - m.lo) * j as f64 / (n - 1) as f64)
                    .collect()
            }
        }
    }

    /// Levels of `w` at which the finite-menu feedback drift switches.
    /// Empty for interval menus.
    pub fn switch_levels(&self) -> Vec<f64> {
        match self {
            DriftMenu::Finite(m) => m.envelope.iter().skip(1).map(|p| p.from).collect(),
            DriftMenu::Interval(_) => Vec::new(),
        }
    }

    pub fn envelope(&self) -> Option<&[EnvelopePiece]> {
        match self {
            DriftMenu::Finite(m) => Some(&m.envelope),
            DriftMenu::Interval(_) => None,
        }
    }

    pub fn min_cost(&self) -> f64 {
        match self {
            DriftMenu::Finite(m) => m.costs.iter().copied().fold(f64::INFINITY, f64::min),
            DriftMenu::Interval(_) => self.evaluate_unchecked(0.0).pi,
        }
    }

    /// Largest `|c(mu)|` over the menu (sampled for intervals).
    pub fn cost_scale(&self) -> f64 {
        match self {
            DriftMenu::Finite(m) => m.costs.iter().fold(0.0, |a, c| a.max(c.abs())),
            DriftMenu::Interval(m) => (0..m.grid)
                .map(|j| m.cost.eval(m.grid_point(j)).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Evaluate `pi(w)` and the smallest minimizing drift `mu(w)`.
    pub fn evaluate(&self, w: f64) -> Result<HamiltonianValue> {
        let v = self.evaluate_unchecked(w);
        if v.pi.is_finite() && v.mu.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidInstance(format!(
                "Hamiltonian is not finite at w = {w}: pi = {}, mu = {}",
                v.pi, v.mu
            )))
        }
    }

    pub(crate) fn evaluate_unchecked(&self, w: f64) -> HamiltonianValue {
        match self {
            DriftMenu::Finite(m) => argmin_candidates(
                m.drifts.iter().zip(&m.costs).map(|(&mu, &c)| (mu, mu * w + c)),
            ),
            DriftMenu::Interval(m) => m.evaluate(w),
        }
    }

    /// `pi(w)` alone.
    #[inline]
    pub fn pi(&self, w: f64) -> f64 {
        match self {
            DriftMenu::Finite(m) => m
                .drifts
                .iter()
                .zip(&m.costs)
                .fold(f64::INFINITY, |acc, (&mu, &c)| acc.min(mu * w + c)),
            DriftMenu::Interval(m) => m.evaluate(w).pi,
        }
    }

    /// `mu(w)` alone.
    #[inline]
    pub fn mu(&self, w: f64) -> f64 {
        self.evaluate_unchecked(w).mu
    }

    /// Same menu with every control cost multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> DriftMenu {
        match self {
            DriftMenu::Finite(m) => {
                let pairs: Vec<(f64, f64)> = m
                    .drifts
                    .iter()
                    .zip(&m.costs)
                    .map(|(&mu, &c)| (mu, c * factor))
                    .collect();
                DriftMenu::finite(&pairs).expect("scaling preserves validity")
            }
            DriftMenu::Interval(m) => DriftMenu::Interval(IntervalMenu {
                lo: m.lo,
                hi: m.hi,
                cost: m.cost.scaled(factor),
                grid: m.grid,
            }),
        }
    }
}

/// Lipschitz constant of `pi`: `max(|mu_lo|, |mu_hi|)`.
pub fn lipschitz_constant(menu: &DriftMenu) -> f64 {
    menu.min_drift().abs().max(menu.max_drift().abs())
}

/// Free-function form of [`DriftMenu::evaluate`].
pub fn evaluate(menu: &DriftMenu, w: f64) -> Result<HamiltonianValue> {
    menu.evaluate(w)
}

/// Pick the global minimum over `(mu, value)` candidates, ties broken to the smallest `mu`.
fn argmin_candidates(candidates: impl Iterator<Item = (f64, f64)> + Clone) -> HamiltonianValue {
    let best = candidates
        .clone()
        .fold(f64::INFINITY, |acc, (_, v)| acc.min(v));
    let mut out = HamiltonianValue {
        pi: best,
        mu: f64::NAN,
    };
    for (mu, v) in candidates {
        if v <= best + TIE_TOLERANCE && !(mu >= out.mu) {
            out.mu = mu;
        }
    }
    out
}

impl IntervalMenu {
    fn grid_point(&self, j: usize) -> f64 {
        if j + 1 == self.grid {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * j as f64 / (self.grid - 1) as f64
        }
    }

    fn objective(&self, mu: f64, w: f64) -> f64 {
        mu * w + self.cost.eval(mu)
    }

    fn evaluate(&self, w: f64) -> HamiltonianValue {
        let (lo, hi) = (self.lo, self.hi);
        match &self.cost {
            CostFn::Quadratic { a, b, .. } => {
                let mut cand = vec![lo, hi];
                if *a > 0.0 {
                    cand.push((-(w + b) / (2.0 * a)).clamp(lo, hi));
                }
                argmin_candidates(cand.iter().map(|&mu| (mu, self.objective(mu, w))))
            }
            CostFn::Absolute { .. } => {
                let mut cand = vec![lo, hi];
                if lo < 0.0 && hi > 0.0 {
                    cand.push(0.0);
                }
                argmin_candidates(cand.iter().map(|&mu| (mu, self.objective(mu, w))))
            }
            CostFn::Table(knots) => {
                let mut cand = vec![lo, hi];
                cand.extend(knots.iter().map(|k| k.0).filter(|&m| m > lo && m < hi));
                argmin_candidates(cand.iter().map(|&mu| (mu, self.objective(mu, w))))
            }
            CostFn::Custom(_) => self.evaluate_by_grid(w),
        }
    }

    /// Dense grid scan followed by golden-section refinement around the grid argmin.
    fn evaluate_by_grid(&self, w: f64) -> HamiltonianValue {
        let n = self.grid;
        let grid = (0..n).map(|j| {
            let mu = self.grid_point(j);
            (mu, self.objective(mu, w))
        });
        let coarse = argmin_candidates(grid);
        let step = (self.hi - self.lo) / (n - 1) as f64;
        let a = (coarse.mu - step).max(self.lo);
        let b = (coarse.mu + step).min(self.hi);
        let (mu_g, v_g) = golden_section(|mu| self.objective(mu, w), a, b);
        if v_g < coarse.pi - TIE_TOLERANCE {
            HamiltonianValue { pi: v_g, mu: mu_g }
        } else {
            coarse
        }
    }
}

/// Golden-section minimization on `[a, b]`; returns `(argmin, min)`.
pub(crate) fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Lower envelope of the lines `mu_i * w + c_i`, ordered by increasing `w`.
/// At a breakpoint the piece on the right (smaller drift) owns the point.
fn lower_envelope(drifts: &[f64], costs: &[f64]) -> Vec<EnvelopePiece> {
    let n = drifts.len();
    // For w -> -inf the steepest line (largest drift) is lowest.
    let mut cur = n - 1;
    let mut from = f64::NEG_INFINITY;
    let mut pieces = vec![EnvelopePiece {
        from,
        mu: drifts[cur],
        cost: costs[cur],
    }];
    loop {
        let mut next: Option<(f64, usize)> = None;
        for j in 0..cur {
            let cross = (costs[j] - costs[cur]) / (drifts[cur] - drifts[j]);
            if cross < from {
                continue;
            }
            next = match next {
                None => Some((cross, j)),
                Some((bx, _)) if cross < bx => Some((cross, j)),
                // equal crossing: the smaller drift dominates to the right
                Some((bx, bj)) if cross == bx && j < bj => Some((cross, j)),
                keep => keep,
            };
        }
        match next {
            Some((cross, j)) => {
                if cross == from {
                    pieces.pop();
                }
                from = cross;
                cur = j;
                pieces.push(EnvelopePiece {
                    from,
                    mu: drifts[cur],
                    cost: costs[cur],
                });
            }
            None => break,
        }
    }
    pieces
}
