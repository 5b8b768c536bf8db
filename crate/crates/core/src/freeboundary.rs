//! Nested bisections for the free boundary problem: `gamma1*(w0)` matches the
//! down-impulse condition, `gamma2*(w0)` the up-impulse condition, and the
//! outer search finds the `w0` where the two agree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::ode::{integrate_with, Direction, OdeOptions, Shape, SolutionCurve, StoppingRule};
use crate::roots::bisect;

const MAX_EXPANSIONS: usize = 80;
const MAX_BISECTIONS: usize = 200;

/// Numerical tolerances shared by the solver and the verifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Bracket width for every bisection (in `gamma` and in `w0`).
    pub root: f64,
    /// Absolute and relative tolerance of the ODE stepper.
    pub ode: f64,
    /// Acceptance threshold for the five boundary residuals.
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            root: 1e-9,
            ode: 1e-11,
            residual: 1e-6,
        }
    }
}

impl Tolerances {
    /// Root tolerance `t` with the stepper two orders tighter.
    pub fn from_root(t: f64) -> Self {
        Self {
            root: t,
            ode: t / 100.0,
            ..Self::default()
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            root: self.root * factor,
            ode: self.ode * factor,
            residual: self.residual * factor,
        }
    }

    pub(crate) fn ode_options(&self) -> OdeOptions {
        OdeOptions::with_tol(self.ode)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverOptions {
    pub tol: Tolerances,
    /// Lowest `w0` tried while looking for the lower bracket; default
    /// `-1e6 (k + l + 1)`.
    pub w0_floor: Option<f64>,
    /// First offset below `-k` in the geometric descent.
    pub descent_start: f64,
    pub descent_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            w0_floor: None,
            descent_start: 0.5,
            descent_factor: 2.0,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: Tolerances) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    fn floor(&self, spec: &ProblemSpec) -> f64 {
        self.w0_floor
            .unwrap_or(-1e6 * (spec.up.per_unit + spec.down.per_unit + 1.0))
    }
}

/// The five boundary residuals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `int_0^q (w + k) + K`
    pub r1: f64,
    /// `int_Q^S (w - l) - L`
    pub r2: f64,
    /// `w(q) + k`
    pub r3: f64,
    /// `w(Q) - l`
    pub r4: f64,
    /// `w(S) - l`
    pub r5: f64,
}

impl Residuals {
    pub fn as_array(&self) -> [f64; 5] {
        [self.r1, self.r2, self.r3, self.r4, self.r5]
    }

    pub fn max_abs(&self) -> f64 {
        self.as_array().iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }
}

#[allow(non_snake_case)]
#[derive(Clone, Debug, Serialize)]
pub struct FreeBoundarySolution {
    pub w0_star: f64,
    pub gamma_star: f64,
    pub q_star: f64,
    pub Q_star: f64,
    pub S_star: f64,
    pub x_star: f64,
    pub residuals: Residuals,
    pub tolerances: Tolerances,
    /// `gamma2*(w0*) - gamma1*(w0*)` at the returned point.
    pub gap: f64,
    /// `(w0, d(w0))` pairs visited by the outer search.
    pub trace: Vec<(f64, Option<f64>)>,
    /// `(x, mu*(x))` on a uniform grid over `[0, S*]`.
    pub mu_profile: Vec<(f64, f64)>,
    #[serde(skip)]
    pub curve: SolutionCurve,
}

impl FreeBoundarySolution {
    /// Check orderings and residuals against the given threshold.
    pub fn check(&self, residual_tol: f64) -> Result<()> {
        let ordered = 0.0 < self.q_star
            && self.q_star < self.Q_star
            && self.Q_star < self.S_star
            && self.Q_star < self.x_star
            && self.x_star < self.S_star;
        if !ordered {
            return Err(Error::SolveFailure {
                message: format!(
                    "boundary ordering violated: q = {}, Q = {}, x* = {}, S = {}",
                    self.q_star, self.Q_star, self.x_star, self.S_star
                ),
                trace: self.trace.clone(),
            });
        }
        if self.residuals.max_abs() > residual_tol {
            return Err(Error::SolveFailure {
                message: format!(
                    "boundary residuals {:?} exceed {residual_tol:e}",
                    self.residuals.as_array()
                ),
                trace: self.trace.clone(),
            });
        }
        Ok(())
    }

    /// Write `x,w_star,mu_star` on the integration nodes.
    pub fn write_curve_csv<W: std::io::Write>(&self, spec: &ProblemSpec, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["x", "w_star", "mu_star"])
            .map_err(crate::ode::csv_err)?;
        for n in &self.curve.nodes {
            wtr.serialize((n.x, n.w, spec.menu.mu(n.w)))
                .map_err(crate::ode::csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn curve(spec: &ProblemSpec, w0: f64, gamma: f64, level: f64, tol: &Tolerances) -> Result<SolutionCurve> {
    integrate_with(
        spec,
        w0,
        gamma,
        StoppingRule::AfterPeakWBelow(level),
        &tol.ode_options(),
    )
}

/// `int_0^inf (w(x; w0, gamma) - l)^+ dx`; `+inf` for an increasing curve.
pub fn f1(spec: &ProblemSpec, w0: f64, gamma: f64, tol: &Tolerances) -> Result<f64> {
    let l = spec.down.per_unit;
    if !(w0 < l) {
        return Err(Error::Precondition(format!("f1 needs w0 < l = {l}, got {w0}")));
    }
    let c = curve(spec, w0, gamma, l, tol)?;
    if c.shape == Shape::Increasing {
        return Ok(f64::INFINITY);
    }
    if c.peak_value() <= l {
        return Ok(0.0);
    }
    let up = c.first_crossing(l, Direction::Up);
    let down = c.first_crossing(l, Direction::Down);
    match (up, down) {
        (Some(q), Some(s)) => Ok(c.integrate(q, s, |_, w| w - l)),
        _ => Err(Error::Classification(format!(
            "unimodal curve with peak {} above l = {l} lacks two crossings (w0 = {w0}, gamma = {gamma})",
            c.peak_value()
        ))),
    }
}

/// Expand `hi = lo + span` geometrically until `reached(hi)` holds.
fn expand_upward(
    mut reached: impl FnMut(f64) -> Result<bool>,
    lo: f64,
    what: &'static str,
) -> Result<f64> {
    let mut span = 1.0;
    for _ in 0..MAX_EXPANSIONS {
        let hi = lo + span;
        if reached(hi)? {
            return Ok(hi);
        }
        span *= 2.0;
    }
    Err(Error::Bracketing {
        what,
        detail: format!("no upper end found within {MAX_EXPANSIONS} doublings above {lo}"),
    })
}

/// The `gamma` with `f1(w0, gamma) = L`.
pub fn gamma1_star(spec: &ProblemSpec, w0: f64, tol: &Tolerances) -> Result<f64> {
    let target = spec.down.fixed;
    // at gamma = pi(w0) the curve decreases from w0 < l, so f1 = 0
    let lo = spec.pi(w0);
    let hi = expand_upward(|g| Ok(f1(spec, w0, g, tol)? >= target), lo, "gamma1*")?;
    let b = bisect(
        |g| Ok::<_, Error>(f1(spec, w0, g, tol)? >= target),
        lo,
        hi,
        tol.root,
        MAX_BISECTIONS,
    )?;
    Ok(b.mid())
}

/// Result of the peak-touches-`-k` search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Gamma2Lower {
    /// Smallest bisection point whose peak reaches `-k`.
    pub gamma: f64,
    /// Largest bisection point whose peak stays below `-k`.
    pub gamma_below: f64,
    pub x_peak: f64,
    pub peak: f64,
}

fn peak_of(spec: &ProblemSpec, w0: f64, gamma: f64, tol: &Tolerances) -> Result<(f64, f64)> {
    let c = curve(spec, w0, gamma, -spec.up.per_unit, tol)?;
    Ok(match c.shape {
        Shape::Increasing => (f64::INFINITY, f64::INFINITY),
        _ => (c.peak_value(), c.x_star),
    })
}

/// The `gamma` at which the peak of `w(.; w0, gamma)` touches `-k`.
pub fn gamma2_lower(spec: &ProblemSpec, w0: f64, tol: &Tolerances) -> Result<Gamma2Lower> {
    let k = spec.up.per_unit;
    if !(w0 < -k) {
        return Err(Error::Precondition(format!("gamma2_lower needs w0 < -k = {}, got {w0}", -k)));
    }
    let lo = spec.pi(w0);
    let hi = expand_upward(|g| Ok(peak_of(spec, w0, g, tol)?.0 >= -k), lo, "gamma2 lower")?;
    let b = bisect(
        |g| Ok::<_, Error>(peak_of(spec, w0, g, tol)?.0 >= -k),
        lo,
        hi,
        tol.root,
        MAX_BISECTIONS,
    )?;
    let (peak, x_peak) = peak_of(spec, w0, b.hi, tol)?;
    Ok(Gamma2Lower {
        gamma: b.hi,
        gamma_below: b.lo,
        x_peak,
        peak,
    })
}

/// `int_0^q (w + k) dx` with `q` the first up-crossing of `-k`.
pub fn f2(spec: &ProblemSpec, w0: f64, gamma: f64, tol: &Tolerances) -> Result<f64> {
    let k = spec.up.per_unit;
    if !(w0 < -k) {
        return Err(Error::Precondition(format!("f2 needs w0 < -k = {}, got {w0}", -k)));
    }
    let c = curve(spec, w0, gamma, -k, tol)?;
    let q = match c.shape {
        Shape::Decreasing => None,
        _ => c.first_crossing(-k, Direction::Up),
    }
    .ok_or_else(|| {
        Error::Precondition(format!(
            "w(.; {w0}, {gamma}) never reaches -k = {} (peak {})",
            -k,
            c.peak_value()
        ))
    })?;
    Ok(c.integrate(0.0, q, |_, w| w + k))
}

/// `Ok(None)` when `w0` is not below the threshold where `f2(w0, gamma2_lower) = -K`.
fn gamma2_star_inner(spec: &ProblemSpec, w0: f64, tol: &Tolerances) -> Result<Option<f64>> {
    let target = -spec.up.fixed;
    let lower = gamma2_lower(spec, w0, tol)?;
    if !(f2(spec, w0, lower.gamma, tol)? < target) {
        return Ok(None);
    }
    let lo = lower.gamma;
    let hi = expand_upward(|g| Ok(f2(spec, w0, g, tol)? >= target), lo, "gamma2*")?;
    let b = bisect(
        |g| Ok::<_, Error>(f2(spec, w0, g, tol)? >= target),
        lo,
        hi,
        tol.root,
        MAX_BISECTIONS,
    )?;
    Ok(Some(b.mid()))
}

/// The `gamma > gamma2_lower(w0)` with `f2(w0, gamma) = -K`.
pub fn gamma2_star(spec: &ProblemSpec, w0: f64, tol: &Tolerances) -> Result<f64> {
    gamma2_star_inner(spec, w0, tol)?.ok_or_else(|| {
        Error::Precondition(format!(
            "w0 = {w0} is not below the threshold where f2(w0, gamma2_lower(w0)) = -K; decrease w0"
        ))
    })
}

#[derive(Clone, Copy, Debug)]
enum Probe {
    /// `w0` is not below the `f2` threshold.
    Above,
    Below { d: f64 },
}

fn probe(spec: &ProblemSpec, w0: f64, tol: &Tolerances) -> Result<Probe> {
    let (g2, g1) = rayon::join(
        || gamma2_star_inner(spec, w0, tol),
        || gamma1_star(spec, w0, tol),
    );
    Ok(match g2? {
        None => Probe::Above,
        Some(g2) => Probe::Below { d: g2 - g1? },
    })
}

fn failure(message: String, trace: &[(f64, Option<f64>)]) -> Error {
    Error::SolveFailure {
        message,
        trace: trace.to_vec(),
    }
}

/// Solve the free boundary problem.
pub fn solve(spec: &ProblemSpec, opts: &SolverOptions) -> Result<FreeBoundarySolution> {
    let tol = &opts.tol;
    let k = spec.up.per_unit;
    let floor = opts.floor(spec);
    let mut trace: Vec<(f64, Option<f64>)> = Vec::new();
    let record = |w0: f64, p: &Result<Probe>, trace: &mut Vec<(f64, Option<f64>)>| {
        trace.push((
            w0,
            match p {
                Ok(Probe::Below { d }) => Some(*d),
                _ => None,
            },
        ))
    };

    // Upper bracket: first w0 below the f2 threshold with d < 0.
    let mut offset = opts.descent_start;
    let mut above: Option<f64> = None;
    let mut first_below: Option<(f64, f64)> = None;
    while -k - offset >= floor {
        let w0 = -k - offset;
        let p = probe(spec, w0, tol);
        record(w0, &p, &mut trace);
        match p {
            Ok(Probe::Above) => above = Some(w0),
            Ok(Probe::Below { d }) => {
                first_below = Some((w0, d));
                break;
            }
            Err(e) => return Err(failure(format!("probe at w0 = {w0} failed: {e}"), &trace)),
        }
        offset *= opts.descent_factor;
    }
    let Some((mut w_below, mut d_below)) = first_below else {
        return Err(failure(
            format!("no w0 above the floor {floor} satisfies f2(w0, gamma2_lower(w0)) < -K"),
            &trace,
        ));
    };
    let mut upper = None;
    if d_below < 0.0 {
        upper = Some(w_below);
    } else if let Some(mut w_above) = above {
        // d < 0 just below the threshold; close in on it
        for _ in 0..MAX_BISECTIONS {
            let m = 0.5 * (w_below + w_above);
            if m <= w_below || m >= w_above {
                break;
            }
            let p = probe(spec, m, tol);
            record(m, &p, &mut trace);
            match p {
                Ok(Probe::Above) => w_above = m,
                Ok(Probe::Below { d }) if d < 0.0 => {
                    upper = Some(m);
                    break;
                }
                Ok(Probe::Below { d }) => {
                    w_below = m;
                    d_below = d;
                }
                Err(e) => return Err(failure(format!("probe at w0 = {m} failed: {e}"), &trace)),
            }
        }
    }
    let Some(mut upper) = upper else {
        return Err(failure(
            format!("could not find w0 with gamma2* < gamma1* (last d = {d_below} at w0 = {w_below})"),
            &trace,
        ));
    };

    // Lower bracket: keep descending until d >= 0.
    let mut lower = None;
    if d_below >= 0.0 && w_below < upper {
        lower = Some(w_below);
    }
    while lower.is_none() {
        offset *= opts.descent_factor;
        let w0 = -k - offset;
        if w0 < floor {
            return Err(failure(
                format!("no w0 above the floor {floor} with gamma2* >= gamma1*"),
                &trace,
            ));
        }
        if w0 >= upper {
            continue;
        }
        let p = probe(spec, w0, tol);
        record(w0, &p, &mut trace);
        match p {
            Ok(Probe::Below { d }) if d >= 0.0 => lower = Some(w0),
            Ok(Probe::Below { .. }) => upper = w0,
            Ok(Probe::Above) => {
                return Err(failure(
                    format!("w0 = {w0} is above the f2 threshold although a larger w0 was below"),
                    &trace,
                ))
            }
            Err(e) => return Err(failure(format!("probe at w0 = {w0} failed: {e}"), &trace)),
        }
    }
    let lower = lower.expect("set above");

    let b = bisect(
        |w0| {
            let p = probe(spec, w0, tol);
            record(w0, &p, &mut trace);
            match p {
                Ok(Probe::Below { d }) => Ok(d < 0.0),
                Ok(Probe::Above) => Err(format!("w0 = {w0} left the region below the f2 threshold")),
                Err(e) => Err(format!("probe at w0 = {w0} failed: {e}")),
            }
        },
        lower,
        upper,
        tol.root,
        MAX_BISECTIONS,
    );
    let b = match b {
        Ok(b) => b,
        Err(msg) => return Err(failure(msg, &trace)),
    };
    let w0_star = b.mid();
    assemble(spec, w0_star, tol, trace)
}

fn assemble(
    spec: &ProblemSpec,
    w0: f64,
    tol: &Tolerances,
    trace: Vec<(f64, Option<f64>)>,
) -> Result<FreeBoundarySolution> {
    let g1 = gamma1_star(spec, w0, tol).map_err(|e| failure(e.to_string(), &trace))?;
    let g2 = gamma2_star(spec, w0, tol).map_err(|e| failure(e.to_string(), &trace))?;
    let mut sol = candidate(spec, w0, g1, tol, trace)?;
    sol.gap = g2 - g1;
    sol.check(tol.residual)?;
    Ok(sol)
}

/// Rebuild the band, curve and residuals for a given `(w0, gamma)` without
/// searching or checking the residuals. `gap` is left as NaN.
pub fn reconstruct(spec: &ProblemSpec, w0: f64, gamma: f64, tol: &Tolerances) -> Result<FreeBoundarySolution> {
    candidate(spec, w0, gamma, tol, Vec::new())
}

fn candidate(
    spec: &ProblemSpec,
    w0: f64,
    gamma: f64,
    tol: &Tolerances,
    trace: Vec<(f64, Option<f64>)>,
) -> Result<FreeBoundarySolution> {
    let (k, l) = (spec.up.per_unit, spec.down.per_unit);
    let (kf, lf) = (spec.up.fixed, spec.down.fixed);
    let c = curve(spec, w0, gamma, l, tol).map_err(|e| failure(e.to_string(), &trace))?;
    if c.shape != Shape::Unimodal {
        return Err(failure(format!("optimal curve is {:?}, expected unimodal", c.shape), &trace));
    }
    let q = c.first_crossing(-k, Direction::Up);
    let big_q = c.first_crossing(l, Direction::Up);
    let s = c.first_crossing(l, Direction::Down);
    let (Some(q), Some(big_q), Some(s)) = (q, big_q, s) else {
        return Err(failure(
            format!("missing crossings on the optimal curve: q = {q:?}, Q = {big_q:?}, S = {s:?}"),
            &trace,
        ));
    };
    let residuals = Residuals {
        r1: c.integrate(0.0, q, |_, w| w + k) + kf,
        r2: c.integrate(big_q, s, |_, w| w - l) - lf,
        r3: c.w(q) + k,
        r4: c.w(big_q) - l,
        r5: c.w(s) - l,
    };
    let mut sol = FreeBoundarySolution {
        w0_star: w0,
        gamma_star: gamma,
        q_star: q,
        Q_star: big_q,
        S_star: s,
        x_star: c.x_star,
        residuals,
        tolerances: *tol,
        gap: f64::NAN,
        trace,
        mu_profile: Vec::new(),
        curve: c,
    };
    sol.mu_profile = mu_star_profile(spec, &sol, 201);
    Ok(sol)
}

/// `mu(w*(x))` on `n` uniform points over `[0, S*]`.
pub fn mu_star_profile(spec: &ProblemSpec, sol: &FreeBoundarySolution, n: usize) -> Vec<(f64, f64)> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let x = sol.S_star * i as f64 / (n - 1) as f64;
            (x, spec.menu.mu(sol.curve.w(x)))
        })
        .collect()
}

/// Number of constant pieces in a sampled profile.
pub fn count_segments(profile: &[(f64, f64)]) -> usize {
    if profile.is_empty() {
        return 0;
    }
    1 + profile.windows(2).filter(|p| p[0].1 != p[1].1).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_zero_below_and_infinite_above() {
        let spec = ProblemSpec::canonical();
        let tol = Tolerances::default();
        assert_eq!(f1(&spec, -2.0, spec.pi(-2.0), &tol).unwrap(), 0.0);
        assert_eq!(f1(&spec, -2.0, 50.0, &tol).unwrap(), f64::INFINITY);
        let a = f1(&spec, -2.0, 1.6, &tol).unwrap();
        let b = f1(&spec, -2.0, 1.64, &tol).unwrap();
        assert!(a > 0.0 && a.is_finite() && b > a);
    }

    #[test]
    fn gamma1_hits_target() {
        let spec = ProblemSpec::canonical();
        let tol = Tolerances::default();
        let g = gamma1_star(&spec, -2.0, &tol).unwrap();
        assert!((f1(&spec, -2.0, g, &tol).unwrap() - spec.down.fixed).abs() < 1e-6);
    }

    #[test]
    fn gamma2_lower_peak_identity() {
        let spec = ProblemSpec::canonical();
        let tol = Tolerances::default();
        let r = gamma2_lower(&spec, -3.0, &tol).unwrap();
        assert!((r.peak + spec.up.per_unit).abs() < 1e-6);
        let x = spec.holding.inverse(r.gamma - spec.pi(-spec.up.per_unit));
        assert!((x - r.x_peak).abs() < 1e-5);
    }

    #[test]
    fn gamma2_star_requires_low_w0() {
        let spec = ProblemSpec::canonical();
        let tol = Tolerances::default();
        assert!(matches!(gamma2_star(&spec, -2.5, &tol), Err(Error::Precondition(_))));
        let g = gamma2_star(&spec, -6.0, &tol).unwrap();
        assert!((f2(&spec, -6.0, g, &tol).unwrap() + spec.up.fixed).abs() < 1e-6);
    }

    #[test]
    fn f2_without_crossing_is_precondition_error() {
        let spec = ProblemSpec::canonical();
        let tol = Tolerances::default();
        assert!(matches!(f2(&spec, -3.0, spec.pi(-3.0), &tol), Err(Error::Precondition(_))));
    }

    #[test]
    fn reconstruct_reproduces_the_band() {
        let spec = ProblemSpec::canonical();
        let tol = Tolerances::default();
        let sol = solve(&spec, &SolverOptions::default()).unwrap();
        let r = reconstruct(&spec, sol.w0_star, sol.gamma_star, &tol).unwrap();
        assert_eq!(r.q_star, sol.q_star);
        assert_eq!(r.S_star, sol.S_star);
        assert_eq!(r.residuals, sol.residuals);
        assert!(r.gap.is_nan() && r.trace.is_empty());
    }
}
