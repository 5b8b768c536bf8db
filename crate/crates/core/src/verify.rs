//! Certification of a solved instance and exact evaluation of band policies.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::freeboundary::{FreeBoundarySolution, Tolerances};
use crate::model::ProblemSpec;
use crate::policy::{BandLevels, BandPolicy, DriftProfile};
use crate::rk::{self, DenseSegment};

/// Boundary systems with a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;
/// Above this grid size the pairwise impulse checks subsample.
pub const PAIR_GRID_LIMIT: usize = 1000;
const MAX_LISTED_VIOLATIONS: usize = 20;

/// The trajectories `phi` (homogeneous, `w0 = 1`), `psi` (forced by `c + h`,
/// `w0 = 0`) and `chi` (response to `gamma = 1`, `w0 = 0`) together with
/// their running integrals, so that `w = w0 phi + psi + gamma chi`.
#[derive(Clone, Debug)]
pub struct Superposition {
    segments: Vec<DenseSegment<6>>,
}

impl Superposition {
    fn at(&self, x: f64) -> [f64; 6] {
        let i = self
            .segments
            .partition_point(|s| s.x1() < x)
            .min(self.segments.len() - 1);
        self.segments[i].eval(x)
    }

    /// `(phi, psi, chi)` at `x`.
    pub fn trajectories(&self, x: f64) -> [f64; 3] {
        let y = self.at(x);
        [y[0], y[1], y[2]]
    }

    /// `(int phi, int psi, int chi)` from 0 to `x`.
    pub fn integrals(&self, x: f64) -> [f64; 3] {
        let y = self.at(x);
        [y[3], y[4], y[5]]
    }

    pub fn w(&self, x: f64, w0: f64, gamma: f64) -> f64 {
        let [p, s, c] = self.trajectories(x);
        w0 * p + s + gamma * c
    }

    pub fn integral_w(&self, x: f64, w0: f64, gamma: f64) -> f64 {
        let [p, s, c] = self.integrals(x);
        w0 * p + s + gamma * c
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalResult {
    pub gamma: f64,
    pub w0: f64,
    pub policy: BandLevels,
    /// `int_0^q w + (K + k q)`
    pub up_residual: f64,
    /// `int_Q^S w - (L + l (S - Q))`
    pub down_residual: f64,
    pub condition: f64,
    #[serde(skip)]
    pub curves: Superposition,
}

fn integrate_superposition(
    spec: &ProblemSpec,
    policy: &BandPolicy,
    tol: f64,
) -> Result<Superposition> {
    let two_over = 2.0 / (spec.sigma * spec.sigma);
    let menu = &spec.menu;
    let mut bad: Option<(f64, f64)> = None;
    let f = |x: f64, y: &[f64; 6]| -> [f64; 6] {
        let mu = policy.profile.at(x);
        let c = match menu.cost(mu) {
            Some(c) => c,
            None => {
                bad.get_or_insert((x, mu));
                0.0
            }
        };
        let forcing = c + spec.h(x);
        [
            -two_over * mu * y[0],
            -two_over * (mu * y[1] + forcing),
            two_over * (1.0 - mu * y[2]),
            y[0],
            y[1],
            y[2],
        ]
    };
    let mut stops = vec![policy.q, policy.Q];
    stops.extend(policy.profile.breakpoints());
    let max_step = (spec.sigma * spec.sigma / (4.0 * spec.lipschitz() + 1e-12)).min(1.0);
    let segments = rk::solve(f, 0.0, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0], policy.S, &stops, tol, max_step)
        .ok_or(Error::Stiffness {
            x: f64::NAN,
            w: f64::NAN,
            step: 0.0,
        })?;
    if let Some((x, mu)) = bad {
        return Err(Error::InvalidConfig {
            field: "policy.mu".into(),
            message: format!("drift {mu} at x = {x} is not in the menu"),
        });
    }
    Ok(Superposition { segments })
}

/// Long-run average cost of a band policy, from the boundary conditions
/// `int_0^q w = -(K + k q)` and `int_Q^S w = L + l (S - Q)`.
pub fn evaluate_band_policy(spec: &ProblemSpec, policy: &BandPolicy, tol: f64) -> Result<EvalResult> {
    let sup = integrate_superposition(spec, policy, tol)?;
    let (q, big_q, s) = (policy.q, policy.Q, policy.S);
    let up_target = -spec.up.charge(q);
    let down_target = spec.down.charge(s - big_q);
    let iq = sup.integrals(q);
    let ibq = sup.integrals(big_q);
    let is = sup.integrals(s);
    let a = [[iq[0], iq[2]], [is[0] - ibq[0], is[2] - ibq[2]]];
    let b = [up_target - iq[1], down_target - (is[1] - ibq[1])];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let condition = condition_2x2(&a);
    if !(condition <= MAX_CONDITION) || det == 0.0 {
        return Err(Error::DegeneratePolicy { condition });
    }
    let w0 = (b[0] * a[1][1] - a[0][1] * b[1]) / det;
    let gamma = (a[0][0] * b[1] - a[1][0] * b[0]) / det;
    let up_residual = sup.integral_w(q, w0, gamma) - up_target;
    let down_residual = sup.integral_w(s, w0, gamma) - sup.integral_w(big_q, w0, gamma) - down_target;
    Ok(EvalResult {
        gamma,
        w0,
        policy: policy.levels(),
        up_residual,
        down_residual,
        condition,
        curves: sup,
    })
}

/// 2-norm condition number of a 2x2 matrix.
fn condition_2x2(a: &[[f64; 2]; 2]) -> f64 {
    let fro2 = a.iter().flatten().map(|v| v * v).sum::<f64>();
    let det = (a[0][0] * a[1][1] - a[0][1] * a[1][0]).abs();
    if det == 0.0 {
        return f64::INFINITY;
    }
    // singular values s1 >= s2 satisfy s1^2 + s2^2 = fro2, s1 s2 = det
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    let s1 = ((fro2 + disc) / 2.0).sqrt();
    let s2 = det / s1;
    s1 / s2
}

/// Result of one inequality family.
#[derive(Clone, Debug, Serialize)]
pub struct InequalityCheck {
    pub min: f64,
    /// Where the minimum was attained: `[x]` or `[x, y]`.
    pub argmin: Vec<f64>,
    pub passed: bool,
    /// Up to 20 violating points with their values.
    pub violations: Vec<(Vec<f64>, f64)>,
}

impl InequalityCheck {
    fn new() -> Self {
        Self {
            min: f64::INFINITY,
            argmin: Vec::new(),
            passed: true,
            violations: Vec::new(),
        }
    }

    fn push(&mut self, at: Vec<f64>, v: f64, tol: f64) {
        if v < self.min {
            self.min = v;
            self.argmin = at.clone();
        }
        if v < -tol {
            self.passed = false;
            if self.violations.len() < MAX_LISTED_VIOLATIONS {
                self.violations.push((at, v));
            }
        }
    }

    fn merge(mut self, other: InequalityCheck) -> Self {
        if other.min < self.min {
            self.min = other.min;
            self.argmin = other.argmin;
        }
        self.passed &= other.passed;
        for v in other.violations {
            if self.violations.len() < MAX_LISTED_VIOLATIONS {
                self.violations.push(v);
            }
        }
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificationReport {
    pub gamma: f64,
    pub s_star: f64,
    pub x_max: f64,
    pub n_grid: usize,
    pub pair_grid: usize,
    pub tol: f64,
    /// `1/2 sigma^2 f'' + pi(f') + h - gamma >= 0`
    pub drift: InequalityCheck,
    /// Largest `|drift expression|` on `[0, S*]`, where it should vanish.
    pub equality_residual: f64,
    /// The drift margin beyond `S*` was observed to be non-decreasing.
    pub tail_monotone: bool,
    /// `f(y) + K + k (y - x) - f(x) >= 0` for `x < y`
    pub up_impulse: InequalityCheck,
    /// `f(y) + L + l (x - y) - f(x) >= 0` for `y < x`
    pub down_impulse: InequalityCheck,
    /// Minimum of `f*` on `[0, S*]`; beyond `S*` it grows with slope `l`.
    pub f_lower_bound: f64,
    pub bounded_below: bool,
    /// Smallest value of `w*` on `[0, S*]`.
    pub w_min: f64,
    pub passed: bool,
}

impl CertificationReport {
    pub fn summary(&self) -> String {
        let mut failed = Vec::new();
        if !self.drift.passed {
            failed.push(format!("drift inequality min {:e} at x = {:?}", self.drift.min, self.drift.argmin));
        }
        if !self.up_impulse.passed {
            failed.push(format!(
                "up-impulse inequality min {:e} at (x, y) = {:?}",
                self.up_impulse.min, self.up_impulse.argmin
            ));
        }
        if !self.down_impulse.passed {
            failed.push(format!(
                "down-impulse inequality min {:e} at (y, x) = {:?}",
                self.down_impulse.min, self.down_impulse.argmin
            ));
        }
        if !self.bounded_below {
            failed.push("f* is not bounded below".into());
        }
        if failed.is_empty() {
            format!("all inequalities hold within {:e}", self.tol)
        } else {
            failed.join("; ")
        }
    }
}

/// The candidate value function `f*(x) = int_0^x w*` on `[0, S*]`, extended with slope `l`.
struct ValueFunction<'a> {
    sol: &'a FreeBoundarySolution,
    slope: f64,
    f_s: f64,
}

impl<'a> ValueFunction<'a> {
    fn new(sol: &'a FreeBoundarySolution, slope: f64) -> Self {
        let f_s = sol.curve.integrate(0.0, sol.S_star, |_, w| w);
        Self { sol, slope, f_s }
    }

    /// `(f, f', f'')` on a sorted grid.
    fn on_grid(&self, xs: &[f64]) -> Vec<[f64; 3]> {
        let s = self.sol.S_star;
        let c = &self.sol.curve;
        let mut acc = 0.0;
        let mut prev = 0.0;
        xs.iter()
            .map(|&x| {
                if x <= s {
                    acc += c.integrate(prev, x, |_, w| w);
                    prev = x;
                    [acc, c.w(x), c.w_prime_interp(x)]
                } else {
                    [self.f_s + self.slope * (x - s), self.slope, 0.0]
                }
            })
            .collect()
    }
}

/// Check the lower-bound inequalities for `f*` on a grid over `[0, x_max]`.
/// The grid is offset by half a step so that it avoids `x = 0` and, generically, `S*`.
pub fn check_lower_bound(
    spec: &ProblemSpec,
    sol: &FreeBoundarySolution,
    x_max: f64,
    n_grid: usize,
    tol: f64,
) -> Result<CertificationReport> {
    if !(x_max > sol.S_star) {
        return Err(Error::Precondition(format!("x_max = {x_max} must exceed S* = {}", sol.S_star)));
    }
    if n_grid < 1000 {
        return Err(Error::Precondition(format!("n_grid must be at least 1000, got {n_grid}")));
    }
    let (kf, k) = (spec.up.fixed, spec.up.per_unit);
    let (lf, l) = (spec.down.fixed, spec.down.per_unit);
    let gamma = sol.gamma_star;
    let dx = x_max / n_grid as f64;
    let xs: Vec<f64> = (0..n_grid)
        .map(|i| {
            let x = (i as f64 + 0.5) * dx;
            if (x - sol.S_star).abs() < 1e-9 * dx {
                x + 1e-6 * dx
            } else {
                x
            }
        })
        .collect();
    let vf = ValueFunction::new(sol, l);
    let vals = vf.on_grid(&xs);
    let s2 = 0.5 * spec.sigma * spec.sigma;

    let mut drift = InequalityCheck::new();
    let mut equality_residual = 0.0f64;
    let mut tail = Vec::new();
    let mut w_min = f64::INFINITY;
    for (&x, v) in xs.iter().zip(&vals) {
        let d = s2 * v[2] + spec.pi(v[1]) + spec.h(x) - gamma;
        drift.push(vec![x], d, tol);
        if x <= sol.S_star {
            equality_residual = equality_residual.max(d.abs());
            w_min = w_min.min(v[1]);
        } else {
            tail.push(d);
        }
    }
    let tail_monotone = tail.windows(2).all(|p| p[1] >= p[0] - tol);

    // pairwise checks, subsampled above the limit
    let stride = n_grid.div_ceil(PAIR_GRID_LIMIT).max(1);
    let idx: Vec<usize> = (0..n_grid).step_by(stride).collect();
    let pair_grid = idx.len();
    let up_impulse = idx
        .par_iter()
        .enumerate()
        .map(|(a, &i)| {
            let mut chk = InequalityCheck::new();
            for &j in &idx[a + 1..] {
                let (x, y) = (xs[i], xs[j]);
                let v = vals[j][0] + kf + k * (y - x) - vals[i][0];
                chk.push(vec![x, y], v, tol);
            }
            chk
        })
        .reduce(InequalityCheck::new, |a, b| a.merge(b));
    let down_impulse = idx
        .par_iter()
        .enumerate()
        .map(|(a, &i)| {
            let mut chk = InequalityCheck::new();
            for &j in &idx[..a] {
                let (x, y) = (xs[i], xs[j]);
                let v = vals[j][0] + lf + l * (x - y) - vals[i][0];
                chk.push(vec![y, x], v, tol);
            }
            chk
        })
        .reduce(InequalityCheck::new, |a, b| a.merge(b));

    let f_lower_bound = xs
        .iter()
        .zip(&vals)
        .filter(|(&x, _)| x <= sol.S_star)
        .map(|(_, v)| v[0])
        .fold(vf.f_s.min(0.0), f64::min);
    let bounded_below = l > 0.0 && f_lower_bound.is_finite();

    let passed = drift.passed && up_impulse.passed && down_impulse.passed && bounded_below;
    Ok(CertificationReport {
        gamma,
        s_star: sol.S_star,
        x_max,
        n_grid,
        pair_grid,
        tol,
        drift,
        equality_residual,
        tail_monotone,
        up_impulse,
        down_impulse,
        f_lower_bound,
        bounded_below,
        w_min,
        passed,
    })
}

/// [`check_lower_bound`] that turns a failed report into [`Error::Certification`].
pub fn certify(
    spec: &ProblemSpec,
    sol: &FreeBoundarySolution,
    x_max: f64,
    n_grid: usize,
    tol: f64,
) -> Result<CertificationReport> {
    let report = check_lower_bound(spec, sol, x_max, n_grid, tol)?;
    if report.passed {
        Ok(report)
    } else {
        Err(Error::Certification(Box::new(report)))
    }
}

/// What a row of the local search perturbed.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    #[allow(non_snake_case)]
    Band { dq: f64, dQ: f64, dS: f64 },
    /// Drift profile shifted right by `shift`.
    ProfileShift { shift: f64 },
    ConstantDrift { mu: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalOptRow {
    pub perturbation: Perturbation,
    pub gamma: f64,
    pub difference: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalOptTable {
    pub gamma_star: f64,
    pub rows: Vec<LocalOptRow>,
    pub min_difference: f64,
}

/// Evaluate perturbations of the optimal policy: every `(q, Q, S)` offset from
/// `band_deltas`, every profile shift from `shift_deltas`, and each constant drift
/// of the menu (sampled for intervals). Perturbations that break `0 < q <= Q < S`
/// are skipped.
pub fn brute_force_local_opt(
    spec: &ProblemSpec,
    sol: &FreeBoundarySolution,
    band_deltas: &[f64],
    shift_deltas: &[f64],
    tol: f64,
) -> Result<LocalOptTable> {
    let base = BandPolicy::optimal(spec, sol)?;
    let mut jobs: Vec<(Perturbation, BandPolicy)> = Vec::new();
    for &dq in band_deltas {
        for &d_big_q in band_deltas {
            for &ds in band_deltas {
                if let Ok(p) = base.with_levels(base.q + dq, base.Q + d_big_q, base.S + ds) {
                    jobs.push((
                        Perturbation::Band {
                            dq,
                            dQ: d_big_q,
                            dS: ds,
                        },
                        p,
                    ));
                }
            }
        }
    }
    for &shift in shift_deltas {
        let p = BandPolicy::new(base.q, base.Q, base.S, base.profile.shifted(shift))?;
        jobs.push((Perturbation::ProfileShift { shift }, p));
    }
    for mu in spec.menu.sample_drifts(11) {
        let p = BandPolicy::new(base.q, base.Q, base.S, DriftProfile::Constant(mu))?;
        jobs.push((Perturbation::ConstantDrift { mu }, p));
    }
    let rows = jobs
        .into_par_iter()
        .map(|(perturbation, p)| {
            let r = evaluate_band_policy(spec, &p, tol)?;
            Ok(LocalOptRow {
                perturbation,
                gamma: r.gamma,
                difference: r.gamma - sol.gamma_star,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_difference = rows.iter().map(|r| r.difference).fold(f64::INFINITY, f64::min);
    Ok(LocalOptTable {
        gamma_star: sol.gamma_star,
        rows,
        min_difference,
    })
}

/// Default stepper tolerance for policy evaluation given solver tolerances.
pub fn eval_tol(tol: &Tolerances) -> f64 {
    tol.ode
}
