//! Integration of `w' = (2 / sigma^2) (gamma - pi(w) - h(x))` from `w(0) = w0`,
//! with dense output, level crossings and shape classification.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::quad::gauss_legendre;
use crate::rk::{self, DenseSegment};
use crate::roots::brent;

/// Default absolute/relative tolerance of the stepper.
pub const DEFAULT_ODE_TOL: f64 = 1e-11;
/// A rising curve whose value exceeds `BLOWUP_FACTOR * scale` is taken to be increasing.
pub const BLOWUP_FACTOR: f64 = 1e6;
const DEFAULT_MAX_STEPS: usize = 2_000_000;

/// When to stop integrating.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum StoppingRule {
    /// Integrate exactly up to the given `x`.
    ReachX(f64),
    /// Stop as soon as `w < level`: immediately if `w0 < level`, otherwise at
    /// the first downward crossing.
    WBelow(f64),
    /// Stop at the first point after the peak where `w < level`, or at the
    /// peak itself if the peak value is already below `level`.
    AfterPeakWBelow(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Decreasing,
    Increasing,
    Unimodal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Level(f64),
    /// `w' = 0`
    Turn,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Event {
    pub kind: EventKind,
    pub x: f64,
    pub direction: Direction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Node {
    pub x: f64,
    pub w: f64,
    pub w_prime: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Rule,
    /// `w` exceeded the blow-up threshold while still rising.
    BlowUp,
    /// The x cap was reached while still rising.
    Cap,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub tol: f64,
    /// Hard limit on `x`, overriding the automatic cap.
    pub x_cap: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_ODE_TOL,
            x_cap: None,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// One integrated trajectory `w(.; w0, gamma)`.
#[derive(Clone, Debug)]
pub struct SolutionCurve {
    pub w0: f64,
    pub gamma: f64,
    pub nodes: Vec<Node>,
    segments: Vec<DenseSegment<1>>,
    pub shape: Shape,
    /// Location of the maximum: 0 when decreasing, `+inf` when increasing.
    pub x_star: f64,
    /// Set when the shape was inferred at a cap rather than observed.
    pub provisional: bool,
    pub events: Vec<Event>,
    pub stop_reason: StopReason,
}

impl SolutionCurve {
    /// Right end of the integrated range.
    pub fn x_end(&self) -> f64 {
        self.nodes.last().map_or(0.0, |n| n.x)
    }

    pub fn segments(&self) -> &[DenseSegment<1>] {
        &self.segments
    }

    fn segment_at(&self, x: f64) -> Option<&DenseSegment<1>> {
        if self.segments.is_empty() {
            return None;
        }
        let i = self.segments.partition_point(|s| s.x1() < x);
        Some(&self.segments[i.min(self.segments.len() - 1)])
    }

    /// Interpolated `w(x)` for `x` in `[0, x_end]`.
    pub fn w(&self, x: f64) -> f64 {
        match self.segment_at(x) {
            Some(s) => s.eval(x)[0],
            None => self.w0,
        }
    }

    /// Derivative of the interpolant. For the exact slope use
    /// [`ProblemSpec::slope`] at `(x, self.w(x))`.
    pub fn w_prime_interp(&self, x: f64) -> f64 {
        match self.segment_at(x) {
            Some(s) => s.deriv(x)[0],
            None => self.nodes[0].w_prime,
        }
    }

    /// Maximum of `w` over the integrated range.
    pub fn peak_value(&self) -> f64 {
        match self.shape {
            Shape::Decreasing => self.w0,
            Shape::Unimodal => self.w(self.x_star),
            Shape::Increasing => self.w(self.x_end()),
        }
    }

    /// `int_a^b g(x, w(x)) dx` by Gauss–Legendre on each step of the curve.
    pub fn integrate(&self, a: f64, b: f64, g: impl Fn(f64, f64) -> f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let start = self.segments.partition_point(|s| s.x1() <= a);
        let mut total = 0.0;
        for s in &self.segments[start..] {
            if s.x0 >= b {
                break;
            }
            let lo = s.x0.max(a);
            let hi = s.x1().min(b);
            if hi > lo {
                total += gauss_legendre(|x| g(x, s.eval(x)[0]), lo, hi);
            }
        }
        total
    }

    /// Monotone pieces of the curve, with their direction.
    fn pieces(&self) -> Vec<(f64, f64, Direction)> {
        let end = self.x_end();
        match self.shape {
            Shape::Decreasing => vec![(0.0, end, Direction::Down)],
            Shape::Increasing => vec![(0.0, end, Direction::Up)],
            Shape::Unimodal => vec![
                (0.0, self.x_star, Direction::Up),
                (self.x_star, end, Direction::Down),
            ],
        }
    }

    /// Every root of `w(x) = level` on the integrated range, in increasing `x`.
    /// A root at `x = 0` is reported only if `w'(0) != 0`.
    pub fn find_crossings(&self, level: f64) -> Vec<(f64, Direction)> {
        let mut out = Vec::new();
        let w0_prime = self.nodes[0].w_prime;
        if self.w0 == level && w0_prime != 0.0 {
            let dir = if w0_prime > 0.0 { Direction::Up } else { Direction::Down };
            out.push((0.0, dir));
        }
        let end = self.x_end();
        for (a, b, dir) in self.pieces() {
            if b <= a {
                continue;
            }
            let sign = if dir == Direction::Up { 1.0 } else { -1.0 };
            let start = self.segments.partition_point(|s| s.x1() <= a);
            for s in &self.segments[start..] {
                if s.x0 >= b {
                    break;
                }
                let lo = s.x0.max(a);
                let hi = s.x1().min(b);
                if hi <= lo {
                    continue;
                }
                // oriented so the piece is increasing
                let g = |x: f64| sign * (s.eval(x)[0] - level);
                let (glo, ghi) = (g(lo), g(hi));
                // a stopping crossing sits at the end of the curve, possibly an ulp short
                let at_end = hi == b && b == end && ghi > -1e-12 * (1.0 + level.abs());
                if glo < 0.0 && ghi >= 0.0 {
                    if let Some(r) = brent(g, lo, hi, 1e-14 * (1.0 + hi.abs())) {
                        out.push((r, dir));
                    }
                } else if glo < 0.0 && at_end {
                    out.push((hi, dir));
                }
            }
        }
        out
    }

    /// First crossing of `level` in the given direction.
    pub fn first_crossing(&self, level: f64, direction: Direction) -> Option<f64> {
        self.find_crossings(level)
            .into_iter()
            .find(|&(_, d)| d == direction)
            .map(|(x, _)| x)
    }

    /// Write the nodes as CSV with columns `x,w,w_prime`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["x", "w", "w_prime"]).map_err(csv_err)?;
        for n in &self.nodes {
            wtr.serialize((n.x, n.w, n.w_prime)).map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Classify a curve from its stored samples.
pub fn classify(curve: &SolutionCurve) -> Result<Shape> {
    let scale = 1.0 + curve.w0.abs() + curve.gamma.abs();
    if curve.nodes.len() > 1
        && curve
        .nodes
        .iter()
        .all(|n| n.w_prime.abs() <= 1e-14 * scale)
    {
        return Err(Error::Classification(format!(
            "|w'| is below the noise floor on all {} nodes (w0 = {}, gamma = {})",
            curve.nodes.len(),
            curve.w0,
            curve.gamma
        )));
    }
    Ok(curve.shape)
}

/// [`integrate_with`] using default options and the given stepper tolerance.
pub fn integrate(
    spec: &ProblemSpec,
    w0: f64,
    gamma: f64,
    stop: StoppingRule,
    tol: f64,
) -> Result<SolutionCurve> {
    integrate_with(spec, w0, gamma, stop, &OdeOptions::with_tol(tol))
}

pub fn integrate_with(
    spec: &ProblemSpec,
    w0: f64,
    gamma: f64,
    stop: StoppingRule,
    opts: &OdeOptions,
) -> Result<SolutionCurve> {
    if !(opts.tol > 0.0) {
        return Err(Error::Precondition(format!("ODE tolerance must be positive, got {}", opts.tol)));
    }
    if !(w0.is_finite() && gamma.is_finite()) {
        return Err(Error::Precondition(format!("non-finite start (w0 = {w0}, gamma = {gamma})")));
    }
    let sigma2 = spec.sigma * spec.sigma;
    let rhs = |x: f64, y: &[f64; 1]| [spec.slope(x, y[0], gamma)];
    let mut rhs_mut = rhs;
    let m = spec.lipschitz();
    let max_step = (sigma2 / (4.0 * m + 1e-12)).min(1.0);
    let kinks = spec.menu.switch_levels();
    let scale = 1.0
        + w0.abs()
        + gamma.abs()
        + spec.up.fixed
        + spec.up.per_unit
        + spec.down.fixed
        + spec.down.per_unit;
    let blowup = BLOWUP_FACTOR * scale;
    let stop_level = match stop {
        StoppingRule::ReachX(_) => None,
        StoppingRule::WBelow(l) | StoppingRule::AfterPeakWBelow(l) => Some(l),
    };

    let k0 = rhs(0.0, &[w0]);
    let mut nodes = vec![Node {
        x: 0.0,
        w: w0,
        w_prime: k0[0],
    }];
    let mut segments: Vec<DenseSegment<1>> = Vec::new();
    let mut peak: Option<f64> = (k0[0] <= 0.0).then_some(0.0);
    let mut w_max = w0;

    // Automatic cap: once h(x) exceeds |gamma| + max |pi| + 10 the slope is
    // below -20 / sigma^2 wherever w lies between the stop level and the peak.
    let mut pi_max = spec.pi(w0).abs();
    for l in [Some(-spec.up.per_unit), Some(spec.down.per_unit), stop_level]
        .into_iter()
        .flatten()
    {
        pi_max = pi_max.max(spec.pi(l).abs());
    }
    let mut x_threshold: Option<f64> = None;

    let immediate = match stop {
        StoppingRule::ReachX(t) => t <= 0.0,
        StoppingRule::WBelow(l) => w0 < l,
        StoppingRule::AfterPeakWBelow(l) => peak.is_some() && w0 < l,
    };

    let mut reason = StopReason::Rule;
    let mut x = 0.0;
    let mut y = [w0];
    let mut k1 = k0;
    let mut h = max_step.min(1e-2);
    let mut rejects = 0usize;
    let mut steps = 0usize;

    if !immediate {
        loop {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::CapExceeded { x_cap: x, w: y[0] });
            }
            if let Some(cap) = opts.x_cap {
                if x >= cap {
                    if peak.is_none() {
                        reason = StopReason::Cap;
                        break;
                    }
                    return Err(Error::CapExceeded { x_cap: cap, w: y[0] });
                }
            }
            if let (Some(xt), Some(l)) = (x_threshold, stop_level) {
                let auto_cap = xt + sigma2 * (w_max - l).max(0.0) / 20.0 * 1.5 + 1.0;
                if x >= auto_cap && !matches!(stop, StoppingRule::ReachX(_)) {
                    if peak.is_none() {
                        reason = StopReason::Cap;
                        break;
                    }
                    return Err(Error::CapExceeded { x_cap: auto_cap, w: y[0] });
                }
            }

            let floor = 1e-12 * (1.0 + x.abs());
            let mut hh = h.min(max_step);
            let mut last = false;
            if let StoppingRule::ReachX(t) = stop {
                if x + hh >= t - floor {
                    hh = t - x;
                    last = true;
                }
            }
            if rejects >= 2 && k1[0] != 0.0 {
                // land on the estimated switch of the minimizing drift
                for &s in &kinks {
                    let d = (s - y[0]) / k1[0];
                    if d > floor && d < hh {
                        hh = d;
                        last = false;
                    }
                }
            }

            let trial = rk::step(&mut rhs_mut, x, &y, &k1, hh, opts.tol, opts.tol);
            if !(trial.err <= 1.0) {
                rejects += 1;
                h = hh * rk::next_step_factor(trial.err, false);
                if h < floor {
                    return Err(Error::Stiffness { x, w: y[0], step: h });
                }
                continue;
            }
            rejects = 0;
            let seg = trial.dense;
            let x1 = if last {
                match stop {
                    StoppingRule::ReachX(t) => t,
                    _ => x + hh,
                }
            } else {
                x + hh
            };
            let y1 = trial.y;

            let mut piece_start = x;
            if peak.is_none() && trial.f[0] <= 0.0 {
                let xp = if trial.f[0] == 0.0 {
                    x1
                } else {
                    brent(|s| rhs(s, &seg.eval(s))[0], x, x1, 1e-14 * (1.0 + x1.abs()))
                        .unwrap_or(x1)
                };
                peak = Some(xp);
                piece_start = xp;
                w_max = w_max.max(seg.eval(xp)[0]);
                pi_max = pi_max.max(spec.pi(w_max).abs());
            }
            if peak.is_none() {
                w_max = w_max.max(y1[0]);
                pi_max = pi_max.max(spec.pi(y1[0]).abs());
            }

            // stopping rule inside this step
            let mut x_stop: Option<f64> = None;
            if let (Some(l), Some(_)) = (stop_level, peak) {
                let wa = seg.eval(piece_start)[0];
                let after_peak = matches!(stop, StoppingRule::AfterPeakWBelow(_));
                if wa < l && after_peak {
                    x_stop = Some(piece_start);
                } else if wa >= l && y1[0] < l {
                    x_stop = brent(
                        |s| seg.eval(s)[0] - l,
                        piece_start,
                        x1,
                        1e-14 * (1.0 + x1.abs()),
                    )
                    .or(Some(x1));
                }
            }

            segments.push(seg);
            steps += 0;
            if let Some(xs) = x_stop {
                let ws = seg.eval(xs)[0];
                if xs > x {
                    nodes.push(Node {
                        x: xs,
                        w: ws,
                        w_prime: rhs(xs, &[ws])[0],
                    });
                } else {
                    // the stop point coincides with the step start
                    segments.pop();
                }
                break;
            }
            nodes.push(Node {
                x: x1,
                w: y1[0],
                w_prime: trial.f[0],
            });
            x = x1;
            y = y1;
            k1 = trial.f;
            h = hh * rk::next_step_factor(trial.err, true);

            if last {
                break;
            }
            if peak.is_none() && y[0] > blowup {
                reason = StopReason::BlowUp;
                break;
            }
            if x_threshold.is_none() && spec.h(x) >= gamma.abs() + pi_max + 10.0 {
                x_threshold = Some(x);
            }
        }
    }

    let (shape, x_star, provisional) = if k0[0] <= 0.0 {
        (Shape::Decreasing, 0.0, false)
    } else if let Some(xp) = peak {
        (Shape::Unimodal, xp, false)
    } else {
        (Shape::Increasing, f64::INFINITY, true)
    };

    let mut curve = SolutionCurve {
        w0,
        gamma,
        nodes,
        segments,
        shape,
        x_star,
        provisional,
        events: Vec::new(),
        stop_reason: reason,
    };
    let mut events: Vec<Event> = Vec::new();
    for level in [-spec.up.per_unit, spec.down.per_unit] {
        events.extend(curve.find_crossings(level).into_iter().map(|(x, direction)| Event {
            kind: EventKind::Level(level),
            x,
            direction,
        }));
    }
    if shape == Shape::Unimodal {
        events.push(Event {
            kind: EventKind::Turn,
            x: x_star,
            direction: Direction::Down,
        });
    }
    events.sort_by(|a, b| a.x.total_cmp(&b.x));
    curve.events = events;
    classify(&curve)?;
    Ok(curve)
}
