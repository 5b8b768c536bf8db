//! Euler–Maruyama simulation of the controlled inventory under a band policy.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HoldingCost, ProblemSpec};
use crate::normal::{open_unit, NormalBatch};
use crate::policy::{BandLevels, BandPolicy, DriftProfile};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub replications: usize,
    pub seed: u64,
    pub x0: f64,
    /// Treat a too-coarse time step as an error instead of a warning.
    pub strict: bool,
    pub boundary: BoundaryRule,
}

/// How a step decides that the path left the band.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRule {
    /// Compare only the end state of each step with `0` and `S`.
    Endpoint,
    /// Endpoint comparison plus a Brownian-bridge draw for an excursion within the step.
    #[default]
    Bridge,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 1e5,
            burn_in: 1e3,
            replications: 32,
            seed: 0,
            x0: 0.0,
            strict: false,
            boundary: BoundaryRule::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::InvalidConfig {
                field: format!("sim.{field}"),
                message,
            })
        };
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt", format!("must be positive, got {}", self.dt));
        }
        if !(self.burn_in.is_finite() && self.burn_in >= 0.0) {
            return bad("burn_in", format!("must be non-negative, got {}", self.burn_in));
        }
        if !(self.horizon.is_finite() && self.horizon > self.burn_in) {
            return bad("horizon", format!("must exceed burn_in = {}, got {}", self.burn_in, self.horizon));
        }
        if self.replications == 0 {
            return bad("replications", "must be at least 1".into());
        }
        if !(self.x0.is_finite() && self.x0 >= 0.0) {
            return bad("x0", format!("must be non-negative, got {}", self.x0));
        }
        let steps = (self.horizon / self.dt).round();
        if (self.burn_in / self.dt).round() >= steps {
            return bad("burn_in", "leaves no steps to average over".into());
        }
        Ok(())
    }
}

/// Average cost rates by source.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub holding: f64,
    pub drift: f64,
    pub up_impulse: f64,
    pub down_impulse: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.holding + self.drift + self.up_impulse + self.down_impulse
    }

    fn add(&mut self, o: &CostBreakdown) {
        self.holding += o.holding;
        self.drift += o.drift;
        self.up_impulse += o.up_impulse;
        self.down_impulse += o.down_impulse;
    }

    fn scale(&mut self, f: f64) {
        self.holding *= f;
        self.drift *= f;
        self.up_impulse *= f;
        self.down_impulse *= f;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimReport {
    pub gamma_hat: f64,
    /// Sample standard deviation across replications over `sqrt(replications)`;
    /// `NaN` for a single replication.
    pub std_err: f64,
    pub breakdown: CostBreakdown,
    /// Up-impulses per unit time.
    pub up_rate: f64,
    /// Down-impulses per unit time.
    pub down_rate: f64,
    pub path_invariant_violations: u64,
    pub replication_gammas: Vec<f64>,
    pub steps_per_replication: u64,
    pub warnings: Vec<String>,
    pub policy: BandLevels,
    pub config: SimConfig,
}

/// One sampled state of a traced path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub mu: f64,
    pub cumulative_cost: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceOptions {
    /// Keep every `stride`-th step.
    pub stride: u64,
    pub max_rows: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            stride: 100,
            max_rows: 100_000,
        }
    }
}

/// Per-step drift and cost lookup.
trait Drift: Sync {
    /// `(mu, cost)` at `x`; `hint` carries lookup state between consecutive calls.
    fn at(&self, x: f64, hint: &mut usize) -> (f64, f64);
}

/// Piecewise-constant drift with its costs precomputed.
struct StepDrift {
    segments: Vec<Segment>,
}

/// `[lo, hi)` with drift `mu` and its cost; the outer bounds are infinite.
#[derive(Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    mu: f64,
    cost: f64,
}

impl StepDrift {
    fn new(breaks: &[f64], mus: &[f64], costs: &[f64]) -> Self {
        let bound = |i: usize| breaks.get(i).copied().unwrap_or(f64::INFINITY);
        let segments = (0..mus.len())
            .map(|i| Segment {
                lo: if i == 0 { f64::NEG_INFINITY } else { breaks[i - 1] },
                hi: bound(i),
                mu: mus[i],
                cost: costs[i],
            })
            .collect();
        Self { segments }
    }
}

impl Drift for StepDrift {
    // The path moves little per step, so walking from the previous segment is
    // almost always zero iterations and the branches predict well.
    #[inline(always)]
    fn at(&self, x: f64, hint: &mut usize) -> (f64, f64) {
        let mut s = &self.segments[*hint];
        while x >= s.hi {
            *hint += 1;
            s = &self.segments[*hint];
        }
        while x < s.lo {
            *hint -= 1;
            s = &self.segments[*hint];
        }
        (s.mu, s.cost)
    }
}

struct GeneralDrift<'a> {
    profile: &'a DriftProfile,
    spec: &'a ProblemSpec,
}

impl Drift for GeneralDrift<'_> {
    #[inline]
    fn at(&self, x: f64, _hint: &mut usize) -> (f64, f64) {
        let mu = self.profile.at(x);
        (mu, self.spec.menu.cost(mu).unwrap_or(f64::NAN))
    }
}

trait Holding: Sync {
    fn at(&self, x: f64) -> f64;
}

struct LinearHolding(f64);

impl Holding for LinearHolding {
    #[inline(always)]
    fn at(&self, x: f64) -> f64 {
        self.0 * x
    }
}

impl Holding for HoldingCost {
    #[inline]
    fn at(&self, x: f64) -> f64 {
        self.eval(x)
    }
}

fn cost_of(spec: &ProblemSpec, mu: f64) -> Result<f64> {
    spec.menu.cost(mu).ok_or_else(|| Error::InvalidConfig {
        field: "policy.mu".into(),
        message: format!("drift {mu} is not in the menu"),
    })
}

fn step_drift(spec: &ProblemSpec, profile: &DriftProfile) -> Result<Option<StepDrift>> {
    Ok(match profile {
        DriftProfile::Constant(mu) => Some(StepDrift::new(&[], &[*mu], &[cost_of(spec, *mu)?])),
        DriftProfile::Steps { breaks, values } => {
            let costs = values.iter().map(|&m| cost_of(spec, m)).collect::<Result<Vec<_>>>()?;
            Some(StepDrift::new(breaks, values, &costs))
        }
        _ => None,
    })
}

struct RepOutcome {
    costs: CostBreakdown,
    n_up: u64,
    n_down: u64,
    violations: u64,
}

struct PathParams {
    sigma_sqrt_dt: f64,
    dt: f64,
    /// `2 / (sigma^2 dt)`, the bridge exponent scale.
    bridge_scale: f64,
    bridge: bool,
    steps: u64,
    burn: u64,
    q: f64,
    big_q: f64,
    s: f64,
    up_cost: f64,
    down_cost: f64,
    x0: f64,
}

const NORMAL_BATCH: usize = 256;

/// Below `exp(-BRIDGE_CUTOFF)` no uniform from `open_unit` can register a crossing.
const BRIDGE_CUTOFF: f64 = 38.0;

#[derive(Clone, Copy, Default)]
struct Tally {
    hold: f64,
    dcost: f64,
    n_up: u64,
    n_down: u64,
    violations: u64,
}

/// Trace state of replication 0.
struct Tracer<'a> {
    opts: &'a TraceOptions,
    rows: &'a mut Vec<TraceRow>,
    total: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Hit {
    Inside,
    Up,
    Down,
}

/// One Euler step from `x` with increment `z`; returns `(x_next, hit)`.
#[inline(always)]
fn step(p: &PathParams, rng: &mut ChaCha8Rng, x: f64, mu: f64, z: f64) -> (f64, Hit) {
    let cand = (x + p.sigma_sqrt_dt * z) + mu * p.dt;
    if cand <= 0.0 {
        return (p.q, Hit::Up);
    }
    if cand >= p.s {
        return (p.big_q, Hit::Down);
    }
    if p.bridge {
        let lo = x * cand * p.bridge_scale;
        let hi = (p.s - x) * (p.s - cand) * p.bridge_scale;
        let a = if lo <= hi { lo } else { hi };
        if a < BRIDGE_CUTOFF && open_unit(rng.next_u64()) < (-a).exp() {
            return if lo <= hi {
                (p.q, Hit::Up)
            } else {
                (p.big_q, Hit::Down)
            };
        }
    }
    (cand, Hit::Inside)
}

/// Paths advanced together in one loop so their dependency chains overlap.
/// Each keeps its own stream, so results do not depend on the grouping.
const LANES: usize = 4;

/// Run the replications `reps` side by side; `tracer` follows the first one.
fn run_group<D: Drift, H: Holding, const L: usize, const TRACE: bool>(
    drift: &D,
    holding: &H,
    p: &PathParams,
    seed: u64,
    reps: [u64; L],
    mut tracer: Option<Tracer>,
) -> [RepOutcome; L] {
    let mut rngs: [ChaCha8Rng; L] = std::array::from_fn(|l| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(reps[l]);
        rng
    });
    // [burn-in, kept] per lane
    let mut tallies = [[Tally::default(); L]; 2];
    let mut start = if p.x0 > p.s {
        // one-time adjustment, not charged
        p.big_q
    } else {
        p.x0
    };
    if start <= 0.0 {
        start = p.q;
        for t in &mut tallies[usize::from(p.burn == 0)] {
            t.n_up += 1;
        }
        if let Some(tr) = tracer.as_mut() {
            tr.total += p.up_cost;
        }
    }
    let mut xs = [start; L];
    let mut hints = [0usize; L];
    let mut bits = [0u64; NORMAL_BATCH];
    let mut normals = NormalBatch::new();
    let mut zs = [[0.0; NORMAL_BATCH]; L];

    let mut done = 0u64;
    while done < p.steps {
        let phase = usize::from(done >= p.burn);
        let limit = if phase == 0 { p.burn } else { p.steps };
        let n = (limit - done).min(NORMAL_BATCH as u64) as usize;
        for (rng, z) in rngs.iter_mut().zip(zs.iter_mut()) {
            rng.fill(&mut bits[..n]);
            normals.fill(&bits[..n], &mut z[..n]);
        }
        // One lane at a time keeps its state in registers for the whole batch.
        for l in 0..L {
            let rng = &mut rngs[l];
            let t = &mut tallies[phase][l];
            let (mut x, mut hint) = (xs[l], hints[l]);
            let (mut hold, mut dcost) = (t.hold, t.dcost);
            let (mut n_up, mut n_down, mut violations) = (t.n_up, t.n_down, t.violations);
            for (k, &z) in zs[l][..n].iter().enumerate() {
                let (mu, c) = drift.at(x, &mut hint);
                let hx = holding.at(x);
                hold += hx;
                dcost += c;
                let (next, hit) = step(p, rng, x, mu, z);
                match hit {
                    Hit::Inside => {}
                    Hit::Up => n_up += 1,
                    Hit::Down => n_down += 1,
                }
                violations += u64::from(!(0.0..=p.s).contains(&next));
                if TRACE && l == 0 {
                    if let Some(tr) = tracer.as_mut() {
                        let i = done + k as u64;
                        tr.total += (hx + c) * p.dt;
                        if i.is_multiple_of(tr.opts.stride) && tr.rows.len() < tr.opts.max_rows {
                            tr.rows.push(TraceRow {
                                t: i as f64 * p.dt,
                                x,
                                mu,
                                cumulative_cost: tr.total,
                            });
                        }
                        tr.total += match hit {
                            Hit::Inside => 0.0,
                            Hit::Up => p.up_cost,
                            Hit::Down => p.down_cost,
                        };
                    }
                }
                x = next;
            }
            (xs[l], hints[l]) = (x, hint);
            *t = Tally {
                hold,
                dcost,
                n_up,
                n_down,
                violations,
            };
        }
        done += n as u64;
    }
    let t_eff = (p.steps - p.burn) as f64 * p.dt;
    std::array::from_fn(|l| {
        let kept = &tallies[1][l];
        RepOutcome {
            costs: CostBreakdown {
                holding: kept.hold * p.dt / t_eff,
                drift: kept.dcost * p.dt / t_eff,
                up_impulse: kept.n_up as f64 * p.up_cost / t_eff,
                down_impulse: kept.n_down as f64 * p.down_cost / t_eff,
            },
            n_up: kept.n_up,
            n_down: kept.n_down,
            violations: kept.violations + tallies[0][l].violations,
        }
    })
}

/// Replications `reps` (at most [`LANES`]), grouped when possible.
fn run_reps<D: Drift, H: Holding>(
    drift: &D,
    holding: &H,
    p: &PathParams,
    seed: u64,
    reps: &[u64],
) -> Vec<RepOutcome> {
    if reps.len() == LANES {
        let group: [u64; LANES] = reps.try_into().unwrap();
        return run_group::<D, H, LANES, false>(drift, holding, p, seed, group, None).into();
    }
    reps.iter()
        .flat_map(|&r| run_group::<D, H, 1, false>(drift, holding, p, seed, [r], None))
        .collect()
}

fn run_traced<D: Drift, H: Holding>(
    drift: &D,
    holding: &H,
    p: &PathParams,
    seed: u64,
    rep: u64,
    opts: &TraceOptions,
    rows: &mut Vec<TraceRow>,
) -> RepOutcome {
    let tracer = Tracer {
        opts,
        rows,
        total: 0.0,
    };
    let [out] = run_group::<D, H, 1, true>(drift, holding, p, seed, [rep], Some(tracer));
    out
}

/// Step-size safeguard: `dt |mu|_max + 4 sigma sqrt(dt)` against the narrower gap of the band.
pub fn discretization_check(spec: &ProblemSpec, policy: &BandPolicy, dt: f64) -> Option<String> {
    let reach = dt * spec.lipschitz() + 4.0 * spec.sigma * dt.sqrt();
    let gap = policy.q.min(policy.S - policy.Q);
    (reach > gap).then(|| {
        format!("one step can move {reach:.4} but the band gap min(q, S - Q) is only {gap:.4}; reduce dt")
    })
}

/// Monte Carlo estimate of the long-run average cost of `policy`.
pub fn simulate(spec: &ProblemSpec, policy: &BandPolicy, config: &SimConfig) -> Result<SimReport> {
    simulate_traced(spec, policy, config, None).map(|(r, _)| r)
}

/// [`simulate`], additionally recording replication 0 when `trace` is set.
pub fn simulate_traced(
    spec: &ProblemSpec,
    policy: &BandPolicy,
    config: &SimConfig,
    trace: Option<TraceOptions>,
) -> Result<(SimReport, Vec<TraceRow>)> {
    config.validate()?;
    policy.validate(&spec.menu)?;
    let mut warnings = Vec::new();
    if let Some(w) = discretization_check(spec, policy, config.dt) {
        if config.strict {
            return Err(Error::Discretization(w));
        }
        warnings.push(w);
    }
    let steps = (config.horizon / config.dt).round() as u64;
    let burn = (config.burn_in / config.dt).round() as u64;
    let params = PathParams {
        sigma_sqrt_dt: spec.sigma * config.dt.sqrt(),
        dt: config.dt,
        bridge_scale: 2.0 / (spec.sigma * spec.sigma * config.dt),
        bridge: config.boundary == BoundaryRule::Bridge,
        steps,
        burn,
        q: policy.q,
        big_q: policy.Q,
        s: policy.S,
        up_cost: spec.up.charge(policy.q),
        down_cost: spec.down.charge(policy.S - policy.Q),
        x0: config.x0,
    };
    let compiled = step_drift(spec, &policy.profile)?;
    let general = GeneralDrift {
        profile: &policy.profile,
        spec,
    };
    let linear = match spec.holding {
        HoldingCost::Linear { slope } => Some(LinearHolding(slope)),
        _ => None,
    };
    // monomorphize the kernel for table drifts and linear holding
    macro_rules! kernel {
        (|$d:ident, $h:ident| $body:expr) => {
            match (&compiled, &linear) {
                (Some($d), Some($h)) => $body,
                (Some($d), None) => {
                    let $h = &spec.holding;
                    $body
                }
                (None, Some($h)) => {
                    let $d = &general;
                    $body
                }
                (None, None) => {
                    let $d = &general;
                    let $h = &spec.holding;
                    $body
                }
            }
        };
    }

    let mut rows = Vec::new();
    let first = trace
        .as_ref()
        .map(|opts| kernel!(|d, h| run_traced(d, h, &params, config.seed, 0, opts, &mut rows)));
    let start = u64::from(first.is_some());
    let reps: Vec<u64> = (start..config.replications as u64).collect();
    let mut outcomes: Vec<RepOutcome> = reps
        .par_chunks(LANES)
        .flat_map_iter(|chunk| kernel!(|d, h| run_reps(d, h, &params, config.seed, chunk)))
        .collect();
    if let Some(f) = first {
        outcomes.insert(0, f);
    }

    let n = outcomes.len() as f64;
    let t_eff = (steps - burn) as f64 * config.dt;
    let gammas: Vec<f64> = outcomes.iter().map(|o| o.costs.total()).collect();
    let gamma_hat = gammas.iter().sum::<f64>() / n;
    let std_err = if outcomes.len() > 1 {
        let var = gammas.iter().map(|g| (g - gamma_hat).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        f64::NAN
    };
    let mut breakdown = CostBreakdown::default();
    for o in &outcomes {
        breakdown.add(&o.costs);
    }
    breakdown.scale(1.0 / n);
    let up_rate = outcomes.iter().map(|o| o.n_up as f64).sum::<f64>() / (n * t_eff);
    let down_rate = outcomes.iter().map(|o| o.n_down as f64).sum::<f64>() / (n * t_eff);
    let report = SimReport {
        gamma_hat,
        std_err,
        breakdown,
        up_rate,
        down_rate,
        path_invariant_violations: outcomes.iter().map(|o| o.violations).sum(),
        replication_gammas: gammas,
        steps_per_replication: steps,
        warnings,
        policy: policy.levels(),
        config: *config,
    };
    Ok((report, rows))
}

/// Seed used for the `index`-th policy of a sweep; index 0 keeps the base seed.
pub fn sweep_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Simulate each policy of a family, in order, with its own seed stream.
pub fn sweep(spec: &ProblemSpec, family: &[BandPolicy], config: &SimConfig) -> Result<Vec<SimReport>> {
    family
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let cfg = SimConfig {
                seed: sweep_seed(config.seed, i),
                ..*config
            };
            simulate(spec, p, &cfg)
        })
        .collect()
}
