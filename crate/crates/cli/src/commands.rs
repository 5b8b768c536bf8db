use std::fs;
use std::path::{Path, PathBuf};

use driftband::config::{self, LoadedConfig};
use driftband::freeboundary::{reconstruct, Residuals};
use driftband::sim::{simulate_traced, sweep_seed, TraceOptions};
use driftband::verify::eval_tol;
use driftband::{
    check_lower_bound, evaluate_band_policy, solve as solve_instance, BandPolicy, CertificationReport,
    DriftProfile, EvalResult, FreeBoundarySolution, ProblemSpec, SimConfig, SolverOptions,
};
use serde::Serialize;

use crate::docs::{write_json, Document, SolveSummary, Tool};
use crate::failure::{Failure, EXIT_CERTIFICATION, EXIT_OTHER};
use crate::policy_arg::MuArg;
use crate::Common;

const SUMMARY_FILE: &str = "solution.json";
const CURVE_FILE: &str = "curve.csv";

struct Instance {
    path: PathBuf,
    loaded: LoadedConfig,
    spec: ProblemSpec,
}

impl Instance {
    fn load(c: &Common) -> Result<Self, Failure> {
        let loaded = config::load(&c.config).map_err(|e| match e {
            driftband::Error::Io(io) => Failure::config(format!("cannot read {}: {io}", c.config.display())),
            other => Failure::from(other).context(&c.config.display().to_string()),
        })?;
        let spec = loaded
            .config
            .to_spec()
            .map_err(|e| Failure::from(e).context(&c.config.display().to_string()))?;
        Ok(Self {
            path: c.config.clone(),
            loaded,
            spec,
        })
    }

    fn hash(&self) -> &str {
        &self.loaded.hash
    }

    fn document<'a, T: Serialize>(&'a self, command: &'a str, body: T) -> Document<'a, T> {
        Document {
            tool: Tool::current(),
            command,
            config_path: self.path.display().to_string(),
            config_hash: self.hash(),
            body,
        }
    }

    fn solver_options(&self, c: &Common) -> Result<SolverOptions, Failure> {
        let mut opts = self.loaded.config.solver_options()?;
        if let Some(t) = c.tol {
            if !(t.is_finite() && t > 0.0) {
                return Err(Failure::config(format!("--tol must be positive, got {t}")));
            }
            opts.tol.root = t;
            opts.tol.ode = t / 100.0;
        }
        Ok(opts)
    }

    fn sim_config(&self, c: &Common) -> SimConfig {
        let mut cfg = self.loaded.config.sim_config();
        cfg.seed = c.seed.unwrap_or(cfg.seed);
        cfg.replications = c.replications.unwrap_or(cfg.replications);
        cfg.dt = c.dt.unwrap_or(cfg.dt);
        cfg.horizon = c.horizon.unwrap_or(cfg.horizon);
        cfg.strict = c.strict;
        cfg
    }

    /// The solution named by `--from-solution`, rebuilt from its `(w0*, gamma*)`,
    /// or a fresh solve.
    fn solution(&self, c: &Common) -> Result<(FreeBoundarySolution, Option<SolveSummary>), Failure> {
        match &c.from_solution {
            Some(path) => {
                let summary = self.read_summary(c, path)?;
                let sol = reconstruct(&self.spec, summary.w0_star, summary.gamma_star, &summary.tolerances)?;
                Ok((sol, Some(summary)))
            }
            None => Ok((solve_instance(&self.spec, &self.solver_options(c)?)?, None)),
        }
    }

    fn read_summary(&self, c: &Common, path: &Path) -> Result<SolveSummary, Failure> {
        let summary = SolveSummary::read(path)?;
        if summary.config_hash != self.hash() {
            let msg = format!(
                "{} was produced from a config with hash {}, not {} ({})",
                path.display(),
                summary.config_hash,
                self.hash(),
                self.path.display()
            );
            if c.strict {
                return Err(Failure::config(msg));
            }
            eprintln!("warning: {msg}");
        }
        Ok(summary)
    }

    /// `--policy`, or the optimal policy of the solution when `fallback` is set.
    fn policy(&self, c: &Common, fallback: bool) -> Result<(BandPolicy, Option<f64>), Failure> {
        let needs_solution = match c.policy {
            Some(p) => p.mu == MuArg::FromSolution,
            None => true,
        };
        if c.policy.is_none() && c.from_solution.is_none() && !fallback {
            return Err(Failure::config("a policy is required: pass --policy or --from-solution"));
        }
        let sol = if needs_solution {
            Some(self.solution(c)?.0)
        } else {
            None
        };
        let policy = match (c.policy, &sol) {
            (Some(p), _) => {
                let profile = match p.mu {
                    MuArg::Const(v) => DriftProfile::Constant(v),
                    MuArg::FromSolution => {
                        let s = sol.as_ref().expect("solved above");
                        DriftProfile::from_curve(&s.curve, &self.spec.menu)
                    }
                };
                BandPolicy::new(p.q, p.Q, p.S, profile)?
            }
            (None, Some(s)) => BandPolicy::optimal(&self.spec, s)?,
            (None, None) => unreachable!("a solution is computed whenever no policy is given"),
        };
        policy.validate(&self.spec.menu)?;
        Ok((policy, sol.map(|s| s.gamma_star)))
    }
}

fn out_dir(c: &Common) -> Result<&Path, Failure> {
    fs::create_dir_all(&c.out_dir)
        .map_err(|e| Failure::new(EXIT_OTHER, format!("cannot create {}: {e}", c.out_dir.display())))?;
    Ok(&c.out_dir)
}

#[derive(Serialize)]
struct SolveFailureDoc<'a> {
    message: &'a str,
    /// `(w0, d(w0))`; `null` where the inner solve failed.
    trace: &'a [(f64, Option<f64>)],
}

pub fn solve(c: &Common) -> Result<(), Failure> {
    let inst = Instance::load(c)?;
    let opts = inst.solver_options(c)?;
    let dir = out_dir(c)?;
    let sol = match solve_instance(&inst.spec, &opts) {
        Ok(s) => s,
        Err(e) => {
            let f = Failure::from(e);
            let doc = SolveFailureDoc {
                message: &f.message,
                trace: &f.trace,
            };
            write_json(&dir.join("solve_failure.json"), &inst.document("solve", doc))?;
            return Err(f);
        }
    };
    let curve = fs::File::create(dir.join(CURVE_FILE))?;
    sol.write_curve_csv(&inst.spec, std::io::BufWriter::new(curve))?;
    let summary = SolveSummary::new(&inst.spec, &sol, &inst.path, inst.hash(), CURVE_FILE);
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    println!(
        "gamma* = {:.10}  w0* = {:.10}  q* = {:.6}  Q* = {:.6}  S* = {:.6}  x* = {:.6}  max|residual| = {:.2e}",
        sol.gamma_star,
        sol.w0_star,
        sol.q_star,
        sol.Q_star,
        sol.S_star,
        sol.x_star,
        sol.residuals.max_abs()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalBody<'a> {
    #[serde(flatten)]
    result: &'a EvalResult,
    /// `gamma*` of the solution the policy came from, if any.
    reference_gamma: Option<f64>,
}

pub fn eval(c: &Common) -> Result<(), Failure> {
    let inst = Instance::load(c)?;
    let (policy, reference_gamma) = inst.policy(c, false)?;
    let tol = eval_tol(&inst.solver_options(c)?.tol);
    let result = evaluate_band_policy(&inst.spec, &policy, tol)?;
    let dir = out_dir(c)?;
    let body = EvalBody {
        result: &result,
        reference_gamma,
    };
    write_json(&dir.join("eval.json"), &inst.document("eval", body))?;
    println!(
        "gamma = {:.10}  w0 = {:.10}  (q, Q, S) = ({}, {}, {})",
        result.gamma, result.w0, policy.q, policy.Q, policy.S
    );
    Ok(())
}

pub fn simulate(c: &Common) -> Result<(), Failure> {
    let inst = Instance::load(c)?;
    let (policy, _) = inst.policy(c, true)?;
    let cfg = inst.sim_config(c);
    let trace = c.trace.then(TraceOptions::default);
    let (report, rows) = simulate_traced(&inst.spec, &policy, &cfg, trace)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let dir = out_dir(c)?;
    if c.trace {
        let mut wtr = csv::Writer::from_path(dir.join("trace.csv"))?;
        for r in &rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
    }
    write_json(&dir.join("simulate.json"), &inst.document("simulate", &report))?;
    println!(
        "gamma_hat = {:.6} +/- {:.2e} ({} replications, dt = {})",
        report.gamma_hat, report.std_err, cfg.replications, cfg.dt
    );
    Ok(())
}

#[derive(Serialize)]
struct VerifyBody<'a> {
    /// `solution file` or `fresh solve`.
    source: &'a str,
    w0_star: f64,
    gamma_star: f64,
    /// Boundary residuals recomputed from `(w0*, gamma*)`.
    residuals: Residuals,
    residual_tol: f64,
    residuals_ok: bool,
    /// Largest gap between stored and recomputed `(q*, Q*, S*, x*)`.
    level_mismatch: f64,
    levels_ok: bool,
    certification: &'a CertificationReport,
    passed: bool,
}

pub fn verify(c: &Common) -> Result<(), Failure> {
    let inst = Instance::load(c)?;
    let v = &inst.loaded.config.verify;
    let factor = v.x_max_factor.unwrap_or(3.0);
    let n_grid = v.n_grid.unwrap_or(1000);
    let tol = v.tol.unwrap_or(1e-6);
    let (sol, summary) = match &c.from_solution {
        Some(path) => {
            let summary = inst.read_summary(c, path)?;
            let sol = reconstruct(&inst.spec, summary.w0_star, summary.gamma_star, &summary.tolerances)
                .map_err(|e| {
                    Failure::new(
                        EXIT_CERTIFICATION,
                        format!("{} does not describe a valid band: {e}", path.display()),
                    )
                })?;
            (sol, Some(summary))
        }
        None => inst.solution(c)?,
    };
    let report = check_lower_bound(&inst.spec, &sol, factor * sol.S_star, n_grid, tol)?;
    let residual_tol = sol.tolerances.residual;
    let residuals_ok = sol.residuals.max_abs() <= residual_tol;
    let level_mismatch = summary.as_ref().map_or(0.0, |s| {
        [
            s.q_star - sol.q_star,
            s.Q_star - sol.Q_star,
            s.S_star - sol.S_star,
            s.x_star - sol.x_star,
        ]
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()))
    });
    let levels_ok = level_mismatch <= residual_tol;
    let passed = report.passed && residuals_ok && levels_ok;
    let body = VerifyBody {
        source: if summary.is_some() { "solution file" } else { "fresh solve" },
        w0_star: sol.w0_star,
        gamma_star: sol.gamma_star,
        residuals: sol.residuals,
        residual_tol,
        residuals_ok,
        level_mismatch,
        levels_ok,
        certification: &report,
        passed,
    };
    write_json(&out_dir(c)?.join("verify.json"), &inst.document("verify", body))?;
    if passed {
        println!("certified: {}", report.summary());
        return Ok(());
    }
    let mut reasons = Vec::new();
    if !report.passed {
        reasons.push(report.summary());
    }
    if !residuals_ok {
        reasons.push(format!(
            "boundary residual {:.3e} exceeds {residual_tol:e}",
            sol.residuals.max_abs()
        ));
    }
    if !levels_ok {
        reasons.push(format!("stored band levels are off by {level_mismatch:.3e}"));
    }
    Err(Failure::new(
        EXIT_CERTIFICATION,
        format!("certification failed: {}", reasons.join("; ")),
    ))
}

#[allow(non_snake_case)]
#[derive(Serialize)]
struct SweepRow {
    dq: f64,
    dQ: f64,
    dS: f64,
    q: f64,
    Q: f64,
    S: f64,
    seed: u64,
    gamma_hat: f64,
    std_err: f64,
    /// Exact long-run average cost of the same policy.
    gamma_exact: f64,
    /// `(gamma_hat - gamma_exact) / std_err`
    z: f64,
}

#[derive(Serialize)]
struct SweepBody {
    delta: f64,
    config: SimConfig,
    rows: Vec<SweepRow>,
    /// Perturbations dropped because they break `0 < q <= Q < S`.
    skipped: Vec<[f64; 3]>,
    /// Row with the smallest `gamma_hat`.
    best: usize,
}

pub fn sweep(c: &Common) -> Result<(), Failure> {
    let inst = Instance::load(c)?;
    if !(c.delta.is_finite() && c.delta > 0.0) {
        return Err(Failure::config(format!("--delta must be positive, got {}", c.delta)));
    }
    let (base, _) = inst.policy(c, true)?;
    let cfg = inst.sim_config(c);
    let tol = eval_tol(&inst.solver_options(c)?.tol);
    let d = c.delta;
    let mut family = Vec::new();
    let mut offsets = Vec::new();
    let mut skipped = Vec::new();
    for dq in [-d, 0.0, d] {
        for d_big_q in [-d, 0.0, d] {
            for ds in [-d, 0.0, d] {
                match base.with_levels(base.q + dq, base.Q + d_big_q, base.S + ds) {
                    Ok(p) => {
                        family.push(p);
                        offsets.push([dq, d_big_q, ds]);
                    }
                    Err(_) => skipped.push([dq, d_big_q, ds]),
                }
            }
        }
    }
    let reports = driftband::sim::sweep(&inst.spec, &family, &cfg)?;
    let mut rows = Vec::with_capacity(family.len());
    for (i, ((p, off), r)) in family.iter().zip(&offsets).zip(&reports).enumerate() {
        let exact = evaluate_band_policy(&inst.spec, p, tol)?.gamma;
        rows.push(SweepRow {
            dq: off[0],
            dQ: off[1],
            dS: off[2],
            q: p.q,
            Q: p.Q,
            S: p.S,
            seed: sweep_seed(cfg.seed, i),
            gamma_hat: r.gamma_hat,
            std_err: r.std_err,
            gamma_exact: exact,
            z: (r.gamma_hat - exact) / r.std_err,
        });
    }
    let best = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.gamma_hat.total_cmp(&b.1.gamma_hat))
        .map_or(0, |(i, _)| i);
    for row in &rows {
        println!(
            "{:+.3} {:+.3} {:+.3}  gamma_hat = {:.6} +/- {:.2e}  exact = {:.6}",
            row.dq, row.dQ, row.dS, row.gamma_hat, row.std_err, row.gamma_exact
        );
    }
    let body = SweepBody {
        delta: d,
        config: cfg,
        rows,
        skipped,
        best,
    };
    write_json(&out_dir(c)?.join("sweep.json"), &inst.document("sweep", body))?;
    Ok(())
}
