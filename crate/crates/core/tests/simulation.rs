use driftband::policy::DriftProfile;
use driftband::sim::{simulate, sweep, BoundaryRule, SimConfig, SimReport};
use driftband::{evaluate_band_policy, solve, BandPolicy, ProblemSpec, SolverOptions};

fn config(dt: f64, horizon: f64, replications: usize, seed: u64) -> SimConfig {
    SimConfig {
        dt,
        horizon,
        burn_in: 100.0,
        replications,
        seed,
        x0: 0.0,
        strict: true,
        boundary: BoundaryRule::Bridge,
    }
}

fn check_report(r: &SimReport) {
    assert_eq!(r.path_invariant_violations, 0);
    assert!(r.up_rate > 0.0 && r.down_rate > 0.0);
    assert!((r.breakdown.total() - r.gamma_hat).abs() < 1e-9 * r.gamma_hat);
}

#[test]
fn non_optimal_policies_match_the_exact_evaluator() {
    let spec = ProblemSpec::canonical();
    let policies = [
        BandPolicy::new(0.5, 1.0, 2.5, DriftProfile::Constant(0.0)).unwrap(),
        BandPolicy::new(
            0.9,
            1.6,
            3.6,
            DriftProfile::Steps {
                breaks: vec![0.6, 2.0, 3.0],
                values: vec![1.0, 0.5, -0.5, -1.0],
            },
        )
        .unwrap(),
        BandPolicy::new(0.4, 0.4, 2.0, DriftProfile::Constant(-0.5)).unwrap(),
    ];
    for (i, p) in policies.iter().enumerate() {
        let exact = evaluate_band_policy(&spec, p, 1e-11).unwrap().gamma;
        let r = simulate(&spec, p, &config(1e-3, 5e4, 8, 100 + i as u64)).unwrap();
        check_report(&r);
        let z = (r.gamma_hat - exact) / r.std_err;
        assert!(z.abs() < 3.0, "policy {i}: gamma_hat {} vs exact {exact}, z = {z:.2}", r.gamma_hat);
    }
}

#[test]
fn endpoint_bias_shrinks_with_the_time_step() {
    let spec = ProblemSpec::canonical();
    let sol = solve(&spec, &SolverOptions::default()).unwrap();
    let policy = BandPolicy::optimal(&spec, &sol).unwrap();
    let mut prev: Option<(f64, f64)> = None;
    for (dt, horizon) in [(1e-2, 1e5), (1e-3, 2e4), (1e-4, 2e3)] {
        let cfg = SimConfig {
            boundary: BoundaryRule::Endpoint,
            strict: false,
            ..config(dt, horizon, 8, 5)
        };
        let r = simulate(&spec, &policy, &cfg).unwrap();
        check_report(&r);
        let bias = r.gamma_hat - sol.gamma_star;
        if let Some((b, _)) = prev {
            assert!(bias.abs() < b.abs() + 3.0 * r.std_err, "dt = {dt}: |bias| {bias:.4} vs {b:.4}");
        }
        prev = Some((bias, r.std_err));
    }
}

#[test]
fn bridge_rule_removes_most_of_the_coarse_step_bias() {
    let spec = ProblemSpec::canonical();
    let sol = solve(&spec, &SolverOptions::default()).unwrap();
    let policy = BandPolicy::optimal(&spec, &sol).unwrap();
    let run = |boundary| {
        let cfg = SimConfig {
            boundary,
            strict: false,
            ..config(1e-2, 1e5, 8, 9)
        };
        simulate(&spec, &policy, &cfg).unwrap().gamma_hat - sol.gamma_star
    };
    let endpoint = run(BoundaryRule::Endpoint);
    let bridge = run(BoundaryRule::Bridge);
    assert!(bridge.abs() < 0.25 * endpoint.abs(), "bridge {bridge:.4}, endpoint {endpoint:.4}");
}

#[test]
fn start_above_the_band_is_free() {
    let spec = ProblemSpec::canonical();
    let p = BandPolicy::new(0.5, 1.0, 2.5, DriftProfile::Constant(0.0)).unwrap();
    let at_q = simulate(&spec, &p, &SimConfig { x0: 1.0, ..config(1e-3, 500.0, 3, 1) }).unwrap();
    let above = simulate(&spec, &p, &SimConfig { x0: 7.0, ..config(1e-3, 500.0, 3, 1) }).unwrap();
    assert_eq!(at_q.replication_gammas, above.replication_gammas);
    let from_zero = simulate(&spec, &p, &config(1e-3, 500.0, 3, 1)).unwrap();
    assert_ne!(from_zero.replication_gammas, at_q.replication_gammas);
}

#[test]
fn optimal_policy_is_minimal_over_the_perturbation_sweep() {
    let spec = ProblemSpec::canonical();
    let sol = solve(&spec, &SolverOptions::default()).unwrap();
    let base = BandPolicy::optimal(&spec, &sol).unwrap();
    let d = [-0.05, 0.0, 0.05];
    let mut family = Vec::new();
    for dq in d {
        for d_big_q in d {
            for ds in d {
                family.push(base.with_levels(base.q + dq, base.Q + d_big_q, base.S + ds).unwrap());
            }
        }
    }
    let reports = sweep(&spec, &family, &config(1e-3, 5e3, 4, 21)).unwrap();
    assert_eq!(reports.len(), 27);
    for (p, r) in family.iter().zip(&reports) {
        assert_eq!((r.policy.q, r.policy.Q, r.policy.S), (p.q, p.Q, p.S));
        check_report(r);
    }
    let opt = &reports[13];
    let (i, best) = reports
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.gamma_hat.total_cmp(&b.1.gamma_hat))
        .unwrap();
    let slack = 3.0 * (opt.std_err.powi(2) + best.std_err.powi(2)).sqrt();
    assert!(
        opt.gamma_hat <= best.gamma_hat + slack,
        "optimal {} vs row {i} {} (slack {slack:.4})",
        opt.gamma_hat,
        best.gamma_hat
    );
}
