//! Shared property checks, driven both by the proptest suite and by the acceptance run.
#![allow(dead_code)]

use driftband::freeboundary::{f1, f2, gamma1_star, gamma2_lower, gamma2_star, Tolerances};
use driftband::hamiltonian::{CostFn, DriftMenu};
use driftband::ode::{integrate, Shape, StoppingRule};
use driftband::ProblemSpec;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};

pub type CaseResult = Result<(), TestCaseError>;

pub const CASES: u32 = 128;
pub const ODE_TOL: f64 = 1e-11;

pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    TestRunner::new_with_rng(config, rng)
}

/// Finite menus with 2 to 6 drifts, quadratic and absolute-value interval menus.
pub fn menus() -> impl Strategy<Value = DriftMenu> {
    let finite = (
        -2.0f64..0.0,
        prop::collection::vec((0.05f64..1.0, 0.0f64..2.0), 2..=6),
    )
        .prop_map(|(start, steps)| {
            let mut mu = start;
            let pairs: Vec<(f64, f64)> = steps
                .into_iter()
                .map(|(gap, cost)| {
                    mu += gap;
                    (mu, cost)
                })
                .collect();
            DriftMenu::finite(&pairs).unwrap()
        });
    let quadratic = (-2.0f64..-0.1, 0.1f64..2.0, 0.1f64..3.0, -1.0f64..1.0).prop_map(|(lo, hi, a, b)| {
        DriftMenu::interval(lo, hi, CostFn::Quadratic { a, b, d: 0.0 }).unwrap()
    });
    let absolute = (-2.0f64..-0.1, 0.1f64..2.0, 0.1f64..3.0)
        .prop_map(|(lo, hi, a)| DriftMenu::interval(lo, hi, CostFn::Absolute { a }).unwrap());
    prop_oneof![finite, quadratic, absolute]
}

pub fn hamiltonian_case(menu: &DriftMenu, w1: f64, w2: f64, lam: f64) -> CaseResult {
    let (p1, p2) = (menu.pi(w1), menu.pi(w2));
    let mid = menu.pi(lam * w1 + (1.0 - lam) * w2);
    let scale = 1.0 + p1.abs() + p2.abs();
    prop_assert!(
        mid >= lam * p1 + (1.0 - lam) * p2 - 1e-12 * scale,
        "concavity: pi({}) = {mid} < chord",
        lam * w1 + (1.0 - lam) * w2
    );
    let m = driftband::hamiltonian::lipschitz_constant(menu);
    prop_assert!(
        (p1 - p2).abs() <= m * (w1 - w2).abs() + 1e-12 * scale,
        "lipschitz: |pi({w1}) - pi({w2})| = {} > {m} |dw|",
        (p1 - p2).abs()
    );
    let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
    prop_assert!(
        menu.mu(lo) >= menu.mu(hi),
        "mu({lo}) = {} < mu({hi}) = {}",
        menu.mu(lo),
        menu.mu(hi)
    );
    Ok(())
}

/// Points of `(0, x_end]` where both curves are still moderate in size.
fn comparison_grid(a: &driftband::SolutionCurve, b: &driftband::SolutionCurve) -> Vec<f64> {
    let end = a.x_end().min(b.x_end());
    (1..=60)
        .map(|i| end * i as f64 / 60.0)
        .filter(|&x| x >= 0.05 && a.w(x).abs() < 1e3 && b.w(x).abs() < 1e3)
        .collect()
}

/// `w(x; w0, gamma) < w(x; w0, gamma + delta)` on a grid.
pub fn monotone_in_gamma_case(w0: f64, gamma: f64, delta: f64) -> CaseResult {
    let spec = ProblemSpec::canonical();
    let lo = integrate(&spec, w0, gamma, StoppingRule::ReachX(3.0), ODE_TOL).unwrap();
    let hi = integrate(&spec, w0, gamma + delta, StoppingRule::ReachX(3.0), ODE_TOL).unwrap();
    for x in comparison_grid(&lo, &hi) {
        prop_assert!(lo.w(x) < hi.w(x), "x = {x}: {} >= {}", lo.w(x), hi.w(x));
    }
    Ok(())
}

/// `w(x; w0, gamma) < w(x; w0 + delta, gamma)` on a grid.
pub fn monotone_in_w0_case(w0: f64, gamma: f64, delta: f64) -> CaseResult {
    let spec = ProblemSpec::canonical();
    let lo = integrate(&spec, w0, gamma, StoppingRule::ReachX(3.0), ODE_TOL).unwrap();
    let hi = integrate(&spec, w0 + delta, gamma, StoppingRule::ReachX(3.0), ODE_TOL).unwrap();
    for x in comparison_grid(&lo, &hi) {
        prop_assert!(lo.w(x) < hi.w(x), "x = {x}: {} >= {}", lo.w(x), hi.w(x));
    }
    Ok(())
}

/// The shape label agrees with the sign of `w'(0)` and with the slope pattern.
pub fn shape_case(w0: f64, gamma: f64) -> CaseResult {
    let spec = ProblemSpec::canonical();
    let c = integrate(&spec, w0, gamma, StoppingRule::AfterPeakWBelow(-30.0), ODE_TOL).unwrap();
    let s0 = spec.slope(0.0, w0, gamma);
    match c.shape {
        Shape::Decreasing => prop_assert!(s0 <= 0.0, "decreasing with w'(0) = {s0}"),
        Shape::Unimodal | Shape::Increasing => {
            prop_assert!(s0 > 0.0, "{:?} with w'(0) = {s0}", c.shape)
        }
    }
    let end = c.x_end();
    let xs = c.x_star;
    for i in 1..=200 {
        let x = end * i as f64 / 200.0;
        let w = c.w(x);
        if w.abs() > 1e4 {
            break;
        }
        let s = spec.slope(x, w, gamma);
        let margin = 1e-6 * (1.0 + end);
        match c.shape {
            Shape::Decreasing => prop_assert!(s < 0.0 || x < margin, "slope {s} at {x}"),
            Shape::Increasing => prop_assert!(s > 0.0, "slope {s} at {x}"),
            Shape::Unimodal => {
                if x < xs - margin {
                    prop_assert!(s > 0.0, "slope {s} at {x} before the peak {xs}");
                } else if x > xs + margin {
                    prop_assert!(s < 0.0, "slope {s} at {x} after the peak {xs}");
                }
            }
        }
    }
    Ok(())
}

pub fn f1_monotone_case(w0: f64, offset: f64, delta: f64) -> CaseResult {
    let spec = ProblemSpec::canonical();
    let tol = Tolerances::default();
    let g = spec.pi(w0) + offset;
    let a = f1(&spec, w0, g, &tol).unwrap();
    let b = f1(&spec, w0, g + delta, &tol).unwrap();
    prop_assert!(a <= b, "f1({w0}, {g}) = {a} > f1(.., +{delta}) = {b}");
    if a > 0.0 && a.is_finite() {
        prop_assert!(a < b, "f1 not strictly increasing: {a} vs {b}");
    }
    Ok(())
}

pub fn f2_monotone_gamma_case(w0: f64, offset: f64, delta: f64) -> CaseResult {
    let spec = ProblemSpec::canonical();
    let tol = Tolerances::default();
    let g = gamma2_lower(&spec, w0, &tol).unwrap().gamma + offset;
    let a = f2(&spec, w0, g, &tol).unwrap();
    let b = f2(&spec, w0, g + delta, &tol).unwrap();
    prop_assert!(a <= 0.0 && b <= 0.0, "f2 positive: {a}, {b}");
    prop_assert!(a < b, "f2({w0}, {g}) = {a} >= f2(.., +{delta}) = {b}");
    Ok(())
}

pub fn f2_monotone_w0_case(w0: f64, delta: f64, offset: f64) -> CaseResult {
    let spec = ProblemSpec::canonical();
    let tol = Tolerances::default();
    let w0b = w0 + delta;
    let g = gamma2_lower(&spec, w0, &tol)
        .unwrap()
        .gamma
        .max(gamma2_lower(&spec, w0b, &tol).unwrap().gamma)
        + offset;
    let a = f2(&spec, w0, g, &tol).unwrap();
    let b = f2(&spec, w0b, g, &tol).unwrap();
    prop_assert!(a < b, "f2({w0}, {g}) = {a} >= f2({w0b}, {g}) = {b}");
    Ok(())
}

pub fn gamma1_decreasing_case(w0: f64, delta: f64) -> CaseResult {
    let spec = ProblemSpec::canonical();
    let tol = Tolerances::default();
    let a = gamma1_star(&spec, w0, &tol).unwrap();
    let b = gamma1_star(&spec, w0 + delta, &tol).unwrap();
    prop_assert!(a > b, "gamma1*({w0}) = {a} <= gamma1*({}) = {b}", w0 + delta);
    Ok(())
}

pub fn gamma2_decreasing_case(w0: f64, delta: f64) -> CaseResult {
    let spec = ProblemSpec::canonical();
    let tol = Tolerances::default();
    let a = gamma2_star(&spec, w0, &tol).unwrap();
    let b = gamma2_star(&spec, w0 + delta, &tol).unwrap();
    prop_assert!(a > b, "gamma2*({w0}) = {a} <= gamma2*({}) = {b}", w0 + delta);
    Ok(())
}

/// A named property together with its sampled domain.
pub struct Suite {
    pub name: &'static str,
    pub run: fn(&mut TestRunner) -> Result<(), String>,
}

fn report<T: std::fmt::Debug>(r: Result<(), proptest::test_runner::TestError<T>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

pub fn suites() -> Vec<Suite> {
    vec![
        Suite {
            name: "hamiltonian concave / Lipschitz / monotone minimizer",
            run: |r| {
                report(r.run(&(menus(), -10.0f64..10.0, -10.0f64..10.0, 0.0f64..=1.0), |(m, a, b, l)| {
                    hamiltonian_case(&m, a, b, l)
                }))
            },
        },
        Suite {
            name: "w increasing in gamma",
            run: |r| {
                report(r.run(&(-6.0f64..0.4, 0.0f64..2.5, 1e-3f64..0.5), |(w0, g, d)| {
                    monotone_in_gamma_case(w0, g, d)
                }))
            },
        },
        Suite {
            name: "w increasing in w0",
            run: |r| {
                report(r.run(&(-6.0f64..0.4, 0.0f64..2.5, 1e-3f64..0.5), |(w0, g, d)| {
                    monotone_in_w0_case(w0, g, d)
                }))
            },
        },
        Suite {
            name: "one shape per (w0, gamma) with matching w'(0)",
            run: |r| report(r.run(&(-6.0f64..2.0, -2.0f64..3.0), |(w0, g)| shape_case(w0, g))),
        },
        Suite {
            name: "f1 increasing in gamma",
            run: |r| {
                report(r.run(&(-6.0f64..0.45, -0.5f64..2.0, 1e-3f64..0.5), |(w0, o, d)| {
                    f1_monotone_case(w0, o, d)
                }))
            },
        },
        Suite {
            name: "f2 increasing in gamma",
            run: |r| {
                report(r.run(&(-10.0f64..-0.6, 1e-3f64..2.0, 1e-3f64..1.0), |(w0, o, d)| {
                    f2_monotone_gamma_case(w0, o, d)
                }))
            },
        },
        Suite {
            name: "f2 increasing in w0",
            run: |r| {
                report(r.run(&(-10.0f64..-1.0, 1e-2f64..0.4, 1e-3f64..2.0), |(w0, d, o)| {
                    f2_monotone_w0_case(w0, d, o)
                }))
            },
        },
        Suite {
            name: "gamma1* decreasing in w0",
            run: |r| {
                report(r.run(&(-6.0f64..0.3, 0.02f64..0.15), |(w0, d)| gamma1_decreasing_case(w0, d)))
            },
        },
        Suite {
            name: "gamma2* decreasing in w0",
            run: |r| {
                report(r.run(&(-12.0f64..-4.2, 0.02f64..0.2), |(w0, d)| gamma2_decreasing_case(w0, d)))
            },
        },
    ]
}
