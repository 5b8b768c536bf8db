//! Dormand–Prince 5(4) stepping with Hairer's continuous extension.

// Butcher tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// error coefficients (5th minus embedded 4th order)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Continuous extension over one accepted step `[x0, x0 + h]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DenseSegment<const N: usize> {
    pub x0: f64,
    pub h: f64,
    coef: [[f64; N]; 5],
}

impl<const N: usize> DenseSegment<N> {
    pub fn x1(&self) -> f64 {
        self.x0 + self.h
    }

    pub fn eval(&self, x: f64) -> [f64; N] {
        let t = (x - self.x0) / self.h;
        let t1 = 1.0 - t;
        let [r1, r2, r3, r4, r5] = &self.coef;
        std::array::from_fn(|i| r1[i] + t * (r2[i] + t1 * (r3[i] + t * (r4[i] + t1 * r5[i]))))
    }

    /// Derivative of the interpolant with respect to `x`.
    pub fn deriv(&self, x: f64) -> [f64; N] {
        let t = (x - self.x0) / self.h;
        let t1 = 1.0 - t;
        let [_, r2, r3, r4, r5] = &self.coef;
        std::array::from_fn(|i| {
            let p = r3[i] + t * (r4[i] + t1 * r5[i]);
            let dp = r4[i] + (1.0 - 2.0 * t) * r5[i];
            let r = r2[i] + t1 * p;
            let dr = -p + t1 * dp;
            (r + t * dr) / self.h
        })
    }
}

/// Outcome of one trial step.
pub struct Trial<const N: usize> {
    pub y: [f64; N],
    /// Slope at the end of the step (first stage of the next step).
    pub f: [f64; N],
    /// Scaled RMS error estimate; the step is acceptable when `<= 1`.
    pub err: f64,
    pub dense: DenseSegment<N>,
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(a, k)| a * k[i]).sum::<f64>())
}

/// One Dormand–Prince step of size `h` from `(x, y)` with slope `k1 = f(x, y)`.
pub fn step<const N: usize>(
    f: &mut impl FnMut(f64, &[f64; N]) -> [f64; N],
    x: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    atol: f64,
    rtol: f64,
) -> Trial<N> {
    let k2 = f(x + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = f(x + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(x + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(
        x + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = f(
        x + h,
        &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    let y1 = axpy(
        y,
        h,
        &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    let k7 = f(x + h, &y1);

    let mut sum = 0.0;
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sk = atol + rtol * y[i].abs().max(y1[i].abs());
        sum += (e / sk) * (e / sk);
    }
    let err = (sum / N as f64).sqrt();

    let mut coef = [[0.0; N]; 5];
    for i in 0..N {
        let ydiff = y1[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        coef[0][i] = y[i];
        coef[1][i] = ydiff;
        coef[2][i] = bspl;
        coef[3][i] = ydiff - h * k7[i] - bspl;
        coef[4][i] = h
            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Trial {
        y: y1,
        f: k7,
        err: if err.is_nan() { f64::INFINITY } else { err },
        dense: DenseSegment { x0: x, h, coef },
    }
}

/// Step-size factor after a trial with scaled error `err`.
pub fn next_step_factor(err: f64, accepted: bool) -> f64 {
    let raw = if err == 0.0 {
        10.0
    } else {
        0.9 * err.powf(-0.2)
    };
    if accepted {
        raw.clamp(0.2, 10.0)
    } else {
        raw.clamp(0.1, 0.9)
    }
}

/// Integrate `y' = f(x, y)` from `x0` to `x_end`, landing exactly on every
/// point of `stops` that lies inside the interval. Returns the dense segments.
pub fn solve<const N: usize>(
    mut f: impl FnMut(f64, &[f64; N]) -> [f64; N],
    x0: f64,
    y0: [f64; N],
    x_end: f64,
    stops: &[f64],
    tol: f64,
    max_step: f64,
) -> Option<Vec<DenseSegment<N>>> {
    let mut targets: Vec<f64> = stops
        .iter()
        .copied()
        .filter(|&s| s > x0 && s < x_end)
        .collect();
    targets.push(x_end);
    targets.sort_by(f64::total_cmp);
    let mut segments = Vec::new();
    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, &y);
    let mut h = (x_end - x0).min(max_step).clamp(1e-12, 1e-2);
    let floor = 1e-14 * (1.0 + x_end.abs());
    for &target in &targets {
        while x < target {
            let last = x + h >= target - floor;
            let hh = if last { target - x } else { h };
            let trial = step(&mut f, x, &y, &k1, hh, tol, tol);
            if trial.err <= 1.0 {
                x = if last { target } else { x + hh };
                y = trial.y;
                k1 = trial.f;
                segments.push(trial.dense);
                h = (hh * next_step_factor(trial.err, true)).min(max_step);
            } else {
                h = hh * next_step_factor(trial.err, false);
                if h < floor {
                    return None;
                }
            }
        }
    }
    Some(segments)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_and_dense_output() {
        let segs = solve(|_, y: &[f64; 1]| [-y[0]], 0.0, [1.0], 5.0, &[], 1e-12, 0.5).unwrap();
        let last = segs.last().unwrap();
        assert!((last.eval(5.0)[0] - (-5f64).exp()).abs() < 1e-11);
        for s in &segs {
            let xm = s.x0 + 0.37 * s.h;
            assert!((s.eval(xm)[0] - (-xm).exp()).abs() < 1e-10);
            assert!((s.deriv(xm)[0] + (-xm).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn lands_on_stops() {
        let segs = solve(
            |x, _y: &[f64; 2]| [x.cos(), 1.0],
            0.0,
            [0.0, 0.0],
            3.0,
            &[1.25, 2.5],
            1e-12,
            1.0,
        )
        .unwrap();
        assert!(segs.iter().any(|s| (s.x1() - 1.25).abs() < 1e-15));
        assert!(segs.iter().any(|s| (s.x1() - 2.5).abs() < 1e-15));
        let end = segs.last().unwrap().eval(3.0);
        assert!((end[0] - 3f64.sin()).abs() < 1e-11);
        assert!((end[1] - 3.0).abs() < 1e-12);
    }
}
