//! Gauss–Legendre quadrature over interpolant segments.

const NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Five-point Gauss–Legendre rule on `[a, b]`; exact for polynomials up to degree 9.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    NODES
        .iter()
        .zip(WEIGHTS.iter())
        .map(|(&t, &w)| w * f(mid + half * t))
        .sum::<f64>()
        * half
}

/// Composite rule: one Gauss–Legendre panel per `[x0, x1]` piece, clipped to `[a, b]`.
pub fn composite(
    pieces: impl Iterator<Item = (f64, f64)>,
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    pieces
        .filter_map(|(x0, x1)| {
            let lo = x0.max(a);
            let hi = x1.min(b);
            (hi > lo).then(|| gauss_legendre(&f, lo, hi))
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_degree_nine() {
        let v = gauss_legendre(|x| x.powi(9) + 3.0 * x.powi(8), -1.0, 2.0);
        let exact = (2f64.powi(10) - 1.0) / 10.0 + (2f64.powi(9) + 1.0) / 3.0;
        assert!((v - exact).abs() < 1e-10 * exact.abs());
    }

    #[test]
    fn composite_clips_to_range() {
        let pieces = (0..10).map(|i| (i as f64 * 0.5, (i + 1) as f64 * 0.5));
        let v = composite(pieces, |x| x.sin(), 0.3, 3.7);
        assert!((v - (0.3f64.cos() - 3.7f64.cos())).abs() < 1e-12);
    }
}
