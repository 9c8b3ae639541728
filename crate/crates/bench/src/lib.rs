//! Shared fixtures for the perptail benchmarks.

use perptail::QLaw;

/// The bounded laws used across benchmarks, with a short label each.
pub fn laws() -> Vec<(&'static str, QLaw)> {
    vec![
        ("pointmass", QLaw::PointMass { b: 1.0 }),
        ("twopoint", QLaw::TwoPoint { b: 1.0, p: 0.5, q0: -1.0 }),
        ("gammashift", QLaw::GammaShift { b: 1.0, theta: 1.0, lambda: 1.0 }),
    ]
}

/// `points` values spaced evenly in `log10` between `10^lo` and `10^hi`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let n = (points.max(2) - 1) as f64;
    (0..points)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / n))
        .collect()
}
