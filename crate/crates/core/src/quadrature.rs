//! Quadrature helpers for periodic integrands.

use std::f64::consts::TAU;

/// Trapezoidal rule over one period `[0, 2*pi)`.
///
/// For smooth periodic integrands this converges spectrally, and it is exact
/// for trigonometric polynomials of degree below `n`.
pub fn periodic_integral(n: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let w = TAU / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        acc += f(w * i as f64);
    }
    acc * w
}

/// Composite Simpson quadrature over samples on a uniform grid.
///
/// `values` holds `f(t0 + k h)` for `k = 0..values.len()`. An even interval
/// count is handled exactly; a trailing odd interval falls back to one
/// trapezoid panel.
pub fn simpson_uniform(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    assert!(n >= 2, "need at least two samples");
    let intervals = n - 1;
    let pairs = intervals / 2;
    let mut acc = 0.0;
    for p in 0..pairs {
        let i = 2 * p;
        acc += values[i] + 4.0 * values[i + 1] + values[i + 2];
    }
    let mut total = acc * h / 3.0;
    if intervals % 2 == 1 {
        total += 0.5 * h * (values[n - 2] + values[n - 1]);
    }
    total
}
