//! Shared helpers for the integration suites: an independent adaptive
//! quadrature oracle and study-configuration shorthands.

#![allow(dead_code)]

/// Adaptive Simpson quadrature with Richardson correction; independent of
/// every integration routine in the library.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, m: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: usize) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, 0.5 * (a + m), m);
        let right = simpson(f, m, 0.5 * (m + b), b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    recurse(f, a, b, simpson(f, a, m, b), tol, depth)
}

/// Piecewise adaptive Simpson over given cut points (for integrands with
/// long tails or end-point singularities).
pub fn adaptive_simpson_piecewise(f: &dyn Fn(f64) -> f64, cuts: &[f64], tol: f64) -> f64 {
    cuts.windows(2)
        .map(|w| adaptive_simpson(f, w[0], w[1], tol, 48))
        .sum()
}

/// Prints the per-criterion verdict line and panics on failure.
pub fn criterion(number: u32, label: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("[acceptance] criterion {number} ({label}): {verdict} - {detail}");
    assert!(ok, "criterion {number} ({label}) failed: {detail}");
}
