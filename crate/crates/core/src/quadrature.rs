//! Composite trapezoidal rule.

/// Weights of the composite trapezoid with `n` subintervals on `[a, b]`,
/// paired with the nodes.
pub fn trapezoid_nodes(a: f64, b: f64, n: usize) -> impl Iterator<Item = (f64, f64)> {
    let h = (b - a) / n as f64;
    (0..=n).map(move |k| {
        let x = if k == n { b } else { a + k as f64 * h };
        let w = if k == 0 || k == n { 0.5 * h } else { h };
        (x, w)
    })
}

/// `int_a^b f` by the composite trapezoid with `n` subintervals.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    trapezoid_nodes(a, b, n).map(|(x, w)| w * f(x)).sum()
}
