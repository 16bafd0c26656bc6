//! Central finite differences with one level of Richardson extrapolation.

/// Default step for a first derivative around `x`: cbrt(eps) * (1 + |x|).
pub fn default_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x.abs())
}

/// First derivative of `f` at `x` by central differences at `h` and `h/2`,
/// combined as `(4 D(h/2) - D(h)) / 3` to cancel the O(h^2) term.
pub fn richardson_derivative<F>(f: F, x: f64, h: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let d = |s: f64| (f(x + s) - f(x - s)) / (2.0 * s);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// Same extrapolation for vector-valued samples already evaluated at
/// offsets `-h, -h/2, +h/2, +h` (in that order).
pub fn richardson_from_samples<const N: usize>(samples: &[[f64; N]; 4], h: f64) -> [f64; N] {
    let mut out = [0.0; N];
    for k in 0..N {
        let d_h = (samples[3][k] - samples[0][k]) / (2.0 * h);
        let d_h2 = (samples[2][k] - samples[1][k]) / h;
        out[k] = (4.0 * d_h2 - d_h) / 3.0;
    }
    out
}

/// Offsets, in units of `h`, matching [`richardson_from_samples`].
pub const RICHARDSON_OFFSETS: [f64; 4] = [-1.0, -0.5, 0.5, 1.0];

/// Weights of central stencils on offsets -2..=2 (units of h) for derivative
/// orders 0..=4. Orders 1 and 2 are fourth-order accurate, 3 and 4 second-order.
pub fn stencil_weights(order: usize) -> [f64; 5] {
    match order {
        0 => [0.0, 0.0, 1.0, 0.0, 0.0],
        1 => [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0],
        2 => [
            -1.0 / 12.0,
            16.0 / 12.0,
            -30.0 / 12.0,
            16.0 / 12.0,
            -1.0 / 12.0,
        ],
        3 => [-0.5, 1.0, 0.0, -1.0, 0.5],
        4 => [1.0, -4.0, 6.0, -4.0, 1.0],
        _ => panic!("stencil order {order} not supported"),
    }
}

/// Composite Simpson rule on equally spaced samples (odd count).
pub fn simpson_cumulative(values: &[f64], h: f64) -> Vec<f64> {
    // odd-indexed points integrate the local quadratic over one half-panel
    let n = values.len();
    let mut out = vec![0.0; n];
    for i in 1..n {
        if i % 2 == 0 {
            out[i] = out[i - 2] + h / 3.0 * (values[i - 2] + 4.0 * values[i - 1] + values[i]);
        } else if i + 1 < n {
            // quadratic through (i-1, i, i+1) integrated over the first half
            out[i] =
                out[i - 1] + h / 12.0 * (5.0 * values[i - 1] + 8.0 * values[i] - values[i + 1]);
        } else {
            out[i] =
                out[i - 1] + h / 12.0 * (-values[i - 2] + 8.0 * values[i - 1] + 5.0 * values[i]);
        }
    }
    out
}
