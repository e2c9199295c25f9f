//! Chebyshev–Lobatto utilities on `[-1, 1]`: nodes, barycentric
//! interpolation, differentiation matrices and coefficient transforms.

use num_complex::Complex64;
use std::f64::consts::PI;

/// Lobatto nodes `x_j = cos(pi j / n)`, `j = 0..=n`, ordered from `1` to `-1`.
pub fn lobatto_nodes(n: usize) -> Vec<f64> {
    assert!(n >= 1, "need at least two nodes");
    (0..=n)
        .map(|j| {
            // sin form keeps the nodes symmetric to the last bit
            (PI * (n as f64 - 2.0 * j as f64) / (2.0 * n as f64)).sin()
        })
        .collect()
}

/// Barycentric weights for the Lobatto nodes.
pub fn barycentric_weights(n: usize) -> Vec<f64> {
    (0..=n)
        .map(|j| {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n {
                0.5 * s
            } else {
                s
            }
        })
        .collect()
}

/// Dense differentiation matrix `D` with `(D v)_i ~ v'(x_i)`.
///
/// Diagonal entries use the negative-sum identity so constants map to zero.
pub fn diff_matrix(n: usize) -> Vec<Vec<f64>> {
    let x = lobatto_nodes(n);
    let c: Vec<f64> = (0..=n)
        .map(|j| {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n {
                2.0 * s
            } else {
                s
            }
        })
        .collect();
    let mut d = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..=n {
        let mut row_sum = 0.0;
        for j in 0..=n {
            if i != j {
                d[i][j] = (c[i] / c[j]) / (x[i] - x[j]);
                row_sum += d[i][j];
            }
        }
        d[i][i] = -row_sum;
    }
    d
}

/// Barycentric interpolation of nodal values at `x`.
pub fn interpolate(nodes: &[f64], weights: &[f64], values: &[Complex64], x: f64) -> Complex64 {
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0;
    for ((&xj, &wj), &vj) in nodes.iter().zip(weights).zip(values) {
        let dx = x - xj;
        if dx == 0.0 {
            return vj;
        }
        let q = wj / dx;
        num += vj * q;
        den += q;
    }
    num / den
}

/// Barycentric basis row: `interpolate(x) = sum_j row[j] * values[j]`.
pub fn interpolation_row(nodes: &[f64], weights: &[f64], x: f64) -> Vec<f64> {
    let mut row = vec![0.0; nodes.len()];
    if let Some(j) = nodes.iter().position(|&xj| xj == x) {
        row[j] = 1.0;
        return row;
    }
    let mut den = 0.0;
    for (j, (&xj, &wj)) in nodes.iter().zip(weights).enumerate() {
        let q = wj / (x - xj);
        row[j] = q;
        den += q;
    }
    for r in &mut row {
        *r /= den;
    }
    row
}

/// Chebyshev coefficients of the interpolant through the Lobatto values.
pub fn coefficients(values: &[Complex64]) -> Vec<Complex64> {
    let n = values.len() - 1;
    let mut out = vec![Complex64::new(0.0, 0.0); n + 1];
    for (k, ck) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &v) in values.iter().enumerate() {
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            acc += v * (w * (PI * (k * j) as f64 / n as f64).cos());
        }
        let scale = if k == 0 || k == n { 1.0 } else { 2.0 };
        *ck = acc * (scale / n as f64);
    }
    out
}

/// Affine map from `[-1, 1]` onto `[lo, hi]`.
pub fn to_interval(x: f64, lo: f64, hi: f64) -> f64 {
    0.5 * (hi + lo) + 0.5 * (hi - lo) * x
}

/// Inverse of [`to_interval`].
pub fn from_interval(y: f64, lo: f64, hi: f64) -> f64 {
    (2.0 * y - (hi + lo)) / (hi - lo)
}
