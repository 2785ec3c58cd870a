//! Gauss–Legendre rules and adaptive integration on finite intervals.

use std::f64::consts::PI;

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre recurrence.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p1, mut p2) = (1.0, 0.0);
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
                }
                dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
                let z_new = z - p1 / dp;
                let done = (z_new - z).abs() < 1e-15;
                z = z_new;
                if done {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
    }
}

/// Outcome of [`adaptive`]: value, accumulated error estimate and whether
/// every panel met its tolerance.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
    pub evaluations: usize,
}

/// Adaptive bisection with a fixed Gauss–Legendre rule: a panel is accepted
/// when the one-panel estimate agrees with the two half-panel estimates.
pub fn adaptive(
    rule: &GaussLegendre,
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_depth: u32,
) -> Integral {
    let n = rule.nodes.len();
    let whole = rule.integrate(f, a, b);
    let mut out = Integral {
        value: 0.0,
        error: 0.0,
        converged: true,
        evaluations: n,
    };
    let mut stack = vec![(a, b, whole, abs_tol, 0u32)];
    while let Some((lo, hi, est, tol, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = rule.integrate(f, lo, mid);
        let right = rule.integrate(f, mid, hi);
        out.evaluations += 2 * n;
        let refined = left + right;
        let err = (refined - est).abs();
        if err <= tol || depth >= max_depth {
            if err > tol {
                out.converged = false;
            }
            out.value += refined;
            out.error += err;
        } else {
            stack.push((lo, mid, left, 0.5 * tol, depth + 1));
            stack.push((mid, hi, right, 0.5 * tol, depth + 1));
        }
    }
    out
}

/// Wynn's epsilon extrapolation of a sequence of partial sums. Returns the
/// most refined estimate and the difference to the previous one.
pub fn wynn_epsilon(partial: &[f64]) -> (f64, f64) {
    let m = partial.len();
    if m < 3 {
        let last = *partial.last().unwrap_or(&0.0);
        let prev = if m >= 2 { partial[m - 2] } else { last };
        return (last, (last - prev).abs());
    }
    // e[k] holds column j of the epsilon table
    let mut prev_col = vec![0.0; m + 1];
    let mut col: Vec<f64> = partial.to_vec();
    let mut best = (col[m - 1], (col[m - 1] - col[m - 2]).abs());
    let mut j = 0;
    while col.len() > 1 {
        let next: Vec<f64> = (0..col.len() - 1)
            .map(|k| {
                let diff = col[k + 1] - col[k];
                let base = if j == 0 { 0.0 } else { prev_col[k + 1] };
                if diff == 0.0 {
                    f64::INFINITY
                } else {
                    base + 1.0 / diff
                }
            })
            .collect();
        prev_col = col;
        col = next;
        j += 1;
        if j % 2 == 0 && col.len() >= 2 && col.iter().all(|x| x.is_finite()) {
            let l = col.len();
            best = (col[l - 1], (col[l - 1] - col[l - 2]).abs());
        }
        if col.iter().any(|x| !x.is_finite()) {
            break;
        }
    }
    best
}
