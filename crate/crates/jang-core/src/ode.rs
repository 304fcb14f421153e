//! Adaptive embedded Runge–Kutta integration (Dormand–Prince 5(4)).
//!
//! Small, allocation-light integrator sufficient for the stiff-free
//! first-order systems appearing in the barrier construction. Steps are
//! clamped to land exactly on requested output nodes, so sampled solutions
//! need no interpolation.

use crate::error::{CoreError, Result};

/// Dormand–Prince 5(4) Butcher tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
/// 5th-order weights (same as the last row of `A`), and the embedded
/// 4th-order weights for the error estimate.
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const MAX_STEPS: usize = 2_000_000;

/// Integrate `dy/dt = f(t, y)` from `nodes[0]` through every node in order,
/// recording the state at each node. `nodes` must be strictly increasing.
pub fn integrate_to_nodes<F>(
    f: F,
    nodes: &[f64],
    y0: &[f64],
    rtol: f64,
    atol: f64,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let dim = y0.len();
    let mut out = Vec::with_capacity(nodes.len());
    out.push(y0.to_vec());

    let mut t = nodes[0];
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; dim]; 7];
    f(t, &y, &mut k[0]);
    let mut h = (nodes[1] - nodes[0]).min(1e-2 * (1.0 + t.abs()));
    let mut steps = 0usize;

    for &target in &nodes[1..] {
        while t < target {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(CoreError::OdeFailure(format!(
                    "step budget exhausted at t = {t:.6e}"
                )));
            }
            let mut hs = h.min(target - t);
            // attempt steps until accepted
            loop {
                let mut ytmp = vec![0.0; dim];
                for s in 0..6 {
                    for d in 0..dim {
                        let mut acc = 0.0;
                        for (j, kj) in k.iter().enumerate().take(s + 1) {
                            acc += A[s][j] * kj[d];
                        }
                        ytmp[d] = y[d] + hs * acc;
                    }
                    let ts = t + C[s] * hs;
                    let (head, tail) = k.split_at_mut(s + 1);
                    let _ = head;
                    f(ts, &ytmp, &mut tail[0]);
                }
                // 5th-order solution and embedded error
                let mut y5 = vec![0.0; dim];
                let mut errnorm = 0.0_f64;
                for d in 0..dim {
                    let mut acc5 = 0.0;
                    let mut acc4 = 0.0;
                    for s in 0..7 {
                        acc5 += B5[s] * k[s][d];
                        acc4 += B4[s] * k[s][d];
                    }
                    y5[d] = y[d] + hs * acc5;
                    let sc = atol + rtol * y[d].abs().max(y5[d].abs());
                    errnorm = errnorm.max((hs * (acc5 - acc4) / sc).abs());
                }
                if !errnorm.is_finite() {
                    return Err(CoreError::OdeFailure(format!(
                        "non-finite error estimate at t = {t:.6e}"
                    )));
                }
                if errnorm <= 1.0 {
                    t += hs;
                    y = y5;
                    // first-same-as-last: k[6] is f at the new point
                    k[0] = k[6].clone();
                    let factor = if errnorm == 0.0 {
                        5.0
                    } else {
                        (0.9 * errnorm.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    h = hs * factor;
                    break;
                }
                let factor = (0.9 * errnorm.powf(-0.2)).clamp(0.1, 0.9);
                hs *= factor;
                if hs < 1e-14 * (1.0 + t.abs()) {
                    return Err(CoreError::OdeFailure(format!(
                        "step size underflow at t = {t:.6e}"
                    )));
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exponential_growth_to_high_accuracy() {
        let nodes: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let sol = integrate_to_nodes(|_, y, dy| dy[0] = y[0], &nodes, &[1.0], 1e-12, 1e-14).unwrap();
        for (i, s) in sol.iter().enumerate() {
            assert_abs_diff_eq!(s[0], (0.1 * i as f64).exp(), epsilon = 1e-10);
        }
    }

    #[test]
    fn harmonic_oscillator_period() {
        let tau = 2.0 * std::f64::consts::PI;
        let nodes = [0.0, tau];
        let sol = integrate_to_nodes(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            &nodes,
            &[1.0, 0.0],
            1e-11,
            1e-13,
        )
        .unwrap();
        assert_abs_diff_eq!(sol[1][0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol[1][1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn lands_exactly_on_nodes() {
        // integrand depends only on t; node values must be exact quadratures
        let nodes: Vec<f64> = (0..21).map(|i| 1.0 + 0.35 * i as f64).collect();
        let sol =
            integrate_to_nodes(|t, _, dy| dy[0] = 1.0 / t, &nodes, &[0.0], 1e-12, 1e-14).unwrap();
        for (i, s) in sol.iter().enumerate() {
            assert_abs_diff_eq!(s[0], nodes[i].ln(), epsilon = 1e-10);
        }
    }
}
