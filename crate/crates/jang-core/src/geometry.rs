//! Grids, quadrature and pointwise tensor calculus in the polar chart.
//!
//! The chart is `(r, θ, φ)` with coordinate indices `0 = r`, `1 = θ`,
//! `2 = φ`. The reference hyperbolic metric is
//! `b = dr²/(1+r²) + r²(dθ² + sin²θ dφ²)`.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Relative tolerance used when validating grid invariants.
pub(crate) const GRID_TOL: f64 = 1e-12;

/// A point of the polar chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl Point {
    pub fn new(r: f64, theta: f64, phi: f64) -> Self {
        Point { r, theta, phi }
    }

    /// Radial point on the equator; angular position is irrelevant for
    /// spherically symmetric fields but must avoid the coordinate poles.
    pub fn radial(r: f64) -> Self {
        Point::new(r, std::f64::consts::FRAC_PI_2, 0.0)
    }
}

/// Spacing law of a radial grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpacingMode {
    Uniform,
    Logarithmic,
}

/// Strictly increasing radial nodes, all positive.
///
/// Logarithmic spacing is the default throughout the crate: the barrier and
/// falloff analysis lives on decades of `r`, and the Jang operator
/// degenerates as `|df| → ∞`, so constant steps in `ln r` keep `|df|·Δr`
/// bounded.
#[derive(Clone, Debug)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    spacing_mode: SpacingMode,
}

impl RadialGrid {
    /// `n` nodes spaced uniformly in `ln r` over `[r0, r1]`.
    pub fn logarithmic(r0: f64, r1: f64, n: usize) -> Result<Self> {
        if !(r0 > 0.0 && r1 > r0) || n < 2 {
            return Err(CoreError::InvalidGrid(format!(
                "need 0 < r0 < r1 and n >= 2, got r0 = {r0}, r1 = {r1}, n = {n}"
            )));
        }
        let step = (r1 / r0).ln() / (n - 1) as f64;
        let nodes = (0..n).map(|i| r0 * (step * i as f64).exp()).collect();
        Ok(RadialGrid {
            nodes,
            spacing_mode: SpacingMode::Logarithmic,
        })
    }

    /// `n` nodes spaced uniformly over `[r0, r1]`.
    pub fn uniform(r0: f64, r1: f64, n: usize) -> Result<Self> {
        if !(r0 > 0.0 && r1 > r0) || n < 2 {
            return Err(CoreError::InvalidGrid(format!(
                "need 0 < r0 < r1 and n >= 2, got r0 = {r0}, r1 = {r1}, n = {n}"
            )));
        }
        let step = (r1 - r0) / (n - 1) as f64;
        let nodes = (0..n).map(|i| r0 + step * i as f64).collect();
        Ok(RadialGrid {
            nodes,
            spacing_mode: SpacingMode::Uniform,
        })
    }

    /// Build from explicit nodes, validating the invariants.
    pub fn from_nodes(nodes: Vec<f64>, spacing_mode: SpacingMode) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] <= 0.0 {
            return Err(CoreError::InvalidGrid(
                "need at least two nodes with nodes[0] > 0".into(),
            ));
        }
        for w in nodes.windows(2) {
            if w[1] <= w[0] {
                return Err(CoreError::InvalidGrid("nodes must be strictly increasing".into()));
            }
        }
        if spacing_mode == SpacingMode::Logarithmic {
            let q0 = nodes[1] / nodes[0];
            for w in nodes.windows(2) {
                if ((w[1] / w[0]) / q0 - 1.0).abs() > GRID_TOL {
                    return Err(CoreError::InvalidGrid(
                        "logarithmic mode requires a constant node ratio".into(),
                    ));
                }
            }
        }
        Ok(RadialGrid { nodes, spacing_mode })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing_mode(&self) -> SpacingMode {
        self.spacing_mode
    }

    pub fn inner(&self) -> f64 {
        self.nodes[0]
    }

    pub fn outer(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Maximum step of the grid in the `ln r` coordinate. This is the `h`
    /// entering the `O(h²)` bounds of the second-order radial stencils.
    pub fn log_step(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| (w[1] / w[0]).ln())
            .fold(0.0, f64::max)
    }

    /// Indices of the nodes in the last decade `[outer/10, outer]`. When no
    /// node sits at `outer/10` exactly, the window is widened by one node so
    /// the returned samples always span a full decade.
    pub fn last_decade(&self) -> Vec<usize> {
        let lo = self.outer() / 10.0;
        let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.nodes[i] >= lo).collect();
        if let Some(&first) = idx.first() {
            if first > 0 && self.nodes[first] > lo * (1.0 + 1e-12) {
                idx.insert(0, first - 1);
            }
        }
        idx
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on `P_n` seeded with the Chebyshev estimate; accurate to
/// machine precision for the moderate `n` used here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one quadrature node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Initial guess (roots are symmetric; compute all for simplicity).
        let mut xi = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Evaluate P_n and P_n' by the three-term recurrence.
            let (mut p0, mut p1) = (1.0, xi);
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * xi * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            let dp = n as f64 * (xi * p1 - p0) / (xi * xi - 1.0);
            let dx = p1 / dp;
            xi -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, xi);
        for k in 2..=n {
            let pk = ((2 * k - 1) as f64 * xi * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = pk;
        }
        let dp = n as f64 * (xi * p1 - p0) / (xi * xi - 1.0);
        x[n - 1 - i] = xi;
        w[n - 1 - i] = 2.0 / ((1.0 - xi * xi) * dp * dp);
    }
    (x, w)
}

/// Product quadrature grid on the unit sphere: Gauss–Legendre colatitudes ×
/// uniform longitudes. Exactly integrates spherical harmonics up to the
/// declared degree; the weights sum to `4π`.
#[derive(Clone, Debug)]
pub struct SphereGrid {
    /// Declared exactness degree.
    degree: usize,
    thetas: Vec<f64>,
    /// Gauss–Legendre weights in `cos θ`, one per colatitude ring.
    theta_weights: Vec<f64>,
    phis: Vec<f64>,
    dphi: f64,
}

impl SphereGrid {
    /// Grid integrating products of harmonics up to combined degree `degree`
    /// exactly: `degree + 1` colatitude rings and `2·degree + 2` longitudes.
    pub fn new(degree: usize) -> Self {
        let ntheta = degree + 1;
        let nphi = 2 * degree + 2;
        let (x, theta_weights) = gauss_legendre(ntheta);
        let thetas = x.iter().map(|&xi| xi.acos()).collect::<Vec<_>>();
        let dphi = 2.0 * std::f64::consts::PI / nphi as f64;
        let phis = (0..nphi).map(|j| dphi * j as f64).collect();
        SphereGrid {
            degree,
            thetas,
            theta_weights,
            phis,
            dphi,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    pub fn node_count(&self) -> usize {
        self.thetas.len() * self.phis.len()
    }

    /// Quadrature weight of node `(i, j)`.
    pub fn weight(&self, i: usize, _j: usize) -> f64 {
        self.theta_weights[i] * self.dphi
    }

    /// Iterate `(i, j, θ_i, φ_j, w_ij)` in a fixed row-major order.
    pub fn iter_nodes(&self) -> impl Iterator<Item = (usize, usize, f64, f64, f64)> + '_ {
        self.thetas.iter().enumerate().flat_map(move |(i, &t)| {
            self.phis
                .iter()
                .enumerate()
                .map(move |(j, &p)| (i, j, t, p, self.theta_weights[i] * self.dphi))
        })
    }

    /// Quadrature of a function sampled at the grid nodes (row-major:
    /// `samples[i * nphi + j]`).
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        assert_eq!(samples.len(), self.node_count(), "sample count mismatch");
        let nphi = self.phis.len();
        let mut total = 0.0;
        for i in 0..self.thetas.len() {
            let mut ring = 0.0;
            for j in 0..nphi {
                ring += samples[i * nphi + j];
            }
            total += ring * self.theta_weights[i] * self.dphi;
        }
        total
    }

    /// Quadrature of a closure over the grid nodes.
    pub fn integrate_fn(&self, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        let mut total = 0.0;
        for (_, _, t, p, w) in self.iter_nodes() {
            total += w * f(t, p);
        }
        total
    }
}

/// Value of a sphere-wide function together with the quadrature rule used to
/// produce it; see [`SphereGrid::integrate`].
pub fn sphere_integrate(grid: &SphereGrid, samples: &[f64]) -> f64 {
    grid.integrate(samples)
}

// ---------------------------------------------------------------------------
// Pointwise tensor calculus
// ---------------------------------------------------------------------------

/// Two-jet of a metric at a point: components, first and second coordinate
/// derivatives. `dg[k]` is `∂_k g`, `d2g[k][l]` is `∂_k ∂_l g`.
#[derive(Clone, Debug)]
pub struct MetricJet {
    pub g: Matrix3<f64>,
    pub dg: [Matrix3<f64>; 3],
    pub d2g: [[Matrix3<f64>; 3]; 3],
}

/// One-jet of a symmetric 2-tensor (used for `K`).
#[derive(Clone, Debug)]
pub struct TensorJet {
    pub k: Matrix3<f64>,
    pub dk: [Matrix3<f64>; 3],
}

/// Inverse of a positive definite symmetric 3×3 matrix, with a degeneracy
/// check on the pivots.
pub fn inverse_spd(g: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let det = g.determinant();
    if !(det > 0.0) || g[(0, 0)] <= 0.0 {
        return Err(CoreError::DegenerateMetric(format!(
            "determinant {det:.3e}, g_rr = {:.3e}",
            g[(0, 0)]
        )));
    }
    g.try_inverse()
        .ok_or_else(|| CoreError::DegenerateMetric("matrix not invertible".into()))
}

/// Christoffel symbols `Γ^k_{ij}` from the metric and its first derivatives:
/// `Γ^k_{ij} = ½ g^{kl} (∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij})`.
///
/// Returned as `gamma[k][(i, j)]`, symmetric in the lower indices. For the
/// reference hyperbolic metric this reproduces the block structure
/// `Γ^r_{rr} = −r/(1+r²)`, `Γ^r_{rμ} = 0`, `Γ^r_{μν} = −½(1+r²)∂_r g_{μν}`,
/// `Γ^ν_{rμ} = ½ g^{λν} ∂_r g_{λμ}`.
pub fn christoffel_symbols(g: &Matrix3<f64>, dg: &[Matrix3<f64>; 3]) -> Result<[Matrix3<f64>; 3]> {
    let ginv = inverse_spd(g)?;
    let mut gamma = [Matrix3::zeros(); 3];
    for k in 0..3 {
        for i in 0..3 {
            for j in i..3 {
                let mut s = 0.0;
                for l in 0..3 {
                    s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                gamma[k][(i, j)] = 0.5 * s;
                gamma[k][(j, i)] = gamma[k][(i, j)];
            }
        }
    }
    Ok(gamma)
}

/// Scalar curvature from a metric two-jet:
/// `Ric_{ij} = ∂_k Γ^k_{ij} − ∂_i Γ^k_{kj} + Γ^k_{kl} Γ^l_{ij} − Γ^k_{il} Γ^l_{kj}`,
/// `Scal = g^{ij} Ric_{ij}`, with `∂Γ` assembled analytically from the
/// second derivatives of the metric.
pub fn scalar_curvature_from_jet(jet: &MetricJet) -> Result<f64> {
    let ginv = inverse_spd(&jet.g)?;
    let gamma = christoffel_symbols(&jet.g, &jet.dg)?;

    // ∂_m g^{kl} = −g^{ka} (∂_m g_{ab}) g^{bl}
    let mut dginv = [Matrix3::zeros(); 3];
    for m in 0..3 {
        dginv[m] = -ginv * jet.dg[m] * ginv;
    }

    // ∂_m Γ^k_{ij}
    let mut dgamma = [[Matrix3::zeros(); 3]; 3]; // dgamma[m][k][(i,j)]
    for m in 0..3 {
        for k in 0..3 {
            for i in 0..3 {
                for j in i..3 {
                    let mut s = 0.0;
                    for l in 0..3 {
                        s += dginv[m][(k, l)] * (jet.dg[i][(j, l)] + jet.dg[j][(i, l)] - jet.dg[l][(i, j)])
                            + ginv[(k, l)]
                                * (jet.d2g[m][i][(j, l)] + jet.d2g[m][j][(i, l)] - jet.d2g[m][l][(i, j)]);
                    }
                    dgamma[m][k][(i, j)] = 0.5 * s;
                    dgamma[m][k][(j, i)] = dgamma[m][k][(i, j)];
                }
            }
        }
    }

    let mut scal = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let mut ric = 0.0;
            for k in 0..3 {
                ric += dgamma[k][k][(i, j)] - dgamma[i][k][(k, j)];
                for l in 0..3 {
                    ric += gamma[k][(k, l)] * gamma[l][(i, j)] - gamma[k][(i, l)] * gamma[l][(k, j)];
                }
            }
            scal += ginv[(i, j)] * ric;
        }
    }
    Ok(scal)
}

/// Jet of the reference hyperbolic metric `b` at a point (exact).
pub fn hyperbolic_metric_jet(p: Point) -> MetricJet {
    let r = p.r;
    let st = p.theta.sin();
    let ct = p.theta.cos();
    let v = 1.0 + r * r;

    let mut g = Matrix3::zeros();
    g[(0, 0)] = 1.0 / v;
    g[(1, 1)] = r * r;
    g[(2, 2)] = r * r * st * st;

    let mut dg = [Matrix3::zeros(); 3];
    dg[0][(0, 0)] = -2.0 * r / (v * v);
    dg[0][(1, 1)] = 2.0 * r;
    dg[0][(2, 2)] = 2.0 * r * st * st;
    dg[1][(2, 2)] = 2.0 * r * r * st * ct;

    let mut d2g = [[Matrix3::zeros(); 3]; 3];
    d2g[0][0][(0, 0)] = (6.0 * r * r - 2.0) / (v * v * v);
    d2g[0][0][(1, 1)] = 2.0;
    d2g[0][0][(2, 2)] = 2.0 * st * st;
    d2g[0][1][(2, 2)] = 4.0 * r * st * ct;
    d2g[1][0][(2, 2)] = 4.0 * r * st * ct;
    d2g[1][1][(2, 2)] = 2.0 * r * r * (ct * ct - st * st);

    MetricJet { g, dg, d2g }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_grid_has_constant_ratio() {
        let g = RadialGrid::logarithmic(2.0, 1000.0, 400).unwrap();
        assert_eq!(g.len(), 400);
        assert_abs_diff_eq!(g.inner(), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.outer(), 1000.0, epsilon = 1e-10);
        let q0 = g.nodes()[1] / g.nodes()[0];
        for w in g.nodes().windows(2) {
            assert!(((w[1] / w[0]) / q0 - 1.0).abs() < GRID_TOL);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        // degree up to 15 exact
        for deg in 0..=15usize {
            let num: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            assert_abs_diff_eq!(num, exact, epsilon = 1e-13);
        }
    }

    #[test]
    fn sphere_weights_sum_to_4pi() {
        let grid = SphereGrid::new(16);
        let total: f64 = grid.iter_nodes().map(|(_, _, _, _, w)| w).sum();
        assert_abs_diff_eq!(total, 4.0 * std::f64::consts::PI, epsilon = 1e-12 * total);
    }

    #[test]
    fn sphere_integrates_cos2_theta() {
        // closed form: ∫ cos²θ dμ = 4π/3
        let grid = SphereGrid::new(16);
        let v = grid.integrate_fn(|t, _| t.cos().powi(2));
        assert_abs_diff_eq!(v, 4.0 * std::f64::consts::PI / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn christoffel_of_hyperbolic_metric() {
        // Γ^r_rr = −r/(1+r²) = −1/2 at r = 1
        let jet = hyperbolic_metric_jet(Point::radial(1.0));
        let gamma = christoffel_symbols(&jet.g, &jet.dg).unwrap();
        assert_abs_diff_eq!(gamma[0][(0, 0)], -0.5, epsilon = 1e-14);
        // block structure: Γ^r_{rμ} = 0
        assert_abs_diff_eq!(gamma[0][(0, 1)], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(gamma[0][(0, 2)], 0.0, epsilon = 1e-14);

        // Γ^r_θθ = −½(1+r²)∂_r(r²) = −10 at r = 2
        let jet = hyperbolic_metric_jet(Point::radial(2.0));
        let gamma = christoffel_symbols(&jet.g, &jet.dg).unwrap();
        assert_abs_diff_eq!(gamma[0][(1, 1)], -10.0, epsilon = 1e-12);
    }

    #[test]
    fn christoffel_symmetric_in_lower_indices() {
        let jet = hyperbolic_metric_jet(Point::new(3.0, 0.7, 1.1));
        let gamma = christoffel_symbols(&jet.g, &jet.dg).unwrap();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(gamma[k][(i, j)], gamma[k][(j, i)]);
                }
            }
        }
    }

    #[test]
    fn hyperbolic_scalar_curvature_is_minus_six() {
        for &r in &[0.5, 1.0, 2.0, 10.0, 100.0] {
            let jet = hyperbolic_metric_jet(Point::new(r, 1.0, 0.3));
            let scal = scalar_curvature_from_jet(&jet).unwrap();
            assert_abs_diff_eq!(scal, -6.0, epsilon = 1e-9 * (1.0 + r * r));
        }
    }

    #[test]
    fn degenerate_metric_is_rejected() {
        let g = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, -1.0, 1.0));
        assert!(inverse_spd(&g).is_err());
    }
}
