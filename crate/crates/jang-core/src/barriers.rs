//! Upper and lower barriers for the Jang equation.
//!
//! Barriers have the separated form `f±(r,θ,φ) = φ±(r) + ψ(θ,φ)`. The
//! substitution
//!
//! ```text
//! k(r) = φ'(r)√(1+r²) / √(1 + (1+r²)φ'(r)²)
//! ```
//!
//! turns the radial Jang operator into a first-order expression in `k`, and
//! the barriers are built from solutions of the one-sided bounding ODEs
//!
//! ```text
//! k' + (2/r)(k − r/√(1+r²)) − (1−k²)/√(1+r²) − α√(1−k²)/(r²√(1+r²))
//!    ± [C-terms] (+ lower-side bracket) = 0,
//! ```
//!
//! integrated from `k±(r0) = ∓1` (vertical tangency of `φ±` at the inner
//! radius). Solutions approach `r/√(1+r²) + α/r³ + O(r⁻⁴⁺)`, so the
//! integration is carried out for the deviation `δ = k − r/√(1+r²)`, which
//! keeps the `α/r³` tail above roundoff on wide radial ranges.

use std::cell::Cell;
use std::io::Write as _;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::fitting::fit_constant_plus_power;
use crate::geometry::{inverse_spd, Point, RadialGrid, SphereGrid};
use crate::harmonics::{solve_sphere_poisson, HarmonicCoeffs};
use crate::initial_data::{energy_wang, make_wang_data, WangDataSpec};
use crate::ode::integrate_to_nodes;

/// Which bounding ODE: the upper barrier carries `+C` correction terms, the
/// lower barrier `−C` terms plus its extra bracket.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BarrierSide {
    Upper,
    Lower,
}

/// Structure constants of the bounding ODEs together with `α` and the inner
/// radius `r0`.
#[derive(Clone, Debug)]
pub struct BarrierODEParams {
    /// `C1..C8` in order; all nonnegative.
    pub c: [f64; 8],
    pub alpha: f64,
    pub r0: f64,
}

/// `r/√(1+r²)`, the exact profile of the unit hyperboloid.
pub fn k_hyperboloid(r: f64) -> f64 {
    r / (1.0 + r * r).sqrt()
}

impl BarrierODEParams {
    /// Validate nonnegativity and the sign conditions at `k = ±1`, `r = r0`
    /// that let the solutions leave `∓1` into `(−1, 1)` and stay there.
    pub fn new(c: [f64; 8], alpha: f64, r0: f64) -> Result<Self> {
        if c.iter().any(|&ci| !(ci >= 0.0)) {
            return Err(CoreError::Validation(
                "barrier constants must be nonnegative".into(),
            ));
        }
        if !(r0 > 0.0) {
            return Err(CoreError::Validation("r0 must be positive".into()));
        }
        let params = BarrierODEParams { c, alpha, r0 };
        params.check_sign_conditions()?;
        Ok(params)
    }

    /// `k' > 0` at `(r0, −1)` and `k' < 0` at `(r0, +1)` for both sides:
    /// trajectories are pushed into the open interval.
    fn check_sign_conditions(&self) -> Result<()> {
        for side in [BarrierSide::Upper, BarrierSide::Lower] {
            let up = ode_rhs(side, self.r0, -1.0, self)?;
            let down = ode_rhs(side, self.r0, 1.0, self)?;
            if !(up > 0.0 && down < 0.0) {
                return Err(CoreError::Validation(format!(
                    "sign conditions fail at r0 = {}: k'(-1) = {up:.3e}, k'(+1) = {down:.3e}; \
                     r0 is too small for these constants",
                    self.r0
                )));
            }
        }
        Ok(())
    }

    /// Same constants with a different inner radius (used by the retry loop).
    fn with_r0(&self, r0: f64) -> Result<Self> {
        BarrierODEParams::new(self.c, self.alpha, r0)
    }
}

/// Slope of the bounding ODE solved for `k'` at a point `(r, k)`.
pub fn ode_rhs(side: BarrierSide, r: f64, k: f64, params: &BarrierODEParams) -> Result<f64> {
    if k.abs() > 1.0 {
        return Err(CoreError::Validation(format!(
            "ode_rhs requires |k| <= 1, got k = {k}"
        )));
    }
    let delta = k - k_hyperboloid(r);
    // k' = δ' + k₀' with k₀' = (1+r²)^{−3/2}
    Ok(rhs_from_deviation(side, r, delta, params) + (1.0 + r * r).powf(-1.5))
}

/// `k'` in terms of the deviation `δ = k − r/√(1+r²)`, with the quadratic
/// cancellation `1−k² = 1/(1+r²) − 2k₀δ − δ²` written out explicitly so the
/// slope is accurate when `δ` is many orders below `k`.
fn rhs_from_deviation(side: BarrierSide, r: f64, delta: f64, params: &BarrierODEParams) -> f64 {
    let v = 1.0 + r * r;
    let sq = v.sqrt();
    let k0 = r / sq;
    let k = k0 + delta;
    // deviation form keeps 1−k² accurate when δ ≪ 1; at k = ±1 it leaves
    // O(ε) roundoff whose square root would pollute the degenerate factors,
    // so fall back to the exact product when the cancellation bottoms out
    let cancel = 2.0 * k0 * delta + delta * delta;
    let one_minus_k2 = if cancel.abs() < 0.5 / v {
        (1.0 / v - cancel).max(0.0)
    } else {
        // grouping the factors around k₀ reproduces δ = ∓1 − k₀ exactly
        (((1.0 - k0) - delta) * ((1.0 + k0) + delta)).max(0.0)
    };
    let root = one_minus_k2.sqrt();

    // k' for the C-free equation: −(2/r)δ + ((1−k²) − (1−k₀²))/√(1+r²)
    // + α√(1−k²)/(r²√(1+r²)); the (1−k₀²)/√(1+r²) part is exactly k₀'.
    let base = -2.0 * delta / r - (2.0 * k0 * delta + delta * delta) / sq
        + params.alpha * root / (r * r * sq);

    let [c1, c2, c3, c4, c5, c6, c7, c8] = params.c;
    let r2 = r * r;
    let bracket = c1 / r2 * (root / sq - 3.0 * k / r2 + 2.0 / r2).abs()
        + c2 / r2 * (root / sq - 1.0 / r2).abs()
        + c3 / (r2 * r) * delta.abs()
        + c4 / (r2 * r) * k.abs() * one_minus_k2
        + c5 / (r2 * r) * one_minus_k2
        + c6 / (r2 * r2 * r);

    match side {
        BarrierSide::Upper => base - bracket,
        BarrierSide::Lower => {
            let extra = c7 * (3.0 - k * k) / r
                * ((1.0 + c8 * one_minus_k2 / r2).powf(1.5) - 1.0);
            base + bracket + extra
        }
    }
}

/// `φ' = k/√((1−k²)(1+r²))`, in deviation form.
fn phi_prime_from_deviation(r: f64, delta: f64) -> f64 {
    let v = 1.0 + r * r;
    let k0 = r / v.sqrt();
    let k = k0 + delta;
    let one_minus_k2 = (1.0 / v - 2.0 * k0 * delta - delta * delta).max(0.0);
    k / (one_minus_k2 * v).sqrt()
}

/// Raw output of one barrier integration: deviation samples and the
/// unnormalized profile.
struct ProfileIvp {
    delta: Vec<f64>,
    phi_raw: Vec<f64>,
}

/// Integrate `(δ, φ)` jointly over the grid, starting from the given
/// deviation at the first node. `series_offset` is the analytic `φ`
/// increment over the initial singular layer (zero when starting from a
/// regular value of `k`).
fn integrate_profile(
    side: BarrierSide,
    params: &BarrierODEParams,
    grid: &RadialGrid,
    delta_start: f64,
    start_r: f64,
    phi_at_start: f64,
) -> Result<ProfileIvp> {
    let mut nodes = vec![start_r];
    nodes.extend(grid.nodes().iter().copied().filter(|&r| r > start_r));
    if nodes.len() < 2 {
        return Err(CoreError::InvalidGrid(
            "barrier grid has no nodes beyond the starting layer".into(),
        ));
    }
    let escaped = Cell::new(None::<f64>);
    let sol = integrate_to_nodes(
        |r, y, dy| {
            let delta = y[0];
            let v = 1.0 + r * r;
            let k0 = r / v.sqrt();
            if (1.0 / v - 2.0 * k0 * delta - delta * delta) < -1e-14 && escaped.get().is_none() {
                escaped.set(Some(r));
            }
            dy[0] = rhs_from_deviation(side, r, delta, params);
            dy[1] = phi_prime_from_deviation(r, delta);
        },
        &nodes,
        &[delta_start, phi_at_start],
        1e-10,
        1e-16,
    )?;
    if let Some(r) = escaped.get() {
        return Err(CoreError::BarrierFailure { r, r0: params.r0 });
    }

    // map integration nodes back onto the grid
    let mut delta = Vec::with_capacity(grid.len());
    let mut phi_raw = Vec::with_capacity(grid.len());
    let mut si = 0;
    for &r in grid.nodes() {
        if r <= start_r {
            // covered by the caller's series layer
            delta.push(f64::NAN);
            phi_raw.push(f64::NAN);
        } else {
            si += 1;
            delta.push(sol[si][0]);
            phi_raw.push(sol[si][1]);
        }
    }
    Ok(ProfileIvp { delta, phi_raw })
}

/// Solve the bounding ODE from the barrier start `k(r0) = ∓1` on the grid
/// (whose first node must be `r0`). Returns `k` samples; errors with a
/// barrier failure if the trajectory reaches `|k| = 1` beyond `r0`.
pub fn solve_barrier_ivp(
    side: BarrierSide,
    params: &BarrierODEParams,
    grid: &RadialGrid,
) -> Result<Vec<f64>> {
    Ok(barrier_profile(side, params, grid)?.0)
}

/// Solve the bounding ODE from a regular start value `k(grid[0]) = k_start`
/// with `|k_start| < 1`. Used when the exact profile at the inner node is
/// known (e.g. the C-free, `α = 0` equation has the solution `r/√(1+r²)`).
pub fn solve_barrier_ivp_from(
    side: BarrierSide,
    params: &BarrierODEParams,
    grid: &RadialGrid,
    k_start: f64,
) -> Result<Vec<f64>> {
    if k_start.abs() >= 1.0 {
        return Err(CoreError::Validation(
            "regular start requires |k| < 1; use solve_barrier_ivp for the singular start".into(),
        ));
    }
    let r0 = grid.inner();
    let ivp = integrate_profile(
        side,
        params,
        grid,
        k_start - k_hyperboloid(r0),
        r0,
        0.0,
    )?;
    let mut k = Vec::with_capacity(grid.len());
    for (i, &r) in grid.nodes().iter().enumerate() {
        if i == 0 {
            k.push(k_start);
        } else {
            check_interior_bound(r, ivp.delta[i], params.r0)?;
            k.push(k_hyperboloid(r) + ivp.delta[i]);
        }
    }
    Ok(k)
}

fn check_interior_bound(r: f64, delta: f64, r0: f64) -> Result<()> {
    let k = k_hyperboloid(r) + delta;
    if k.abs() >= 1.0 {
        return Err(CoreError::BarrierFailure { r, r0 });
    }
    Ok(())
}

/// Full profile solve from the singular start: returns `(k, φ_raw)` samples
/// with `φ_raw(r0) = 0` and no normalization applied.
fn barrier_profile(
    side: BarrierSide,
    params: &BarrierODEParams,
    grid: &RadialGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let r0 = grid.inner();
    if (r0 - params.r0).abs() > 1e-12 * params.r0 {
        return Err(CoreError::InvalidGrid(format!(
            "grid must start at r0 = {}, got {r0}",
            params.r0
        )));
    }
    let k_init = match side {
        BarrierSide::Upper => -1.0,
        BarrierSide::Lower => 1.0,
    };
    // slope at the singular start; the sign conditions guarantee it points
    // into (−1, 1)
    let kappa = ode_rhs(side, r0, k_init, params)?;

    // explicit series layer: k ≈ k_init + κ(r − r0); φ' ~ ((r−r0))^{−1/2} is
    // integrable, with ∫ = sign(k_init)·√(2h/|κ|)/√(1+r0²) over the layer
    let h0 = (1e-3 * r0).min(0.5 * (grid.nodes()[1] - r0));
    let start_r = r0 + h0;
    let k_at_start = k_init + kappa * h0;
    let phi_layer = k_init.signum() * (2.0 * h0 / kappa.abs()).sqrt() / (1.0 + r0 * r0).sqrt();

    let ivp = integrate_profile(
        side,
        params,
        grid,
        k_at_start - k_hyperboloid(start_r),
        start_r,
        phi_layer,
    )?;
    let mut k = Vec::with_capacity(grid.len());
    let mut phi = Vec::with_capacity(grid.len());
    for (i, &r) in grid.nodes().iter().enumerate() {
        if r <= start_r {
            k.push(k_init);
            phi.push(0.0);
        } else {
            check_interior_bound(r, ivp.delta[i], params.r0)?;
            k.push(k_hyperboloid(r) + ivp.delta[i]);
            phi.push(ivp.phi_raw[i]);
        }
    }
    Ok((k, phi))
}

/// Integrate `φ' = k/√((1−k²)(1+r²))` for given `k` samples on the grid and
/// normalize so that `φ(r) − r − α ln r → 0` (least-squares over the last
/// decade with a `c + d/r` model).
///
/// The samples must satisfy `|k| < 1` strictly beyond the first node; a
/// vertical tangency at the inner node is handled by the square-root layer.
pub fn integrate_phi(k: &[f64], grid: &RadialGrid, alpha: f64) -> Result<Vec<f64>> {
    assert_eq!(k.len(), grid.len(), "sample count mismatch");
    for (i, &ki) in k.iter().enumerate().skip(1) {
        if ki.abs() >= 1.0 {
            return Err(CoreError::BarrierFailure {
                r: grid.nodes()[i],
                r0: grid.inner(),
            });
        }
    }
    // trapezoid in r on φ' reconstructed from k; near a singular start the
    // first interval uses the square-root layer value
    let nodes = grid.nodes();
    let mut phi = vec![0.0; grid.len()];
    let fprime = |i: usize| -> f64 {
        let r = nodes[i];
        let v = 1.0 + r * r;
        k[i] / ((1.0 - k[i] * k[i]) * v).sqrt()
    };
    for i in 1..grid.len() {
        let h = nodes[i] - nodes[i - 1];
        if i == 1 && k[0].abs() >= 1.0 {
            // square-root layer: φ' ≈ c/√(r−r0), so ∫ over the first
            // interval is 2√h·c = 2h·φ'(r1)
            phi[1] = phi[0] + 2.0 * h * fprime(1);
        } else {
            phi[i] = phi[i - 1] + 0.5 * h * (fprime(i - 1) + fprime(i));
        }
    }
    Ok(normalize_phi(&phi, grid, alpha))
}

/// Subtract the fitted vertical-translation constant: match
/// `φ(r) − r − α ln r` to `c + d/r` over the last decade and remove `c`.
fn normalize_phi(phi_raw: &[f64], grid: &RadialGrid, alpha: f64) -> Vec<f64> {
    let idx = grid.last_decade();
    let r: Vec<f64> = idx.iter().map(|&i| grid.nodes()[i]).collect();
    let y: Vec<f64> = idx
        .iter()
        .map(|&i| phi_raw[i] - grid.nodes()[i] - alpha * grid.nodes()[i].ln())
        .collect();
    let (c, _, _) = fit_constant_plus_power(&r, &y, 1.0);
    phi_raw.iter().map(|p| p - c).collect()
}

/// Structure constants sampled from Wang data: sup-norms of the angular
/// traces and of the `|dψ|²`-type coefficient functions, plus a sampled
/// bound on the subleading data remainders over the tail grid.
pub fn constants_from_data(
    spec: &WangDataSpec,
    tail: &RadialGrid,
    sphere: &SphereGrid,
    r0: f64,
) -> Result<BarrierODEParams> {
    let alpha = 2.0 * energy_wang(spec);
    let psi = psi_from_spec(spec, alpha)?;

    // sup of tr^σ m, tr^σ p, and the round-sphere gradient |dψ|²_σ
    let trm = spec.m.trace_sigma();
    let trp = spec.p.trace_sigma();
    let mut sup_trm = 0.0_f64;
    let mut sup_trp = 0.0_f64;
    let mut s_grad = 0.0_f64;
    for (_, _, t, p, _) in sphere.iter_nodes() {
        sup_trm = sup_trm.max(trm.eval(t, p).abs());
        sup_trp = sup_trp.max(trp.eval(t, p).abs());
        let j = psi.eval_jet(t, p);
        let grad2 = j.f_t * j.f_t + (j.f_p / t.sin()).powi(2);
        s_grad = s_grad.max(grad2);
    }

    // sampled bound on the r⁻⁵ remainder sources: deviation of the angular
    // traces of K − g and of g^{μν}∂_r g_{μν} from their leading models
    let data = make_wang_data(spec)?;
    let mut c6 = 0.0_f64;
    for &r in tail.nodes() {
        for (_, _, t, p, _) in sphere.iter_nodes() {
            let pt = Point::new(r, t, p);
            let gj = data.metric_jet(pt);
            let kj = data.k_jet(pt);
            let ginv = inverse_spd(&gj.g)?;
            let (trm_v, trp_v) = (trm.eval(t, p), trp.eval(t, p));
            let r3 = r * r * r;

            let mut tr_c = 0.0;
            let mut tr_drg = 0.0;
            for mu in 1..3 {
                for nu in 1..3 {
                    tr_c += ginv[(mu, nu)] * (kj.k[(mu, nu)] - gj.g[(mu, nu)]);
                    tr_drg += ginv[(mu, nu)] * gj.dg[0][(mu, nu)];
                }
            }
            let d1 = (tr_c - (trp_v - trm_v) / r3).abs();
            let d2 = 0.5 * (tr_drg - (4.0 / r - 3.0 * trm_v / (r3 * r))).abs();
            // the trace deviation enters the normalized radial operator
            // divided by √(1+r²), the log-derivative deviation undivided
            let r5 = r3 * r * r;
            c6 = c6.max(r5 / (1.0 + r * r).sqrt() * d1 + r5 * d2);
        }
    }

    let c = [
        0.5 * sup_trm,
        sup_trp,
        2.0 * s_grad,
        3.0 * s_grad,
        3.0 * s_grad,
        2.0 * c6,
        if s_grad > 0.0 { 1.0 } else { 0.0 },
        s_grad,
    ];
    BarrierODEParams::new(c, alpha, r0)
}

/// The angular part `ψ` of the barrier ansatz:
/// `Δ^{S²}ψ = ½ tr^σ m + tr^σ p − α`, mean zero.
pub fn psi_from_spec(spec: &WangDataSpec, alpha: f64) -> Result<HarmonicCoeffs> {
    let lmax = spec.m.lmax();
    let rhs = spec
        .m
        .trace_sigma()
        .scaled(0.5)
        .add(&spec.p.trace_sigma())
        .add(&HarmonicCoeffs::constant(lmax, -alpha));
    solve_sphere_poisson(&rhs)
}

/// Assembled barrier pair on a radial grid.
#[derive(Clone, Debug)]
pub struct BarrierSolution {
    grid: RadialGrid,
    params: BarrierODEParams,
    k_plus: Vec<f64>,
    k_minus: Vec<f64>,
    phi_plus: Vec<f64>,
    phi_minus: Vec<f64>,
    psi: HarmonicCoeffs,
}

impl BarrierSolution {
    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn params(&self) -> &BarrierODEParams {
        &self.params
    }

    pub fn k_plus(&self) -> &[f64] {
        &self.k_plus
    }

    pub fn k_minus(&self) -> &[f64] {
        &self.k_minus
    }

    pub fn phi_plus(&self) -> &[f64] {
        &self.phi_plus
    }

    pub fn phi_minus(&self) -> &[f64] {
        &self.phi_minus
    }

    pub fn psi(&self) -> &HarmonicCoeffs {
        &self.psi
    }

    /// `f₊ − f₋` at node `i` (independent of the angle: the ψ parts cancel).
    pub fn f_gap(&self, i: usize) -> f64 {
        self.phi_plus[i] - self.phi_minus[i]
    }

    /// Barrier values at node `i` and angles `(θ, φ)`.
    pub fn f_plus_at(&self, i: usize, theta: f64, phi: f64) -> f64 {
        self.phi_plus[i] + self.psi.eval(theta, phi)
    }

    pub fn f_minus_at(&self, i: usize, theta: f64, phi: f64) -> f64 {
        self.phi_minus[i] + self.psi.eval(theta, phi)
    }

    /// Radial part `φ±` at node `i`.
    pub fn phi(&self, side: BarrierSide, i: usize) -> f64 {
        match side {
            BarrierSide::Upper => self.phi_plus[i],
            BarrierSide::Lower => self.phi_minus[i],
        }
    }

    fn k_of(&self, side: BarrierSide, i: usize) -> f64 {
        match side {
            BarrierSide::Upper => self.k_plus[i],
            BarrierSide::Lower => self.k_minus[i],
        }
    }

    /// Analytic `φ'` at node `i` from the `k` sample; infinite at a vertical
    /// tangency (first node).
    pub fn phi_prime(&self, side: BarrierSide, i: usize) -> f64 {
        let r = self.grid.nodes()[i];
        let k = self.k_of(side, i);
        k / ((1.0 - k * k).max(0.0) * (1.0 + r * r)).sqrt()
    }

    /// Analytic `φ''` at node `i`, using the bounding ODE for `k'`:
    /// differentiating `φ' = k/W` with `W = √((1−k²)(1+r²))` gives
    /// `φ'' = k'/W − k·(−2kk'(1+r²) + 2r(1−k²))/(2W³)`.
    pub fn phi_second(&self, side: BarrierSide, i: usize) -> Result<f64> {
        let r = self.grid.nodes()[i];
        let k = self.k_of(side, i);
        let kp = ode_rhs(side, r, k.clamp(-1.0, 1.0), &self.params)?;
        let v = 1.0 + r * r;
        let w2 = (1.0 - k * k) * v;
        let w = w2.sqrt();
        Ok(kp / w - k * (-2.0 * k * kp * v + 2.0 * r * (1.0 - k * k)) / (2.0 * w2 * w))
    }

    /// Write the profile table: `r, k_plus, k_minus, phi_plus, phi_minus,
    /// f_gap` with 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "r,k_plus,k_minus,phi_plus,phi_minus,f_gap")?;
        for i in 0..self.grid.len() {
            writeln!(
                f,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.grid.nodes()[i],
                self.k_plus[i],
                self.k_minus[i],
                self.phi_plus[i],
                self.phi_minus[i],
                self.f_gap(i)
            )?;
        }
        Ok(())
    }
}

/// Build the barrier pair for Wang data: constants from the spec, `ψ` from
/// the sphere Poisson solve, both bounding IVPs, normalized profiles, and
/// the ordering check. On a barrier failure (`|k| → 1` inside the domain)
/// the inner radius is doubled, up to six times.
pub fn assemble_barriers(
    spec: &WangDataSpec,
    r0: f64,
    r_max: f64,
    nodes_per_decade: usize,
) -> Result<BarrierSolution> {
    // the weighted remainders are scale-free in r, so a moderate window
    // suffices and avoids roundoff amplification by the r⁵ weight
    let tail = RadialGrid::logarithmic(10.0, 100.0, 16)?;
    let sphere = SphereGrid::new(2 * spec.m.lmax().max(2));
    // the constants do not depend on r0; if the requested inner radius is
    // too small for the sign conditions, validate at a large radius and let
    // the retry loop below find a workable r0
    let mut params = match constants_from_data(spec, &tail, &sphere, r0) {
        Ok(p) => p,
        Err(CoreError::Validation(_)) => constants_from_data(spec, &tail, &sphere, 1e6)?,
        Err(e) => return Err(e),
    };
    let psi = psi_from_spec(spec, params.alpha)?;

    let mut last_err = None;
    let mut r0 = r0;
    for _ in 0..=6 {
        params = match params.with_r0(r0) {
            Ok(p) => p,
            Err(e) => {
                // sign conditions not yet satisfied: treat like a failure
                last_err = Some(e);
                r0 *= 2.0;
                continue;
            }
        };
        let n = ((r_max / r0).log10() * nodes_per_decade as f64).ceil() as usize + 1;
        let grid = RadialGrid::logarithmic(r0, r_max, n.max(2))?;
        match assemble_on_grid(&params, &grid, &psi) {
            Ok(sol) => return Ok(sol),
            Err(e @ (CoreError::BarrierFailure { .. } | CoreError::OdeFailure(_))) => {
                last_err = Some(e);
                r0 *= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or(CoreError::BarrierFailure { r: r0, r0 }))
}

fn assemble_on_grid(
    params: &BarrierODEParams,
    grid: &RadialGrid,
    psi: &HarmonicCoeffs,
) -> Result<BarrierSolution> {
    let (k_plus, phi_plus_raw) = barrier_profile(BarrierSide::Upper, params, grid)?;
    let (k_minus, phi_minus_raw) = barrier_profile(BarrierSide::Lower, params, grid)?;
    let phi_plus = normalize_phi(&phi_plus_raw, grid, params.alpha);
    let phi_minus = normalize_phi(&phi_minus_raw, grid, params.alpha);

    for i in 0..grid.len() {
        let gap = phi_plus[i] - phi_minus[i];
        if gap < -1e-9 {
            return Err(CoreError::OrderingViolation {
                r: grid.nodes()[i],
                violation: -gap,
            });
        }
    }
    Ok(BarrierSolution {
        grid: grid.clone(),
        params: params.clone(),
        k_plus,
        k_minus,
        phi_plus,
        phi_minus,
        psi: psi.clone(),
    })
}
