//! Real spherical harmonics: transforms, pointwise evaluation with angular
//! derivatives, and the Poisson solve on the round sphere.
//!
//! The basis is orthonormal on `S²`:
//! `Y_{ℓ0} = P̄_{ℓ0}(cos θ)`,
//! `Y_{ℓm} = √2 P̄_{ℓm}(cos θ) cos mφ` for `m > 0`,
//! `Y_{ℓ,−m} = √2 P̄_{ℓm}(cos θ) sin mφ` for `m > 0`,
//! with `P̄` the fully normalized associated Legendre functions.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::SphereGrid;

/// Relative mean-zero tolerance accepted by the sphere Poisson solver.
pub(crate) const POISSON_MEAN_TOL: f64 = 1e-9;

/// Normalized associated Legendre values `P̄_{ℓm}(cos θ)` for all `ℓ ≤ lmax`
/// at a fixed order `m`, by the standard stable recurrence.
fn normalized_legendre_column(lmax: usize, m: usize, ct: f64, st: f64) -> Vec<f64> {
    let mut p = vec![0.0; lmax + 1];
    if m > lmax {
        return p;
    }
    // P̄_mm
    let mut pmm = (1.0 / (4.0 * std::f64::consts::PI)).sqrt();
    for k in 1..=m {
        pmm *= -(((2 * k + 1) as f64) / ((2 * k) as f64)).sqrt() * st;
    }
    p[m] = pmm;
    if m + 1 <= lmax {
        p[m + 1] = ((2 * m + 3) as f64).sqrt() * ct * pmm;
    }
    for l in (m + 2)..=lmax {
        let lf = l as f64;
        let mf = m as f64;
        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
        let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
        p[l] = a * (ct * p[l - 1] - b * p[l - 2]);
    }
    p
}

/// `d P̄_{ℓm}/dθ` from the column of values at the same `(θ, m)`.
fn legendre_dtheta(l: usize, m: usize, ct: f64, st: f64, p: &[f64]) -> f64 {
    if l == 0 {
        return 0.0;
    }
    let lf = l as f64;
    let mf = m as f64;
    let below = if l >= 1 && m <= l - 1 { p[l - 1] } else { 0.0 };
    let e = ((2.0 * lf + 1.0) * (lf * lf - mf * mf) / (2.0 * lf - 1.0)).sqrt();
    (lf * ct * p[l] - e * below) / st
}

/// Coefficient table of a real band-limited function on `S²`.
///
/// Index layout: coefficient of `(ℓ, m)` lives at `ℓ² + ℓ + m`,
/// `−ℓ ≤ m ≤ ℓ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicCoeffs {
    lmax: usize,
    coeffs: Vec<f64>,
}

impl HarmonicCoeffs {
    pub fn zero(lmax: usize) -> Self {
        HarmonicCoeffs {
            lmax,
            coeffs: vec![0.0; (lmax + 1) * (lmax + 1)],
        }
    }

    /// A single unit-coefficient harmonic.
    pub fn delta(lmax: usize, l: usize, m: i64) -> Self {
        let mut c = Self::zero(lmax);
        c.set(l, m, 1.0);
        c
    }

    /// Constant function `value` on the sphere (`Y_00` has value `1/√(4π)`).
    pub fn constant(lmax: usize, value: f64) -> Self {
        let mut c = Self::zero(lmax);
        c.set(0, 0, value * (4.0 * std::f64::consts::PI).sqrt());
        c
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    fn idx(&self, l: usize, m: i64) -> usize {
        debug_assert!(l <= self.lmax && m.unsigned_abs() as usize <= l);
        ((l * l + l) as i64 + m) as usize
    }

    pub fn get(&self, l: usize, m: i64) -> f64 {
        self.coeffs[self.idx(l, m)]
    }

    pub fn set(&mut self, l: usize, m: i64, value: f64) {
        let i = self.idx(l, m);
        self.coeffs[i] = value;
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Mean of the represented function over the sphere.
    pub fn mean(&self) -> f64 {
        self.get(0, 0) / (4.0 * std::f64::consts::PI).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        HarmonicCoeffs {
            lmax: self.lmax,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.lmax, other.lmax, "degree mismatch");
        HarmonicCoeffs {
            lmax: self.lmax,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// Coefficients of `Δ^{S²}` applied to the function: multiply each
    /// `(ℓ, m)` entry by `−ℓ(ℓ+1)`.
    pub fn laplacian(&self) -> Self {
        let mut out = self.clone();
        for l in 0..=self.lmax {
            let eig = -((l * (l + 1)) as f64);
            for m in -(l as i64)..=(l as i64) {
                let i = out.idx(l, m);
                out.coeffs[i] *= eig;
            }
        }
        out
    }

    /// Evaluate the function and its angular derivatives at `(θ, φ)`.
    ///
    /// Returns `(f, f_θ, f_φ, f_θθ, f_θφ, f_φφ)`; the second θ-derivative
    /// uses the associated Legendre equation, so no finite differences are
    /// involved anywhere.
    pub fn eval_jet(&self, theta: f64, phi: f64) -> HarmonicJet {
        let ct = theta.cos();
        let st = theta.sin();
        let cot = ct / st;
        let mut out = HarmonicJet::default();
        for m in 0..=self.lmax {
            let p = normalized_legendre_column(self.lmax, m, ct, st);
            let (cm, sm) = ((m as f64 * phi).cos(), (m as f64 * phi).sin());
            for l in m..=self.lmax {
                let (cpos, cneg) = if m == 0 {
                    (self.get(l, 0), 0.0)
                } else {
                    (self.get(l, m as i64), self.get(l, -(m as i64)))
                };
                if cpos == 0.0 && cneg == 0.0 {
                    continue;
                }
                let norm = if m == 0 { 1.0 } else { 2.0_f64.sqrt() };
                let pt = p[l];
                let dpt = legendre_dtheta(l, m, ct, st, &p);
                // θθ from the Legendre ODE: P'' = −cotθ P' − (ℓ(ℓ+1) − m²/sin²θ) P
                let ddpt =
                    -cot * dpt - ((l * (l + 1)) as f64 - (m * m) as f64 / (st * st)) * pt;

                let ang = cpos * cm + cneg * sm; // φ-factor combination
                let dang = m as f64 * (-cpos * sm + cneg * cm);
                let ddang = -((m * m) as f64) * ang;

                out.f += norm * pt * ang;
                out.f_t += norm * dpt * ang;
                out.f_p += norm * pt * dang;
                out.f_tt += norm * ddpt * ang;
                out.f_tp += norm * dpt * dang;
                out.f_pp += norm * pt * ddang;
            }
        }
        out
    }

    /// Value only (convenience wrapper over [`Self::eval_jet`]).
    pub fn eval(&self, theta: f64, phi: f64) -> f64 {
        self.eval_jet(theta, phi).f
    }

    /// Samples on a sphere grid, row-major.
    pub fn synthesize(&self, grid: &SphereGrid) -> Vec<f64> {
        let nphi = grid.phis().len();
        let mut out = vec![0.0; grid.node_count()];
        for (i, &t) in grid.thetas().iter().enumerate() {
            for (j, &p) in grid.phis().iter().enumerate() {
                out[i * nphi + j] = self.eval(t, p);
            }
        }
        out
    }

    /// Project samples onto the basis by quadrature. Exact (to roundoff) for
    /// band-limited samples when `grid.degree() ≥ lmax + band limit`.
    pub fn analyze(grid: &SphereGrid, samples: &[f64], lmax: usize) -> Self {
        assert_eq!(samples.len(), grid.node_count(), "sample count mismatch");
        let nphi = grid.phis().len();
        let mut out = Self::zero(lmax);
        for m in 0..=lmax {
            for (i, &t) in grid.thetas().iter().enumerate() {
                let ct = t.cos();
                let st = t.sin();
                let p = normalized_legendre_column(lmax, m, ct, st);
                for (j, &ph) in grid.phis().iter().enumerate() {
                    let w = grid.weight(i, j);
                    let s = samples[i * nphi + j];
                    let (cm, sm) = ((m as f64 * ph).cos(), (m as f64 * ph).sin());
                    let norm = if m == 0 { 1.0 } else { 2.0_f64.sqrt() };
                    for l in m..=lmax {
                        let base = w * s * norm * p[l];
                        let ip = out.idx(l, m as i64);
                        out.coeffs[ip] += base * cm;
                        if m > 0 {
                            let im = out.idx(l, -(m as i64));
                            out.coeffs[im] += base * sm;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Value and angular derivatives of a harmonic expansion at a point.
#[derive(Clone, Copy, Debug, Default)]
pub struct HarmonicJet {
    pub f: f64,
    pub f_t: f64,
    pub f_p: f64,
    pub f_tt: f64,
    pub f_tp: f64,
    pub f_pp: f64,
}

impl HarmonicJet {
    /// Pointwise round-sphere Laplacian `f_θθ + cot θ f_θ + f_φφ/sin²θ`.
    pub fn laplacian(&self, theta: f64) -> f64 {
        let st = theta.sin();
        self.f_tt + self.f_t * theta.cos() / st + self.f_pp / (st * st)
    }
}

/// Solve `Δ^{S²} ψ = rhs` for mean-zero `ψ`.
///
/// Coefficientwise `ψ_{ℓm} = −rhs_{ℓm}/(ℓ(ℓ+1))` for `ℓ ≥ 1`. The right-hand
/// side must be mean-zero (the Laplacian is not surjective onto constants).
pub fn solve_sphere_poisson(rhs: &HarmonicCoeffs) -> Result<HarmonicCoeffs> {
    let scale = rhs.coeffs().iter().fold(0.0_f64, |a, c| a.max(c.abs()));
    let mean = rhs.get(0, 0);
    if mean.abs() > POISSON_MEAN_TOL * scale.max(1.0) {
        return Err(CoreError::UnsolvableRhs {
            mean: rhs.mean(),
        });
    }
    let mut psi = HarmonicCoeffs::zero(rhs.lmax());
    for l in 1..=rhs.lmax() {
        let eig = (l * (l + 1)) as f64;
        for m in -(l as i64)..=(l as i64) {
            psi.set(l, m, -rhs.get(l, m) / eig);
        }
    }
    Ok(psi)
}
