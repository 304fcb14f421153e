//! Induced Riemannian geometry of a Jang graph.
//!
//! For a graph `t = f(x)` in `(M × ℝ, g + dt²)` this module evaluates the
//! induced metric `ḡ = g + df⊗df` (with its exact rank-one-update inverse),
//! the second fundamental form `A`, the 1-form
//! `q_i = f^j (A_{ij} − K_{ij}) / √(1+|df|²)`, the scalar curvature of `ḡ`
//! by the Schoen–Yau identity and by a direct Christoffel-symbol route, and
//! the ADM mass of the asymptotically Euclidean metric `ḡ`.
//!
//! Graphing functions are `f = φ(r) + ψ(θ,φ)` with a radial profile `φ` and
//! a band-limited angular part `ψ`; angular derivatives are analytic, radial
//! third derivatives (needed only by the direct curvature route) come from
//! finite differences of the stored `φ''`.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::barriers::{BarrierSide, BarrierSolution};
use crate::error::{CoreError, Result};
use crate::fitting::fit_constant_plus_power;
use crate::geometry::{
    christoffel_symbols, inverse_spd, scalar_curvature_from_jet, MetricJet, Point, RadialGrid,
    SphereGrid,
};
use crate::harmonics::HarmonicCoeffs;
use crate::initial_data::{compute_constraints, InitialData};
use crate::jang::fd_derivatives;

/// Radial profile evaluator returning `(φ, φ', φ'')`.
pub type RadialProfile = Box<dyn Fn(f64) -> (f64, f64, f64) + Send + Sync>;

/// A graph `t = φ(r) + ψ(θ,φ)` over an initial data set.
pub struct RadialGraph {
    data: InitialData,
    grid: RadialGrid,
    profile: RadialProfile,
    psi: HarmonicCoeffs,
}

/// Pointwise second-fundamental-form data of the graph.
#[derive(Clone, Copy, Debug)]
pub struct SecondFormSample {
    /// `A_{ij} = Hess^g_{ij} f / √(1+|df|²_g)` in polar components.
    pub a: Matrix3<f64>,
    /// Mean curvature `H^Σ = ḡ^{ij} A_{ij}`.
    pub mean_curvature: f64,
    /// `|A|²_ḡ`
    pub norm2_a: f64,
    /// `|A − K|²_ḡ`
    pub norm2_a_minus_k: f64,
}

/// Termwise breakdown of the Schoen–Yau scalar-curvature identity
/// `Scal^ḡ = 2(μ − J(w)) + |A−K|²_ḡ + 2|q|²_ḡ − 2 div^ḡ q`,
/// sampled on the tensor-product grid (outer index: radial node, inner:
/// sphere node in `iter_nodes` order).
#[derive(Clone, Debug)]
pub struct ScalarCurvatureSamples {
    pub total: Vec<Vec<f64>>,
    /// `2(μ − J(w))` with `w` the normalized gradient of `f`.
    pub energy: Vec<Vec<f64>>,
    pub norm2_a_minus_k: Vec<Vec<f64>>,
    /// `2|q|²_ḡ`
    pub norm2_q: Vec<Vec<f64>>,
    /// `div^ḡ q`
    pub div_q: Vec<Vec<f64>>,
}

struct GraphState {
    jet: MetricJet,
    kmat: Matrix3<f64>,
    df: Vector3<f64>,
    d2f: Matrix3<f64>,
    /// `1 + |df|²_g`
    w2: f64,
    /// `g^{ij} f_j`
    fup: Vector3<f64>,
    gbar: Matrix3<f64>,
    gbar_inv: Matrix3<f64>,
    a: Matrix3<f64>,
}

impl RadialGraph {
    pub fn new(
        data: &InitialData,
        grid: &RadialGrid,
        profile: RadialProfile,
        psi: &HarmonicCoeffs,
    ) -> Self {
        RadialGraph {
            data: data.clone(),
            grid: grid.clone(),
            profile,
            psi: psi.clone(),
        }
    }

    /// The asymptotic ansatz graph `f = √(1+r²) + α ln r + ψ`.
    pub fn jang_ansatz(
        data: &InitialData,
        grid: &RadialGrid,
        alpha: f64,
        psi: &HarmonicCoeffs,
    ) -> Self {
        let profile = move |r: f64| {
            let v = 1.0 + r * r;
            (
                v.sqrt() + alpha * r.ln(),
                r / v.sqrt() + alpha / r,
                v.powf(-1.5) - alpha / (r * r),
            )
        };
        Self::new(data, grid, Box::new(profile), psi)
    }

    /// Graph of one of the assembled barriers, on the barrier grid. Profile
    /// derivatives come from the barrier's `k` samples (analytic in `k`);
    /// off-node evaluation interpolates log-linearly in `r`.
    pub fn from_barrier(
        data: &InitialData,
        barriers: &BarrierSolution,
        side: BarrierSide,
    ) -> Result<Self> {
        let grid = barriers.grid().clone();
        let n = grid.len();
        let mut phi = Vec::with_capacity(n);
        let mut dphi = Vec::with_capacity(n);
        let mut d2phi = Vec::with_capacity(n);
        for i in 0..n {
            phi.push(barriers.phi(side, i));
            dphi.push(barriers.phi_prime(side, i));
            d2phi.push(barriers.phi_second(side, i)?);
        }
        let psi = barriers.psi().clone();
        Ok(Self::new(
            data,
            &grid.clone(),
            sampled_profile(grid, phi, dphi, d2phi),
            &psi,
        ))
    }

    /// Graph of a solved radial function given by node samples; first and
    /// second derivatives are taken by the solver's stencils.
    pub fn from_samples(
        data: &InitialData,
        grid: &RadialGrid,
        f: &[f64],
        psi: &HarmonicCoeffs,
    ) -> Result<Self> {
        if f.len() != grid.len() {
            return Err(CoreError::InvalidGrid(format!(
                "profile has {} samples for a {}-node grid",
                f.len(),
                grid.len()
            )));
        }
        let nodes = grid.nodes();
        let mut dphi = Vec::with_capacity(f.len());
        let mut d2phi = Vec::with_capacity(f.len());
        for i in 0..f.len() {
            let (fp, fpp) = fd_derivatives(nodes, f, i);
            dphi.push(fp);
            d2phi.push(fpp);
        }
        Ok(Self::new(
            data,
            grid,
            sampled_profile(grid.clone(), f.to_vec(), dphi, d2phi),
            psi,
        ))
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn data(&self) -> &InitialData {
        &self.data
    }

    pub fn psi(&self) -> &HarmonicCoeffs {
        &self.psi
    }

    fn is_radial(&self) -> bool {
        self.psi.coeffs().iter().skip(1).all(|&c| c == 0.0)
    }

    fn state(&self, r: f64, theta: f64, phi: f64) -> Result<GraphState> {
        let pt = Point::new(r, theta, phi);
        let jet = self.data.metric_jet(pt);
        let kmat = self.data.k_jet(pt).k;
        let (_, fp, fpp) = (self.profile)(r);
        let hj = self.psi.eval_jet(theta, phi);
        let df = Vector3::new(fp, hj.f_t, hj.f_p);
        let d2f = Matrix3::new(
            fpp, 0.0, 0.0, //
            0.0, hj.f_tt, hj.f_tp, //
            0.0, hj.f_tp, hj.f_pp,
        );
        let ginv = inverse_spd(&jet.g)?;
        let fup = ginv * df;
        let w2 = 1.0 + df.dot(&fup);
        let gbar = jet.g + df * df.transpose();
        // Sherman–Morrison: the rank-one update has the exact inverse
        let gbar_inv = ginv - fup * fup.transpose() / w2;

        let gamma = christoffel_symbols(&jet.g, &jet.dg)?;
        let mut hess = d2f;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    hess[(i, j)] -= gamma[k][(i, j)] * df[k];
                }
            }
        }
        let a = hess / w2.sqrt();
        Ok(GraphState {
            jet,
            kmat,
            df,
            d2f,
            w2,
            fup,
            gbar,
            gbar_inv,
            a,
        })
    }

    /// Induced metric and its exact inverse,
    /// `ḡ^{ij} = g^{ij} − f^i f^j/(1+|df|²_g)`.
    pub fn induced_metric(&self, r: f64, theta: f64, phi: f64) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
        let st = self.state(r, theta, phi)?;
        Ok((st.gbar, st.gbar_inv))
    }

    pub fn second_fundamental_form(&self, r: f64, theta: f64, phi: f64) -> Result<SecondFormSample> {
        let st = self.state(r, theta, phi)?;
        let amk = st.a - st.kmat;
        Ok(SecondFormSample {
            a: st.a,
            mean_curvature: (st.gbar_inv * st.a).trace(),
            norm2_a: norm2(&st.gbar_inv, &st.a),
            norm2_a_minus_k: norm2(&st.gbar_inv, &amk),
        })
    }

    /// The 1-form `q_i = f^j (A_{ij} − K_{ij}) / √(1+|df|²_g)`.
    pub fn q_oneform(&self, r: f64, theta: f64, phi: f64) -> Result<Vector3<f64>> {
        let st = self.state(r, theta, phi)?;
        let amk = st.a - st.kmat;
        Ok(amk * st.fup / st.w2.sqrt())
    }

    /// `div^ḡ q` on the tensor grid, by the flux form
    /// `(1/√ḡ) ∂_i (√ḡ ḡ^{ij} q_j)`: radial derivatives by stencil along the
    /// grid, angular ones by small centered steps — the flux is analytic in
    /// the angles, so tiny steps give near machine-precision derivatives.
    /// Angular terms are skipped exactly when `ψ` is constant (then `q` is
    /// radial on spherically symmetric data).
    pub fn q_divergence(&self, sphere: &SphereGrid) -> Result<Vec<Vec<f64>>> {
        let nodes = self.grid.nodes();
        let nr = nodes.len();
        let np = sphere.phis().len();
        let nsph = sphere.node_count();
        let angular = !(self.is_radial() && self.data.is_spherically_symmetric());

        // flux components √ḡ·Q^i; det(g + df⊗df) = det(g)·(1+|df|²) exactly
        let flux = |r: f64, theta: f64, phi: f64| -> Result<[f64; 3]> {
            let st = self.state(r, theta, phi)?;
            let q = (st.a - st.kmat) * st.fup / st.w2.sqrt();
            let qup = st.gbar_inv * q;
            let dens = (st.jet.g.determinant() * st.w2).sqrt();
            Ok([dens * qup[0], dens * qup[1], dens * qup[2]])
        };

        let mut dens = vec![vec![0.0; nsph]; nr];
        let mut radial_flux = vec![vec![0.0; nsph]; nr];
        let mut angular_div = vec![vec![0.0; nsph]; nr];
        for (ir, &r) in nodes.iter().enumerate() {
            for (it, ip, theta, phi, _) in sphere.iter_nodes() {
                let k = it * np + ip;
                let st = self.state(r, theta, phi)?;
                dens[ir][k] = (st.jet.g.determinant() * st.w2).sqrt();
                let q = (st.a - st.kmat) * st.fup / st.w2.sqrt();
                radial_flux[ir][k] = dens[ir][k] * (st.gbar_inv * q)[0];
                if angular {
                    let d = 1e-4;
                    let ft =
                        (flux(r, theta + d, phi)?[1] - flux(r, theta - d, phi)?[1]) / (2.0 * d);
                    let fp =
                        (flux(r, theta, phi + d)?[2] - flux(r, theta, phi - d)?[2]) / (2.0 * d);
                    angular_div[ir][k] = ft + fp;
                }
            }
        }
        let mut out = vec![vec![0.0; nsph]; nr];
        let mut column = vec![0.0; nr];
        for k in 0..nsph {
            for ir in 0..nr {
                column[ir] = radial_flux[ir][k];
            }
            for ir in 0..nr {
                out[ir][k] =
                    (fd_derivatives(nodes, &column, ir).0 + angular_div[ir][k]) / dens[ir][k];
            }
        }
        Ok(out)
    }

    /// Scalar curvature of `ḡ` assembled termwise from the Schoen–Yau
    /// identity. The identity presumes the graph solves the Jang equation
    /// `H = tr K`; on non-solutions the output differs from the curvature of
    /// `ḡ` at the order of the Jang residual.
    pub fn scalar_curvature_sy(&self, sphere: &SphereGrid) -> Result<ScalarCurvatureSamples> {
        let div_q = self.q_divergence(sphere)?;
        let nodes = self.grid.nodes();
        let nsph = sphere.node_count();
        let np = sphere.phis().len();
        let mut energy = vec![vec![0.0; nsph]; nodes.len()];
        let mut shear = vec![vec![0.0; nsph]; nodes.len()];
        let mut qn = vec![vec![0.0; nsph]; nodes.len()];
        let mut total = vec![vec![0.0; nsph]; nodes.len()];
        for (ir, &r) in nodes.iter().enumerate() {
            for (it, ip, theta, phi, _) in sphere.iter_nodes() {
                let k = it * np + ip;
                let st = self.state(r, theta, phi)?;
                let (mu, j_cov) = compute_constraints(&self.data, Point::new(r, theta, phi))?;
                let w = st.fup / st.w2.sqrt();
                let jw = j_cov[0] * w[0] + j_cov[1] * w[1] + j_cov[2] * w[2];
                let amk = st.a - st.kmat;
                let q = amk * st.fup / st.w2.sqrt();
                let qup = st.gbar_inv * q;
                energy[ir][k] = 2.0 * (mu - jw);
                shear[ir][k] = norm2(&st.gbar_inv, &amk);
                qn[ir][k] = 2.0 * q.dot(&qup);
                total[ir][k] = energy[ir][k] + shear[ir][k] + qn[ir][k] - 2.0 * div_q[ir][k];
            }
        }
        Ok(ScalarCurvatureSamples {
            total,
            energy,
            norm2_a_minus_k: shear,
            norm2_q: qn,
            div_q,
        })
    }

    /// Scalar curvature of `ḡ` from its Christoffel symbols (independent of
    /// the constraint quantities). Restricted to radial graphs over
    /// spherically symmetric data: there `ḡ = g + φ'² dr⊗dr` and the only
    /// derivative not available in closed form is `φ'''`, which is taken by
    /// a stencil on the stored `φ''` samples.
    pub fn scalar_curvature_direct(&self) -> Result<Vec<f64>> {
        if !self.is_radial() || !self.data.is_spherically_symmetric() {
            return Err(CoreError::Precondition(
                "direct curvature route requires a radial graph over spherically symmetric data"
                    .into(),
            ));
        }
        let nodes = self.grid.nodes();
        let d2phi: Vec<f64> = nodes.iter().map(|&r| (self.profile)(r).2).collect();
        let mut out = Vec::with_capacity(nodes.len());
        for (i, &r) in nodes.iter().enumerate() {
            let pt = Point::new(r, FRAC_PI_2, 0.0);
            let base = self.data.metric_jet(pt);
            let (_, fp, fpp) = (self.profile)(r);
            let fppp = fd_derivatives(nodes, &d2phi, i).0;
            let mut jet = base;
            jet.g[(0, 0)] += fp * fp;
            jet.dg[0][(0, 0)] += 2.0 * fp * fpp;
            jet.d2g[0][0][(0, 0)] += 2.0 * (fpp * fpp + fp * fppp);
            out.push(scalar_curvature_from_jet(&jet)?);
        }
        Ok(out)
    }

    /// Polar components of `ḡ` and `∂_r ḡ` for surface integrals; both are
    /// closed-form (no radial stencils).
    pub fn metric_field(&self, r: f64, theta: f64, phi: f64) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
        let st = self.state(r, theta, phi)?;
        // ∂_r(df⊗df) = φ''(e_r ⊗ df + df ⊗ e_r) since ψ is r-independent
        let fpp = st.d2f[(0, 0)];
        let er = Vector3::new(1.0, 0.0, 0.0);
        let dr = st.jet.dg[0] + fpp * (er * st.df.transpose() + st.df * er.transpose());
        Ok((st.gbar, dr))
    }
}

/// Log-linear interpolating profile over node samples.
fn sampled_profile(grid: RadialGrid, phi: Vec<f64>, dphi: Vec<f64>, d2phi: Vec<f64>) -> RadialProfile {
    Box::new(move |r: f64| {
        let nodes = grid.nodes();
        let j = match nodes.binary_search_by(|a| a.partial_cmp(&r).unwrap()) {
            Ok(j) => return (phi[j], dphi[j], d2phi[j]),
            Err(j) => j.clamp(1, nodes.len() - 1),
        };
        let t = (r.ln() - nodes[j - 1].ln()) / (nodes[j].ln() - nodes[j - 1].ln());
        let lerp = |v: &[f64]| v[j - 1] * (1.0 - t) + v[j] * t;
        (lerp(&phi), lerp(&dphi), lerp(&d2phi))
    })
}

/// `|T|²_ḡ = ḡ^{ik} ḡ^{jl} T_{ij} T_{kl}` for symmetric `T`.
fn norm2(gbar_inv: &Matrix3<f64>, t: &Matrix3<f64>) -> f64 {
    let up = gbar_inv * t;
    (up * up).trace()
}

/// ADM mass surface integrals and their `limit + c·R⁻¹` extrapolation.
#[derive(Clone, Debug, serde::Serialize)]
pub struct AdmMassTable {
    pub radii: Vec<f64>,
    /// Mass integral at each radius.
    pub integrals: Vec<f64>,
    /// Extrapolated limit.
    pub mass: f64,
    /// Fitted coefficient of the `R⁻¹` truncation term.
    pub truncation_coefficient: f64,
    /// Max absolute residual of the extrapolation fit; large values flag a
    /// slowly converging (or divergent) integral.
    pub fit_residual: f64,
}

impl AdmMassTable {
    /// Per-radius table: `R, mass_integral, extrapolated`.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "R,mass_integral,extrapolated")?;
        for (r, m) in self.radii.iter().zip(&self.integrals) {
            writeln!(f, "{r:.16e},{m:.16e},{:.16e}", self.mass)?;
        }
        Ok(())
    }
}

/// ADM mass of an asymptotically Euclidean metric given by polar components
/// `h(r,θ,φ)` and their radial derivatives:
/// `M = (1/16π) lim ∫_{|x|=R} (∂_i h_{ij} − ∂_j h_{ii}) x^j/|x| dμ^δ`.
///
/// In the polar chart the integrand reduces to
/// `(2/r)·h_rr + T/r³ − (∂_r T)/r²` with `T = σ^{αβ} h_{αβ}`; the remaining
/// sphere-divergence term `r⁻²σ^{αβ}∇^σ_β h_{αr}` integrates to zero over
/// each closed sphere and is dropped exactly.
pub fn adm_mass<F>(field: F, radii: &[f64], sphere: &SphereGrid) -> Result<AdmMassTable>
where
    F: Fn(f64, f64, f64) -> Result<(Matrix3<f64>, Matrix3<f64>)>,
{
    if radii.len() < 2 {
        return Err(CoreError::Precondition(
            "mass extrapolation needs at least two radii".into(),
        ));
    }
    let mut integrals = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut total = 0.0;
        for (_, _, theta, phi, w) in sphere.iter_nodes() {
            let (h, dh) = field(r, theta, phi)?;
            let s2 = theta.sin().powi(2);
            let t = h[(1, 1)] + h[(2, 2)] / s2;
            let dt = dh[(1, 1)] + dh[(2, 2)] / s2;
            let integrand = 2.0 * h[(0, 0)] / r + t / (r * r * r) - dt / (r * r);
            total += w * integrand;
        }
        integrals.push(r * r * total / (16.0 * std::f64::consts::PI));
    }
    let (mass, c, res) = fit_constant_plus_power(radii, &integrals, 1.0);
    Ok(AdmMassTable {
        radii: radii.to_vec(),
        integrals,
        mass,
        truncation_coefficient: c,
        fit_residual: res,
    })
}

/// Per-radius summary of the graph geometry (equatorial samples) plus the
/// mass table; serializable for reports.
#[derive(Clone, Debug, serde::Serialize)]
pub struct GraphGeometryReport {
    pub radii: Vec<f64>,
    pub gbar_rr: Vec<f64>,
    pub mean_curvature: Vec<f64>,
    /// `r²·q_r`, which tends to `−α`.
    pub r2_q_r: Vec<f64>,
    pub norm2_a: Vec<f64>,
    pub norm2_a_minus_k: Vec<f64>,
    pub scal_sy: Vec<f64>,
    /// Present only for radial graphs over spherically symmetric data.
    pub scal_direct: Option<Vec<f64>>,
    pub mass: AdmMassTable,
}

pub fn graph_geometry_report(
    graph: &RadialGraph,
    sphere: &SphereGrid,
    mass_radii: &[f64],
) -> Result<GraphGeometryReport> {
    let nodes = graph.grid().nodes().to_vec();
    let mut gbar_rr = Vec::with_capacity(nodes.len());
    let mut mean_curvature = Vec::with_capacity(nodes.len());
    let mut r2_q_r = Vec::with_capacity(nodes.len());
    let mut norm2_a = Vec::with_capacity(nodes.len());
    let mut norm2_amk = Vec::with_capacity(nodes.len());
    for &r in &nodes {
        let (gb, _) = graph.induced_metric(r, FRAC_PI_2, 0.0)?;
        gbar_rr.push(gb[(0, 0)]);
        let sf = graph.second_fundamental_form(r, FRAC_PI_2, 0.0)?;
        mean_curvature.push(sf.mean_curvature);
        norm2_a.push(sf.norm2_a);
        norm2_amk.push(sf.norm2_a_minus_k);
        r2_q_r.push(r * r * graph.q_oneform(r, FRAC_PI_2, 0.0)?[0]);
    }
    let sy = graph.scalar_curvature_sy(sphere)?;
    // equatorial sphere node: middle Gauss row, first φ node
    let np = sphere.phis().len();
    let eq = (sphere.thetas().len() / 2) * np;
    let scal_sy: Vec<f64> = sy.total.iter().map(|row| row[eq]).collect();
    let scal_direct = graph.scalar_curvature_direct().ok();
    let mass = adm_mass(|r, t, p| graph.metric_field(r, t, p), mass_radii, sphere)?;
    Ok(GraphGeometryReport {
        radii: nodes,
        gbar_rr,
        mean_curvature,
        r2_q_r,
        norm2_a,
        norm2_a_minus_k: norm2_amk,
        scal_sy,
        scal_direct,
        mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::fit_fixed_power_coefficient;
    use crate::initial_data::{
        energy_wang, make_hyperboloid_data, make_wang_data, SphereTensorField, WangDataSpec,
    };
    use approx::assert_abs_diff_eq;

    fn zero_psi() -> HarmonicCoeffs {
        HarmonicCoeffs::zero(2)
    }

    fn hyperboloid_graph(grid: &RadialGrid) -> RadialGraph {
        let data = make_hyperboloid_data();
        RadialGraph::jang_ansatz(&data, grid, 0.0, &zero_psi())
    }

    #[test]
    fn constant_graph_reproduces_base_metric() {
        let spec = WangDataSpec::m_sigma(2);
        let data = make_wang_data(&spec).unwrap();
        let grid = RadialGrid::logarithmic(2.0, 100.0, 12).unwrap();
        let g = RadialGraph::new(&data, &grid, Box::new(|_| (1.0, 0.0, 0.0)), &zero_psi());
        for &r in grid.nodes() {
            let (gbar, _) = g.induced_metric(r, 1.1, 0.4).unwrap();
            let base = data.metric(Point::new(r, 1.1, 0.4));
            assert!((gbar - base).norm() < 1e-14 * base.norm());
            let sf = g.second_fundamental_form(r, 1.1, 0.4).unwrap();
            assert!(sf.a.norm() < 1e-12);
            assert!(g.q_oneform(r, 1.1, 0.4).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn rank_one_inverse_is_exact() {
        let spec = WangDataSpec::m_and_p_sigma(2);
        let data = make_wang_data(&spec).unwrap();
        let grid = RadialGrid::logarithmic(3.0, 300.0, 10).unwrap();
        let psi = {
            let mut c = HarmonicCoeffs::zero(2);
            c.set(2, 1, 0.3);
            c.set(1, -1, -0.2);
            c
        };
        let g = RadialGraph::jang_ansatz(&data, &grid, 1.0, &psi);
        for &r in grid.nodes() {
            let (gbar, ginv) = g.induced_metric(r, 0.9, 2.0).unwrap();
            let idm = ginv * gbar - Matrix3::identity();
            assert!(
                idm.norm() < 1e-12 * gbar.norm(),
                "inverse defect {:.3e} at r = {r}",
                idm.norm()
            );
        }
    }

    #[test]
    fn hyperboloid_graph_is_umbilic_and_scalar_flat() {
        let grid = RadialGrid::logarithmic(0.5, 100.0, 60).unwrap();
        let g = hyperboloid_graph(&grid);
        let sphere = SphereGrid::new(2);
        for &r in grid.nodes() {
            let sf = g.second_fundamental_form(r, FRAC_PI_2, 0.0).unwrap();
            assert!(sf.norm2_a_minus_k < 1e-20, "|A−K|² = {:.3e}", sf.norm2_a_minus_k);
            // |A|² = 2 + (1+r²)^{-2} exactly for this graph
            let v = 1.0 + r * r;
            assert_abs_diff_eq!(sf.norm2_a, 2.0 + 1.0 / (v * v), epsilon = 1e-10);
            assert!(g.q_oneform(r, FRAC_PI_2, 0.0).unwrap().norm() < 1e-14);
        }
        let sy = g.scalar_curvature_sy(&sphere).unwrap();
        let sup = sy
            .total
            .iter()
            .flatten()
            .fold(0.0_f64, |a, &v| a.max(v.abs()));
        assert!(sup < 1e-8, "Schoen–Yau curvature {sup:.3e}");
        let direct = g.scalar_curvature_direct().unwrap();
        let supd = direct.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
        assert!(supd < 1e-7, "direct curvature {supd:.3e}");
    }

    #[test]
    fn wang_graph_tail_expansions() {
        let spec = WangDataSpec::m_sigma(2);
        let data = make_wang_data(&spec).unwrap();
        let alpha = 2.0 * energy_wang(&spec);
        assert_abs_diff_eq!(alpha, 1.0, epsilon = 1e-12);
        let grid = RadialGrid::logarithmic(1e2, 1e4, 40).unwrap();
        let g = RadialGraph::jang_ansatz(&data, &grid, alpha, &zero_psi());
        let rs: Vec<f64> = grid.nodes().to_vec();
        // ḡ_rr = 1 + 2α/r + O(r^{−2})
        let ys: Vec<f64> = rs
            .iter()
            .map(|&r| g.induced_metric(r, FRAC_PI_2, 0.0).unwrap().0[(0, 0)] - 1.0)
            .collect();
        let c = fit_fixed_power_coefficient(&rs, &ys, 1.0).unwrap();
        assert!((c / (2.0 * alpha) - 1.0).abs() < 0.02, "ḡ_rr coefficient {c:.4}");
        // q_r = −α/r² + O(r^{−3+ε})
        let qs: Vec<f64> = rs
            .iter()
            .map(|&r| g.q_oneform(r, FRAC_PI_2, 0.0).unwrap()[0])
            .collect();
        let cq = fit_fixed_power_coefficient(&rs, &qs, 2.0).unwrap();
        assert!((cq / (-alpha) - 1.0).abs() < 0.05, "q_r coefficient {cq:.4}");
        // |A|² = 2 + O(r^{−2})
        for &r in &rs {
            let sf = g.second_fundamental_form(r, FRAC_PI_2, 0.0).unwrap();
            assert!((sf.norm2_a - 2.0).abs() < 4.0 / (r * r), "|A|² at r = {r}");
        }
    }

    fn schwarzschild_field(m: f64) -> impl Fn(f64, f64, f64) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
        move |r: f64, theta: f64, _| {
            let f = 1.0 + 0.5 * m / r;
            let f4 = f.powi(4);
            let df4 = -2.0 * m / (r * r) * f.powi(3);
            let s2 = theta.sin().powi(2);
            let h = Matrix3::from_diagonal(&Vector3::new(f4, f4 * r * r, f4 * r * r * s2));
            let dh = Matrix3::from_diagonal(&Vector3::new(
                df4,
                df4 * r * r + 2.0 * r * f4,
                (df4 * r * r + 2.0 * r * f4) * s2,
            ));
            Ok((h, dh))
        }
    }

    #[test]
    fn adm_mass_of_schwarzschild_and_flat() {
        let sphere = SphereGrid::new(2);
        let radii: Vec<f64> = RadialGrid::logarithmic(1e3, 1e5, 20).unwrap().nodes().to_vec();
        let table = adm_mass(schwarzschild_field(0.7), &radii, &sphere).unwrap();
        assert_abs_diff_eq!(table.mass, 0.7, epsilon = 1e-6);
        let flat = adm_mass(
            |r, theta, _| {
                let s2 = theta.sin().powi(2);
                Ok((
                    Matrix3::from_diagonal(&Vector3::new(1.0, r * r, r * r * s2)),
                    Matrix3::from_diagonal(&Vector3::new(0.0, 2.0 * r, 2.0 * r * s2)),
                ))
            },
            &radii,
            &sphere,
        )
        .unwrap();
        assert!(table.fit_residual < 1e-6);
        assert!(flat.mass.abs() < 1e-12);
    }

    #[test]
    fn adm_mass_of_wang_graph_is_twice_the_energy() {
        let spec = WangDataSpec::m_sigma(2);
        let data = make_wang_data(&spec).unwrap();
        let grid = RadialGrid::logarithmic(1e2, 1e4, 24).unwrap();
        let g = RadialGraph::jang_ansatz(&data, &grid, 1.0, &zero_psi());
        let sphere = SphereGrid::new(4);
        let radii = grid.nodes().to_vec();
        let table = adm_mass(|r, t, p| g.metric_field(r, t, p), &radii, &sphere).unwrap();
        assert!(
            (table.mass - 1.0).abs() < 0.02,
            "ADM mass {:.5} (α = 2E = 1)",
            table.mass
        );
    }

    #[test]
    fn sy_and_direct_curvature_agree_at_second_order() {
        // refine the radial grid 2× and require the max discrepancy of the
        // two scalar-curvature routes to drop at order ≥ 1.8. The identity
        // behind the Schoen–Yau route holds for Jang solutions, so each
        // profile must solve the equation to below the stencl error:
        // the hyperboloid's exact solution is sampled directly, the m = σ
        // family is solved with a negligible regularization. Profiles are
        // given by node samples (derivatives by the solver's stencils) so
        // both routes carry genuine O(h²) discretization error; the
        // comparison window stays clear of the one-sided boundary stencils.
        use crate::jang::{solve_regularized_bvp, InnerCondition, JangProblem};
        let sphere = SphereGrid::new(2);
        let eq = (sphere.thetas().len() / 2) * sphere.phis().len();
        for family in ["hyperboloid", "wang"] {
            let spec = WangDataSpec::m_sigma(2);
            let barriers = if family == "wang" {
                Some(crate::barriers::assemble_barriers(&spec, 4.0, 2e4, 24).unwrap())
            } else {
                None
            };
            // outer radius snapped to a barrier node so the boundary value
            // can be read off the barrier midline directly
            let outer = barriers
                .as_ref()
                .map(|b| {
                    *b.grid()
                        .nodes()
                        .iter()
                        .min_by(|a, c| {
                            (*a - 40.0).abs().partial_cmp(&(*c - 40.0).abs()).unwrap()
                        })
                        .unwrap()
                })
                .unwrap_or(40.0);
            let gap = |n: usize| -> f64 {
                let grid = RadialGrid::logarithmic(4.0, outer, n).unwrap();
                let (data, f) = if family == "hyperboloid" {
                    let f: Vec<f64> =
                        grid.nodes().iter().map(|&r| (1.0 + r * r).sqrt()).collect();
                    (make_hyperboloid_data(), f)
                } else {
                    let data = make_wang_data(&spec).unwrap();
                    let barriers = barriers.as_ref().unwrap();
                    let mid = |r: f64| {
                        let i = barriers
                            .grid()
                            .nodes()
                            .iter()
                            .position(|&x| (x / r - 1.0).abs() < 1e-9)
                            .unwrap();
                        0.5 * (barriers.phi(BarrierSide::Upper, i)
                            + barriers.phi(BarrierSide::Lower, i))
                    };
                    let problem = JangProblem {
                        data: data.clone(),
                        grid: grid.clone(),
                        tau: 1e-10,
                        boundary_value: mid(outer),
                        inner: InnerCondition::Dirichlet(mid(4.0)),
                    };
                    let sol = solve_regularized_bvp(&problem, barriers).unwrap();
                    (data, sol.f)
                };
                let g = RadialGraph::from_samples(&data, &grid, &f, &zero_psi()).unwrap();
                let sy = g.scalar_curvature_sy(&sphere).unwrap();
                let direct = g.scalar_curvature_direct().unwrap();
                (0..grid.len())
                    .filter(|&i| (8.0..=20.0).contains(&grid.nodes()[i]))
                    .map(|i| (sy.total[i][eq] - direct[i]).abs())
                    .fold(0.0_f64, f64::max)
            };
            let (coarse, fine) = (gap(81), gap(161));
            let order = (coarse / fine).log2();
            assert!(
                order >= 1.8,
                "{family}: gaps {coarse:.3e} → {fine:.3e}, order {order:.2}"
            );
        }
    }

    #[test]
    fn leading_curvature_profile_is_twice_the_sphere_laplacian_of_psi() {
        // m = σ plus an l = 2 perturbation, so ψ has genuine angular content
        let mut m = SphereTensorField::round(2, 1.0);
        m.c11.set(2, 0, 0.4);
        m.c22.set(2, 0, 0.4);
        let spec = WangDataSpec::new(m, SphereTensorField::zero(2));
        let data = make_wang_data(&spec).unwrap();
        let alpha = 2.0 * energy_wang(&spec);
        let psi = crate::barriers::psi_from_spec(&spec, alpha).unwrap();
        let lap = psi.laplacian();
        // the limit is approached at O(1/r) (the 2|q|² term), so probe far out
        let r0 = 500.0;
        let grid = RadialGrid::logarithmic(r0 / 1.5, r0 * 1.5, 24).unwrap();
        let g = RadialGraph::jang_ansatz(&data, &grid, alpha, &psi);
        let sphere = SphereGrid::new(6);
        let sy = g.scalar_curvature_sy(&sphere).unwrap();
        let div = &sy.div_q;
        let ir = grid.len() / 2;
        let r = grid.nodes()[ir];
        let np = sphere.phis().len();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (it, ip, theta, phi, _) in sphere.iter_nodes() {
            let target = 2.0 * lap.eval(theta, phi);
            scale = scale.max(target.abs());
            let got = r.powi(3) * sy.total[ir][it * np + ip];
            worst = worst.max((got - target).abs());
            // div^ḡ q = −Δψ/r³ + O(r^{−4})
            let dq = r.powi(3) * div[ir][it * np + ip];
            assert!(
                (dq + target / 2.0).abs() < 0.1 * (1.0 + target.abs() / 2.0),
                "div q·r³ = {dq:.4} vs −Δψ = {:.4}",
                -target / 2.0
            );
        }
        assert!(worst < 0.1 * scale, "r³·Scal mismatch {worst:.3e} (scale {scale:.3e})");
    }

    #[test]
    fn barrier_graph_mass_matches_ansatz_graph_mass() {
        let spec = WangDataSpec::m_sigma(2);
        let data = make_wang_data(&spec).unwrap();
        let barriers = crate::barriers::assemble_barriers(&spec, 1.0, 2e4, 24).unwrap();
        let g_minus = RadialGraph::from_barrier(&data, &barriers, BarrierSide::Lower).unwrap();
        let sphere = SphereGrid::new(4);
        let radii: Vec<f64> = barriers
            .grid()
            .nodes()
            .iter()
            .copied()
            .filter(|&r| (1e2..=1e4).contains(&r))
            .collect();
        let t1 = adm_mass(|r, t, p| g_minus.metric_field(r, t, p), &radii, &sphere).unwrap();
        let grid = RadialGrid::logarithmic(1e2, 1e4, 24).unwrap();
        let g = RadialGraph::jang_ansatz(&data, &grid, 1.0, &zero_psi());
        let t2 = adm_mass(|r, t, p| g.metric_field(r, t, p), &radii, &sphere).unwrap();
        assert!(
            (t1.mass - t2.mass).abs() < 0.05,
            "barrier-graph mass {:.4} vs ansatz-graph mass {:.4}",
            t1.mass,
            t2.mass
        );
    }

    #[test]
    fn mass_is_invariant_under_vertical_translation() {
        let data = make_hyperboloid_data();
        let grid = RadialGrid::logarithmic(1e2, 1e4, 16).unwrap();
        let sphere = SphereGrid::new(2);
        let radii = grid.nodes().to_vec();
        let base = RadialGraph::jang_ansatz(&data, &grid, 0.3, &zero_psi());
        let shifted = RadialGraph::new(
            &data,
            &grid,
            Box::new(|r: f64| {
                let v = 1.0 + r * r;
                (
                    v.sqrt() + 0.3 * r.ln() + 17.0,
                    r / v.sqrt() + 0.3 / r,
                    v.powf(-1.5) - 0.3 / (r * r),
                )
            }),
            &zero_psi(),
        );
        let t1 = adm_mass(|r, t, p| base.metric_field(r, t, p), &radii, &sphere).unwrap();
        let t2 = adm_mass(|r, t, p| shifted.metric_field(r, t, p), &radii, &sphere).unwrap();
        assert_eq!(t1.mass, t2.mass, "ḡ depends on df only");
    }

    #[test]
    fn report_assembles_for_a_solved_profile() {
        let data = make_hyperboloid_data();
        let grid = RadialGrid::logarithmic(1.0, 50.0, 40).unwrap();
        let f: Vec<f64> = grid.nodes().iter().map(|&r| (1.0 + r * r).sqrt()).collect();
        let g = RadialGraph::from_samples(&data, &grid, &f, &zero_psi()).unwrap();
        let sphere = SphereGrid::new(2);
        let radii: Vec<f64> = grid.nodes().iter().copied().filter(|&r| r >= 10.0).collect();
        let rep = graph_geometry_report(&g, &sphere, &radii).unwrap();
        assert_eq!(rep.radii.len(), grid.len());
        assert!(rep.scal_direct.is_some());
        assert!(rep.mass.mass.abs() < 0.05, "hyperboloid graph mass {:.3e}", rep.mass.mass);
    }
}
