//! Numerical toolkit for the Jang equation over asymptotically hyperbolic
//! initial data.
//!
//! The crate implements the computational pipeline that connects the mass of
//! an asymptotically hyperbolic initial data set `(M, g, K)` to the ADM mass
//! of an asymptotically Euclidean metric obtained by solving the Jang
//! equation and conformally deforming its graph:
//!
//! 1. [`initial_data`] — construct data sets with Wang asymptotics
//!    (`g = dr²/(1+r²) + r²(σ + m r⁻³ + …)`), evaluate the constraint
//!    quantities `μ`, `J`, the dominant energy margin, and the mass vector
//!    `(E, P)` from surface integrals of the mass functional.
//! 2. [`barriers`] — build upper/lower barriers `f± = φ±(r) + ψ(θ,φ)` for
//!    the Jang equation by adaptive integration of the first-order equations
//!    obtained from the substitution `k = φ'√(1+r²)/√(1+(1+r²)φ'²)`.
//! 3. [`jang`] — evaluate the Jang operator `H_g(f) − tr_g(K)(f)` and solve
//!    the capillarity-regularized equation `H_g(f) − tr_g(K)(f) = τf` in
//!    spherical symmetry, with a `τ → 0`, growing-domain schedule producing
//!    the geometric solution's graphing function.
//! 4. [`graph`] — induced metric `ḡ = g + df⊗df` of the Jang graph, second
//!    fundamental form, the 1-form `q`, scalar curvature by the Schoen–Yau
//!    identity and by a direct route, and the ADM mass (which equals `2E`).
//! 5. [`conformal`] — zero-scalar-curvature conformal factor on the graph,
//!    the expansion coefficient `A` of `u = 1 + A/r + …`, and the mass chain
//!    `E ≥ M(u⁴ḡ) = α + 2A` with `α = 2E`.
//!
//! Shared numerical substrate (grids, spherical harmonics, quadrature,
//! Christoffel symbols, decay-rate fitting, adaptive Runge–Kutta) lives in
//! [`geometry`], [`harmonics`], [`fitting`] and [`ode`].
//!
//! All operations are pure functions of immutable inputs and are safe to
//! call concurrently.

pub mod barriers;
pub mod conformal;
pub mod error;
pub mod fitting;
pub mod geometry;
pub mod graph;
pub mod harmonics;
pub mod initial_data;
pub mod jang;
pub mod ode;

pub use error::CoreError;
pub use geometry::{RadialGrid, SpacingMode, SphereGrid};
pub use harmonics::HarmonicCoeffs;
pub use initial_data::{ConstraintReport, InitialData, WangDataSpec};
pub use barriers::{BarrierODEParams, BarrierSolution};
pub use jang::{InnerCondition, JangProblem, JangSolution};
pub use graph::{GraphGeometryReport, RadialGraph};
pub use conformal::{ConformalSolve, MassChainReport};

/// Crate version, for embedding in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
