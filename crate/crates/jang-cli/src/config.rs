//! Run configuration: JSON schema, builtin data families, validation, and
//! the deterministic config hash recorded in the run manifest.
//!
//! A config document looks like
//!
//! ```json
//! {
//!   "data": "wang_m_sigma",
//!   "grid": { "inner": 2.0, "outer": 1000.0, "nodes": 24 },
//!   "sphere_degree": 8,
//!   "mass": { "inner": 100.0, "outer": 10000.0, "nodes": 16 },
//!   "barriers": { "inner": 0.25, "outer": 10000.0, "nodes_per_decade": 24 },
//!   "solve": {
//!     "schedule": [[3.5, 1e-4], [3.5, 5e-5], [3.5, 2.5e-5]],
//!     "region": [0.3, 3.0],
//!     "nodes_per_decade": 120
//!   },
//!   "geometry": { "inner": 1.0, "outer": 10000.0, "nodes": 320 },
//!   "out": "runs/m-sigma"
//! }
//! ```
//!
//! `data` is either the name of a builtin family (`"hyperboloid"`,
//! `"wang_m_sigma"`, `"wang_mp"`) or an inline coefficient document with the
//! shape accepted by [`WangDataSpecDoc`]. Every section other than `data`
//! has defaults, so `{"data": "hyperboloid"}` is a complete config.

use jang_core::initial_data::{SphereTensorField, WangDataSpec, WangDataSpecDoc};
use serde::{Deserialize, Serialize};

/// Initial-data selection: a builtin family name or inline coefficients.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataConfig {
    Builtin(String),
    Inline(WangDataSpecDoc),
}

/// Logarithmic radial grid given by endpoints and a total node count.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub inner: f64,
    pub outer: f64,
    pub nodes: usize,
}

/// Barrier assembly window; the asymptotic constants come from the data.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    pub inner: f64,
    pub outer: f64,
    pub nodes_per_decade: usize,
}

/// Regularization schedule and Cauchy-comparison region for the solve stage.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    /// `(R, τ)` stages: nondecreasing domain radii, decreasing τ.
    pub schedule: Vec<(f64, f64)>,
    /// Fixed inner interval on which consecutive iterates are compared.
    pub region: (f64, f64),
    pub nodes_per_decade: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    /// Sampling grid for the constraint sweep.
    #[serde(default = "default_grid")]
    pub grid: GridConfig,
    /// Quadrature degree for sphere integrals and constraint sampling.
    #[serde(default = "default_sphere_degree")]
    pub sphere_degree: usize,
    /// Evaluation radii for the mass surface integrals.
    #[serde(default = "default_mass")]
    pub mass: GridConfig,
    #[serde(default = "default_barriers")]
    pub barriers: BarrierConfig,
    #[serde(default = "default_solve")]
    pub solve: SolveConfig,
    /// Grid of the Jang graph for the geometry and conformal stages.
    #[serde(default = "default_geometry")]
    pub geometry: GridConfig,
    /// Output directory; overridden by `--out`.
    #[serde(default)]
    pub out: Option<String>,
}

fn default_grid() -> GridConfig {
    GridConfig {
        inner: 2.0,
        outer: 1e3,
        nodes: 24,
    }
}

fn default_sphere_degree() -> usize {
    8
}

fn default_mass() -> GridConfig {
    GridConfig {
        inner: 1e2,
        outer: 1e4,
        nodes: 16,
    }
}

fn default_barriers() -> BarrierConfig {
    BarrierConfig {
        inner: 0.25,
        outer: 1e4,
        nodes_per_decade: 24,
    }
}

fn default_solve() -> SolveConfig {
    SolveConfig {
        schedule: vec![(3.5, 1e-4), (3.5, 5e-5), (3.5, 2.5e-5)],
        region: (0.3, 3.0),
        nodes_per_decade: 120,
    }
}

fn default_geometry() -> GridConfig {
    GridConfig {
        inner: 1.0,
        outer: 1e4,
        nodes: 320,
    }
}

impl PipelineConfig {
    /// Parse and validate a config document. Any failure here maps to
    /// exit code 2.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| format!("config parse error: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.resolve_spec()?;
        check_grid("grid", &self.grid)?;
        check_grid("mass", &self.mass)?;
        check_grid("geometry", &self.geometry)?;
        if self.sphere_degree < 2 {
            return Err("sphere_degree must be at least 2".into());
        }
        if self.mass.nodes < 2 {
            return Err("mass grid needs at least two radii".into());
        }
        let b = &self.barriers;
        if !(b.inner > 0.0 && b.outer > b.inner) {
            return Err(format!(
                "barriers window [{}, {}] is not an increasing positive interval",
                b.inner, b.outer
            ));
        }
        if b.nodes_per_decade < 4 {
            return Err("barriers.nodes_per_decade must be at least 4".into());
        }
        let s = &self.solve;
        if s.schedule.len() < 2 {
            return Err("solve.schedule needs at least two (R, tau) stages".into());
        }
        for &(r, tau) in &s.schedule {
            if !(r > 0.0 && tau > 0.0) {
                return Err(format!("solve.schedule entry ({r}, {tau}) must be positive"));
            }
        }
        for w in s.schedule.windows(2) {
            if w[1].0 < w[0].0 || w[1].1 >= w[0].1 {
                return Err(
                    "solve.schedule must have nondecreasing R and strictly decreasing tau".into(),
                );
            }
        }
        let (a, c) = s.region;
        if !(a > 0.0 && c > a && c <= s.schedule[0].0) {
            return Err(format!(
                "solve.region [{a}, {c}] must lie inside the first schedule domain"
            ));
        }
        if s.nodes_per_decade < 4 {
            return Err("solve.nodes_per_decade must be at least 4".into());
        }
        Ok(())
    }

    /// Resolve the data section to a coefficient spec. Builtins:
    /// `hyperboloid` (zero coefficients, the exact hyperboloid data),
    /// `wang_m_sigma` (round metric perturbation `m = σ`, `p = 0`),
    /// `wang_mp` (`m = σ` and `p = σ`).
    pub fn resolve_spec(&self) -> Result<WangDataSpec, String> {
        match &self.data {
            DataConfig::Builtin(name) => match name.as_str() {
                "hyperboloid" => Ok(WangDataSpec::new(
                    SphereTensorField::zero(2),
                    SphereTensorField::zero(2),
                )),
                "wang_m_sigma" => Ok(WangDataSpec::m_sigma(2)),
                "wang_mp" => Ok(WangDataSpec::m_and_p_sigma(2)),
                other => Err(format!(
                    "unknown data family {other:?}; builtins are \
                     \"hyperboloid\", \"wang_m_sigma\", \"wang_mp\""
                )),
            },
            DataConfig::Inline(doc) => doc.clone().into_spec().map_err(|e| e.to_string()),
        }
    }

    /// FNV-1a hash of the canonical serialization, hex-encoded. Field order
    /// is fixed by the struct definition, so equal configs hash equally.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

fn check_grid(name: &str, g: &GridConfig) -> Result<(), String> {
    if !(g.inner > 0.0 && g.outer > g.inner) {
        return Err(format!(
            "{name} window [{}, {}] is not an increasing positive interval",
            g.inner, g.outer
        ));
    }
    if g.nodes < 2 {
        return Err(format!("{name}.nodes must be at least 2"));
    }
    Ok(())
}
